#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ctune {

// One validation-DSC sample read back from a history.jsonl log.
struct CurvePoint {
  std::string source;  // run directory label
  std::string run;     // "base" or a regime name
  int round = 0;
  int epoch = 0;
  int step = 0;  // epoch index accumulated over the rounds of one run
  std::string class_name;
  double dsc = 0.0;
};

std::vector<CurvePoint> read_curves(const std::filesystem::path& run_dir);
std::string render_curves_csv(const std::vector<CurvePoint>& points);
// Line chart of DSC against accumulated epoch, one polyline per class.
std::string render_curve_svg(const std::string& title, const std::vector<CurvePoint>& points);

// Writes curves.csv plus one SVG per (run directory, run). Output depends on
// the logs only; returns the written paths.
std::vector<std::filesystem::path> write_report(const std::vector<std::filesystem::path>& run_dirs,
                                                const std::filesystem::path& out_dir);

}  // namespace ctune
