#include "ctune/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "ctune/persistence.hpp"

namespace ctune {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Fixed palette so colours do not depend on class order across runs.
const char* colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

}  // namespace

std::vector<CurvePoint> read_curves(const fs::path& run_dir) {
  const fs::path path = run_dir / "history.jsonl";
  if (!fs::exists(path)) throw IoError("no history.jsonl in " + run_dir.string());
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<CurvePoint> points;
  std::map<std::string, int> offset;  // per run: epochs seen in earlier rounds
  std::map<std::pair<std::string, int>, int> last_epoch;
  const std::string source = run_dir.filename().empty() ? run_dir.parent_path().filename().string()
                                                        : run_dir.filename().string();
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      check_format_version(j.at("format_version").get<std::string>(), path.string());
      const std::string run = j.at("run").get<std::string>();
      const int round = j.at("round").get<int>();
      const int epoch = j.at("epoch").get<int>();
      auto key = std::make_pair(run, round);
      if (!last_epoch.count(key)) {
        // A new round of this run starts after every epoch already recorded.
        int seen = 0;
        for (const auto& [k, e] : last_epoch) {
          if (k.first == run) seen += e;
        }
        offset[run + "#" + std::to_string(round)] = seen;
      }
      last_epoch[key] = std::max(last_epoch[key], epoch);
      const int step = offset[run + "#" + std::to_string(round)] + epoch;
      for (const auto& [name, v] : j.at("validation_dsc").items()) {
        points.push_back({source, run, round, epoch, step, name, v.get<double>()});
      }
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return points;
}

std::string render_curves_csv(const std::vector<CurvePoint>& points) {
  std::string out = std::string("# format_version: ") + kFormatVersion + "\nsource,run,round,epoch,step,class,dsc\n";
  for (const auto& p : points) {
    out += p.source + "," + p.run + "," + std::to_string(p.round) + "," + std::to_string(p.epoch) + "," +
           std::to_string(p.step) + "," + p.class_name + "," + fmt("%.6f", p.dsc) + "\n";
  }
  return out;
}

std::string render_curve_svg(const std::string& title, const std::vector<CurvePoint>& points) {
  constexpr double W = 640, H = 400, L = 56, R = 150, T = 36, B = 44;
  int max_step = 1;
  std::vector<std::string> classes;
  std::set<int> round_starts;
  std::map<int, int> first_step;
  for (const auto& p : points) {
    max_step = std::max(max_step, p.step);
    if (std::find(classes.begin(), classes.end(), p.class_name) == classes.end()) classes.push_back(p.class_name);
    auto it = first_step.find(p.round);
    if (it == first_step.end() || p.step < it->second) first_step[p.round] = p.step;
  }
  auto px = [&](double step) { return L + (W - L - R) * step / max_step; };
  auto py = [&](double dsc) { return T + (H - T - B) * (1.0 - dsc); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(title)
      << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    svg << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << fmt("%.2f", py(v)) << "\" y2=\""
        << fmt("%.2f", py(v)) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << L - 6 << "\" y=\"" << fmt("%.2f", py(v) + 4) << "\" text-anchor=\"end\">"
        << fmt("%.1f", v) << "</text>\n";
  }
  for (const auto& [round, step] : first_step) {
    if (step <= 1) continue;
    svg << "<line x1=\"" << fmt("%.2f", px(step - 0.5)) << "\" x2=\"" << fmt("%.2f", px(step - 0.5)) << "\" y1=\""
        << T << "\" y2=\"" << H - B << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  svg << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << H - B << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" x2=\"" << L << "\" y1=\"" << T << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">epoch</text>\n";
  svg << "<text x=\"14\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 14 " << (T + H - B) / 2
      << ")\" text-anchor=\"middle\">validation DSC</text>\n";
  svg << "<text x=\"" << W - R << "\" y=\"" << H - B + 14 << "\" text-anchor=\"end\">" << max_step << "</text>\n";

  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::pair<int, double>> series;
    for (const auto& p : points) {
      if (p.class_name == classes[c]) series.emplace_back(p.step, p.dsc);
    }
    std::sort(series.begin(), series.end());
    svg << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << colour(c) << "\" points=\"";
    for (const auto& [s, v] : series) svg << fmt("%.2f", px(s)) << "," << fmt("%.2f", py(v)) << " ";
    svg << "\"/>\n";
    const double ly = T + 14.0 * static_cast<double>(c) + 6;
    svg << "<line x1=\"" << W - R + 10 << "\" x2=\"" << W - R + 28 << "\" y1=\"" << ly << "\" y2=\"" << ly
        << "\" stroke=\"" << colour(c) << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << W - R + 32 << "\" y=\"" << ly + 4 << "\">" << xml_escape(classes[c]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<fs::path> write_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw ContractError("report: no run directories given");
  // Read everything before touching the output directory.
  std::vector<std::vector<CurvePoint>> per_dir;
  for (const auto& dir : run_dirs) per_dir.push_back(read_curves(dir));
  std::vector<CurvePoint> all;
  std::vector<fs::path> written;
  fs::create_directories(out_dir);
  for (const auto& points : per_dir) {
    std::vector<std::string> runs;
    for (const auto& p : points) {
      if (std::find(runs.begin(), runs.end(), p.run) == runs.end()) runs.push_back(p.run);
    }
    for (const auto& run : runs) {
      std::vector<CurvePoint> subset;
      for (const auto& p : points) {
        if (p.run == run) subset.push_back(p);
      }
      if (subset.empty()) continue;
      const fs::path svg = out_dir / ("curves_" + sanitize(subset.front().source) + "_" + sanitize(run) + ".svg");
      write_text_file(svg, render_curve_svg(subset.front().source + ": " + run, subset));
      written.push_back(svg);
    }
    all.insert(all.end(), points.begin(), points.end());
  }
  const fs::path csv = out_dir / "curves.csv";
  write_text_file(csv, render_curves_csv(all));
  written.insert(written.begin(), csv);
  return written;
}

}  // namespace ctune
