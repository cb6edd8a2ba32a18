#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctune/domain.hpp"
#include "ctune/importance.hpp"
#include "ctune/loop.hpp"
#include "ctune/model.hpp"
#include "ctune/optim.hpp"
#include "ctune/phantom.hpp"
#include "ctune/train.hpp"

namespace ctune {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* kFormatVersion = "1.0";
inline constexpr int kFormatMajor = 1;

// Rejects versions whose major component differs from kFormatMajor.
void check_format_version(const std::string& version, const std::string& what);

// ---- masks ---------------------------------------------------------------

// Run lengths over the row-major pixels, alternating 0-runs and 1-runs and
// starting with a (possibly empty) 0-run.
std::vector<std::uint32_t> rle_encode(const Mask& mask);
Mask rle_decode(const std::vector<std::uint32_t>& runs, GridDims dims);

// ---- datasets ------------------------------------------------------------

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<Scan> scans;
};

// manifest.json + images/<id>.f32 (float32 LE) with a JSON sidecar +
// masks/<id>/<tag>/<class>.rle.
void save_dataset(const fs::path& dir, const std::vector<Scan>& scans, const ClassCatalog& catalog);
LoadedDataset load_dataset(const fs::path& dir, bool verify_digests = true);

// ---- checkpoints ---------------------------------------------------------

struct CheckpointProvenance {
  std::string config_digest;
  int epoch = 0;
  int round = 0;
  std::string regime;
  ClassSet learned_classes;
};

struct Checkpoint {
  std::string format_version = kFormatVersion;
  ModelParams params;
  std::optional<OptimizerState> optimizer;
  CheckpointProvenance provenance;
};

// "CTCK" magic, little-endian u64 header length, JSON header, float64 LE payload.
void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const fs::path& path);
// Also requires the stored structure to match `arch` and `classes` exactly.
Checkpoint load_checkpoint(const fs::path& path, const ArchConfig& arch, const ClassSet& classes);

// ---- configs -------------------------------------------------------------

json to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const json& j, ArchConfig base = {});
json to_json(const TuningConfig& t);
TuningConfig tuning_from_json(const json& j, TuningConfig base = TuningConfig::desk());
json to_json(const ClassCatalog& catalog);
ClassCatalog catalog_from_json(const json& j);
json to_json(const ExperimentConfig& config);
// Missing keys fall back to ExperimentConfig::desk_reference().
ExperimentConfig experiment_from_json(const json& j);
ExperimentConfig load_experiment_config(const fs::path& path, const std::vector<std::string>& overrides = {});
// Applies "a.b.c=value" overrides; values parse as JSON when possible, else as strings.
void apply_overrides(json& j, const std::vector<std::string>& overrides);
std::string config_digest(const ExperimentConfig& config);

// ---- logs and tables -----------------------------------------------------

json to_json(const RoundRecord& record, const ClassCatalog& catalog);
json to_json(const EpochRecord& record, const ClassCatalog& catalog);

std::string render_scores_csv(const std::vector<ScanScore>& scores);
std::string render_round_scores(const std::vector<RoundRecord>& records);
struct ScoreTable {
  std::vector<ScanScore> scores;
  std::vector<std::string> regime;  // empty when the column is absent
  std::vector<int> round;
};
ScoreTable read_scores_csv(const fs::path& path);

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);

// Exclusive writer for one experiment output directory (held via a lock file).
class RunDirectory {
 public:
  RunDirectory(fs::path dir, ClassCatalog catalog);
  ~RunDirectory();
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  const fs::path& path() const { return dir_; }
  void append_round(const RoundRecord& record);
  void append_history(const std::string& run, int round, const TrainHistory& history);

 private:
  fs::path dir_;
  ClassCatalog catalog_;
};

}  // namespace ctune
