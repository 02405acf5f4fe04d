#pragma once

// Interchange formats shared with the extractor: manifest.json plus raw
// little-endian float32 tensors, trials.jsonl with per-trial side tensors, and
// the CSV output tables.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace geolab {

namespace fs = std::filesystem;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using LayerId = int;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kDtypeF32 = "f32le";

struct Manifest {
  int schema_version = kSchemaVersion;
  std::string model_name;
  std::string dataset_name;
  std::int64_t dim = 0;
  std::int64_t n_examples = 0;
  std::vector<LayerId> layers;
  std::map<LayerId, std::string> tensor_files;  // paths relative to base_dir
  std::string dtype = kDtypeF32;
  std::map<std::string, std::string> checksums;  // tensor path -> SHA-256 hex

  // Directory the relative tensor paths resolve against. Not serialized.
  fs::path base_dir;

  bool operator==(const Manifest& other) const;
};

/// Parse and fully validate a manifest: schema, dtype, layer uniqueness,
/// presence and byte length of every tensor file, and SHA-256 checksums.
Manifest load_manifest(const fs::path& path);

/// Write manifest.json. Keys are emitted in a fixed order.
void save_manifest(const Manifest& manifest, const fs::path& path);

/// Write `<layer>.f32` into manifest.base_dir and register it (file map,
/// checksum, layer list). dim/n_examples are set from the first layer.
void register_layer(Manifest& manifest, LayerId layer, const Matrix& data);

struct RepMatrix {
  LayerId layer = 0;
  Matrix data;  // N x d, row i = example i
};

RepMatrix load_rep_matrix(const Manifest& manifest, LayerId layer);

/// Raw tensor helpers. write_f32 returns the SHA-256 hex of the bytes written.
std::string write_f32(const fs::path& path, const Matrix& m);
Matrix read_f32(const fs::path& path, std::int64_t rows, std::int64_t cols);
std::string sha256_file(const fs::path& path);

// ---------------------------------------------------------------------------
// Trials

enum class AxisFamily { PC, LR };

std::string to_string(AxisFamily family);
AxisFamily parse_axis_family(const std::string& text);

struct AxisRef {
  AxisFamily family = AxisFamily::PC;
  int rank = 0;  // 0 for LR
  LayerId target_layer = 0;

  bool operator==(const AxisRef&) const = default;
};

struct Trial {
  std::vector<std::int64_t> sequence;  // example indices
  std::vector<int> shown_labels;       // each in {0,1}
  bool is_complement = false;
  std::optional<Matrix> logits;  // P x 2, columns = score tokens (0, 1)
  std::optional<Matrix> reps;    // P x d record-layer representations

  std::size_t length() const { return sequence.size(); }
};

struct TrialSet {
  std::string condition_id;
  AxisRef axis;
  std::vector<Trial> trials;

  std::size_t sequence_length() const { return trials.empty() ? 0 : trials.front().length(); }
  bool has_logits() const;
  bool has_reps() const;
};

/// Shape, label-range and complement-pairing checks. When n_examples is given
/// every example index must lie in [0, n_examples).
void validate_trials(const TrialSet& set, std::optional<std::int64_t> n_examples = std::nullopt);

/// Write trials.jsonl; logits and reps go to `<stem>.data/` next to it.
void save_trials(const fs::path& path, std::span<const TrialSet> sets);

/// Load trials.jsonl, grouping records by condition_id in first-seen order.
std::vector<TrialSet> load_trials(const fs::path& path);

// ---------------------------------------------------------------------------
// Output tables

struct MetricRow {
  std::string condition_id;
  std::string model;
  std::string dataset;
  std::string family;
  int rank = 0;
  LayerId target_layer = 0;
  int position = 0;
  std::string metric;
  std::optional<double> value;  // nullopt is written as an empty field
};

struct MetricsTable {
  std::vector<MetricRow> rows;

  /// Throws when (condition_id, position, metric) repeats or a value is non-finite.
  void validate() const;
  /// Rows ordered by (condition_id, position, metric).
  std::vector<MetricRow> sorted() const;
};

void save_metrics(const MetricsTable& table, const fs::path& path);
MetricsTable load_metrics(const fs::path& path);

struct FitRow {
  std::string condition_id;
  std::string learner;
  std::string hyperparams;
  double beta_star = 0.0;
  double agreement = 0.0;
  std::int64_t n_positions = 0;
};

void save_fits(std::span<const FitRow> rows, const fs::path& path);
std::vector<FitRow> load_fits(const fs::path& path);

/// Shortest-safe decimal text with 17 significant digits.
std::string format_real(double value);

/// Write text atomically enough for our purposes: truncate + write, throw on failure.
void write_text_file(const fs::path& path, const std::string& text);
std::string read_text_file(const fs::path& path);

}  // namespace geolab
