#pragma once

// Batch stages behind the geolab command line. Each stage reads and writes
// the interchange formats, so stages can run separately or chained by run().

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geolab/analysis.hpp"
#include "geolab/learners.hpp"
#include "geolab/repstore.hpp"
#include "geolab/taskgen.hpp"

namespace geolab {

struct PipelineConfig {
  fs::path manifest;
  fs::path out_dir = "out";
  fs::path axes;            // axes.json (input of label, output of axes)
  fs::path labels;          // labels.json
  fs::path trials;          // trials.jsonl
  fs::path metrics;         // metrics.csv (input of correlate)
  fs::path dataset_labels;  // JSON array of 0/1 per manifest example, for the LR family
  std::string model;        // overrides the manifest's model_name in output tables
  std::string dataset;

  std::vector<AxisFamily> families{AxisFamily::PC, AxisFamily::LR};
  std::vector<int> ranks{1, 2, 4, 8, 32, 128, 512};
  int layers_count = 5;
  std::optional<LayerId> record_layer;  // default: final manifest layer
  double eval_fraction = 0.5;
  double l2 = kDefaultLrL2;

  int seq_len = kDefaultSeqLen;
  int n_seq = kDefaultNumSequences;
  std::uint64_t seed = 0;

  int n_probes = kDefaultProbes;
  double kappa = 0.0;
  int m = 1;
  std::vector<int> positions;  // empty: 1 and every len/20-th position

  FitMode fit_mode = FitMode::Pooled;
  std::map<LearnerKind, std::vector<LearnerConfig>> grids;  // empty entries use default_grid

  unsigned threads = 0;  // 0: GEOLAB_THREADS or 1
  std::string synth;     // "graded" runs on the synthetic suite
};

/// Parse a JSON config document. Unknown keys are rejected.
PipelineConfig load_config(const fs::path& path);

std::vector<LearnerConfig> grid_for(const PipelineConfig& config, LearnerKind kind);
std::vector<int> evaluation_positions(const PipelineConfig& config, int seq_len);

struct IngestSummary {
  Manifest manifest;
  std::vector<std::pair<LayerId, double>> layer_norms;  // mean row norm per layer
};

IngestSummary cmd_ingest(const PipelineConfig& config);

struct AxesResult {
  std::vector<TaskAxis> axes;
  ExampleSplit split;
  std::vector<std::string> notes;
};

/// PC (and LR, when dataset labels are supplied) axes for each selected
/// target layer, fit on the training split. Writes config.axes or out_dir/axes.json.
AxesResult cmd_axes(const PipelineConfig& config);

/// Binarize held-out examples under every axis. Writes labels.json.
std::vector<LabelAssignment> cmd_label(const PipelineConfig& config);

/// Sample trials for every labeled condition. Writes trials.jsonl.
std::vector<TrialSet> cmd_sample(const PipelineConfig& config);

MetricsTable cmd_geometry(const PipelineConfig& config);
std::vector<FitRow> cmd_fit_learners(const PipelineConfig& config);
std::vector<CorrelationResult> cmd_correlate(const PipelineConfig& config);

/// Write the graded synthetic suite under out_dir (or out_dir/fixture from run).
void cmd_synth(const PipelineConfig& config);

struct RunSummary {
  std::vector<std::string> condition_lines;
  ReportSummary report;
};

/// Full pipeline over trials carrying reps and logits: geometry, accuracy,
/// learner fits, correlations, charts.
RunSummary cmd_run(const PipelineConfig& config);

}  // namespace geolab
