#pragma once

// Task construction: centering, PC and LR axis families, label binarization,
// target-layer selection and trial sampling.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geolab/repstore.hpp"

namespace geolab {

/// A task-defining direction in one target layer.
struct TaskAxis {
  AxisFamily family = AxisFamily::PC;
  int rank = 0;  // 1-based PC rank; 0 for LR
  LayerId target_layer = 0;
  Vector direction;        // unit norm
  double intercept = 0.0;  // LR only
  Vector center;           // training-split mean used at fit time
  double singular_value = 0.0;  // PC only

  AxisRef ref() const { return AxisRef{family, rank, target_layer}; }
  /// "L<layer>-PC<k>" or "L<layer>-LR".
  std::string condition_id() const;
};

std::string condition_id_for(const AxisRef& ref);

struct CenteredData {
  Matrix centered;
  Vector mean;
};

/// Subtract column means. Requires at least two rows.
CenteredData center(const Matrix& x);

/// Principal axes of a centered matrix for the requested 1-based ranks.
///
/// Uses a thin SVD; the axis for rank k is the k-th right singular vector
/// with its largest-magnitude coordinate made positive (first such
/// coordinate on ties).
std::vector<TaskAxis> pca_axes(const CenteredData& data, std::span<const int> ranks, LayerId layer);

inline constexpr double kDefaultLrL2 = 1e-2;

struct LrOptions {
  double l2 = kDefaultLrL2;
  double gradient_tol = 1e-6;
  int max_iterations = 200;
};

struct LrDiagnostics {
  int iterations = 0;
  double gradient_norm = 0.0;
  double training_accuracy = 0.0;
};

/// L2-regularized logistic regression with intercept, solved by truncated
/// Newton (conjugate-gradient inner solves on Hessian-vector products).
/// Objective: mean log-loss + l2/2 * |w|^2 (intercept unpenalized).
/// Returned direction is w/|w| and the intercept is scaled by the same factor.
TaskAxis fit_lr_axis(const CenteredData& data, std::span<const int> labels, LayerId layer,
                     const LrOptions& options = {}, LrDiagnostics* diagnostics = nullptr);

/// Induced labels for one condition over a pool of examples.
struct LabelAssignment {
  std::string condition_id;
  AxisRef axis;
  std::vector<std::int64_t> example_indices;  // manifest row of each pool entry
  std::vector<int> labels;
  Vector projections;
  double class1_fraction = 0.0;
  bool degenerate = false;  // every label identical
};

/// a_i = <w, xc_i> + b, y_i = 1[a_i > 0]. Rows of `centered` must already be
/// centered with the axis' training center.
LabelAssignment binarize(const Matrix& centered, const TaskAxis& axis);

/// Label raw (uncentered) rows, centering them with axis.center first.
/// `example_indices` names the manifest row of each input row.
LabelAssignment label_examples(const Matrix& raw, const TaskAxis& axis, std::vector<std::int64_t> example_indices);

/// Layers round(j/(count+1) * n_layers) for j = 1..count, deduplicated.
std::vector<LayerId> select_target_layers(int n_layers, int count = 5);

struct ExampleSplit {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> eval;
};

/// Deterministic shuffle-and-cut of [0, n) into fit and held-out parts.
ExampleSplit split_examples(std::int64_t n, double eval_fraction, std::uint64_t seed);

inline constexpr int kDefaultSeqLen = 500;
inline constexpr int kDefaultNumSequences = 100;

/// n_seq sequences drawn without replacement (within a sequence) from the
/// pool, each followed by its label-flipped complement. Sequence s uses the
/// counter stream keyed by (seed, s).
TrialSet sample_trials(const LabelAssignment& pool, int seq_len, int n_seq, std::uint64_t seed);

void save_axes(const fs::path& path, std::span<const TaskAxis> axes, const ExampleSplit& split);
std::vector<TaskAxis> load_axes(const fs::path& path, ExampleSplit* split = nullptr);

void save_labels(const fs::path& path, std::span<const LabelAssignment> labels);
std::vector<LabelAssignment> load_labels(const fs::path& path);

}  // namespace geolab
