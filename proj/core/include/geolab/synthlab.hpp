#pragma once

// Synthetic generators and independent oracles. Everything here is a pure
// function of its options and seed.

#include <cstdint>
#include <vector>

#include "geolab/geometry.hpp"
#include "geolab/learners.hpp"
#include "geolab/repstore.hpp"
#include "geolab/taskgen.hpp"

namespace geolab {

struct SynthSpec {
  int dim = 8;
  int n_per_class = 50;
  double separation = 1.0;       // distance between the two class means
  std::vector<double> spectrum;  // within-class variances along e_0, e_1, ...
  double alignment_angle = 0.0;  // mean direction = cos(a) e_0 + sin(a) e_{d-1}
  std::uint64_t seed = 0;
};

struct SynthManifolds {
  ManifoldPair pair;
  std::vector<int> labels;  // n_per_class zeros followed by n_per_class ones
};

SynthManifolds gen_gaussian_manifolds(const SynthSpec& spec);

inline constexpr int kOracleMaxConstraints = 12;

/// Exact probe QP by enumerating every active set (2^P of them) and solving
/// the equality-constrained problem on each; the feasible, dual-feasible
/// candidate with the smallest objective wins.
ProbeSolution naive_qp_oracle(const Matrix& s, const Vector& g, double kappa);

/// Score-token logits whose log-odds equal beta_true * d for the given
/// learner, one P x 2 matrix per trial. Positions with one unobserved class
/// get a strongly one-sided log-odds toward the observed class; positions
/// with no observed class get 0. noise_sd > 0 adds Gaussian noise keyed by
/// (seed, trial, position).
std::vector<Matrix> surrogate_behavior(const LearnerConfig& learner, double beta_true, const TrialSet& trials,
                                       std::uint64_t seed, double noise_sd = 0.0);

inline constexpr double kOneSidedLogOdds = 10.0;

struct GradedOptions {
  int n_conditions = 10;
  int n_sequences = 25;  // each with a complement -> 50 trials
  int seq_len = 100;
  int dim = 10;
  int pool_size = 2000;
  double spectrum_ratio = 10.0;  // top / bottom standard deviation
  double reorganization = 2.0;  // alignment rate: rho = min(1, reorganization * progress)
  double beta_true = 2.0;
};

struct GradedSuite {
  Matrix pool;  // pool_size x dim sentence representations
  std::vector<TaskAxis> axes;
  std::vector<LabelAssignment> labels;
  std::vector<TrialSet> conditions;  // reps and surrogate logits attached
  std::vector<double> axis_variance;  // variance of the pool along each axis
  GradedOptions options;
};

/// Conditions whose labeling axis rotates from the top-variance direction to
/// the lowest-variance direction. Record-layer representations drift toward
/// the shown label as the position grows, proportionally to the axis' own
/// spread, and behavior comes from a prototype learner at beta_true.
GradedSuite graded_difficulty_suite(std::uint64_t seed, const GradedOptions& options = {});

/// Write the suite in the interchange formats: manifest.json + 0.f32 and
/// trials.jsonl (with reps and logits) under `dir`.
void write_suite(const GradedSuite& suite, const fs::path& dir);

}  // namespace geolab
