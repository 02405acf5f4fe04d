#pragma once

// Online learners over record-layer representations, temperature fitting in
// log-odds space, and descriptive-fit comparison against behavioral logits.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geolab/repstore.hpp"

namespace geolab {

enum class LearnerKind { Prototype, Exemplar, Nn1, Ogd, Bayes, Kalman };

inline constexpr std::array<LearnerKind, 6> kAllLearners{LearnerKind::Prototype, LearnerKind::Exemplar,
                                                         LearnerKind::Nn1,       LearnerKind::Ogd,
                                                         LearnerKind::Bayes,     LearnerKind::Kalman};

std::string to_string(LearnerKind kind);
LearnerKind parse_learner_kind(const std::string& text);

/// Centered, renormalized stream: every row has squared norm d.
struct NormalizedStream {
  Matrix z;
  std::vector<int> labels;
  Vector mean;

  std::size_t size() const { return static_cast<std::size_t>(z.rows()); }
};

/// z~_i = sqrt(d) (z_i - mean) / |z_i - mean|. Throws on a zero-norm row.
NormalizedStream normalize_stream(const Matrix& z, const Vector& mean, std::vector<int> labels = {});

/// Class logit; nullopt marks an unobserved class (score of minus infinity).
using Logit = std::optional<double>;

struct ClassLogits {
  std::array<Logit, 2> value;

  /// l(1) - l(0), defined only when both classes carry a score.
  std::optional<double> diff() const;
};

struct LearnerTrace {
  std::vector<ClassLogits> logits;
  std::vector<double> diffs;       // 0 where undefined
  std::vector<std::uint8_t> mask;  // 1 where diffs[i] is a finite logit difference

  void push(const ClassLogits& l);
  std::size_t size() const { return logits.size(); }
};

/// Scores of a query against a labeled prefix. Empty classes give nullopt.
ClassLogits similarity_logits(LearnerKind kind, const Matrix& prefix, std::span<const int> prefix_labels,
                              const Vector& query);

LearnerTrace similarity_run(LearnerKind kind, const NormalizedStream& stream);
LearnerTrace ogd_run(const NormalizedStream& stream, double eta, double decay);
LearnerTrace bayes_run(const NormalizedStream& stream, double tau2, double sigma2);

/// Called after every Kalman update with the step index and covariance.
using CovarianceObserver = std::function<void(std::size_t step, const Matrix& covariance)>;

LearnerTrace kalman_run(const NormalizedStream& stream, double alpha, double sigma2,
                        const CovarianceObserver& observer = {});

/// One learner variant. Parameter meaning depends on kind:
///   ogd: (eta, decay); bayes: (tau2, sigma2); kalman: (alpha, sigma2).
struct LearnerConfig {
  LearnerKind kind = LearnerKind::Prototype;
  double p1 = 0.0;
  double p2 = 0.0;

  std::string hyperparams() const;
};

/// Default hyperparameter grid, in lexicographic order.
std::vector<LearnerConfig> default_grid(LearnerKind kind);

LearnerTrace run_learner(const LearnerConfig& config, const NormalizedStream& stream);

struct TemperatureFit {
  double beta = 0.0;
  bool degenerate = false;  // sum of d^2 on the mask is zero
  std::size_t n_positions = 0;
};

/// beta* = sum d g / sum d^2 over masked positions.
TemperatureFit fit_temperature(std::span<const double> d, std::span<const double> g, std::span<const std::uint8_t> mask);

/// Fraction of masked positions with sign(beta d) == sign(g), sign(0) = +.
double descriptive_fit(std::span<const double> d, std::span<const double> g, std::span<const std::uint8_t> mask,
                       double beta);

/// Behavioral log-odds log p(1) - log p(0) from P x 2 score-token logits.
std::vector<double> behavioral_log_odds(const Matrix& logits);

/// Mean of every representation in every trial and position.
Vector joint_mean(const TrialSet& trials);

/// Normalized streams (one per trial) labeled with the shown labels.
std::vector<NormalizedStream> streams_from_trials(const TrialSet& trials, const Vector& mean);

enum class FitMode { Pooled, PerTrial };

struct VariantFit {
  LearnerConfig config;
  double beta = 0.0;  // pooled beta (mean of per-trial betas in PerTrial mode)
  double agreement = 0.0;
  std::size_t n_positions = 0;
  bool degenerate = false;
};

struct FamilyFit {
  VariantFit best;
  std::vector<VariantFit> variants;
};

/// Fit every variant in the grid against behavioral log-odds and keep the
/// best agreement; ties keep the earlier grid entry.
FamilyFit fit_family(std::span<const LearnerConfig> grid, std::span<const NormalizedStream> streams,
                     std::span<const std::vector<double>> log_odds, FitMode mode = FitMode::Pooled,
                     unsigned threads = 1);

}  // namespace geolab
