#include "geolab/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geolab/error.hpp"
#include "geolab/rng.hpp"

namespace geolab {

SynthManifolds gen_gaussian_manifolds(const SynthSpec& spec) {
  if (spec.dim < 1 || spec.n_per_class < 1) throw Error(ErrorKind::Argument, "synth: dim and n_per_class must be positive");
  if (static_cast<int>(spec.spectrum.size()) > spec.dim) throw Error(ErrorKind::Argument, "synth: spectrum longer than dim");
  for (double v : spec.spectrum) {
    if (!(v > 0.0)) throw Error(ErrorKind::Argument, "synth: variances must be positive");
  }
  const Eigen::Index d = spec.dim;
  Vector direction = Vector::Zero(d);
  direction(0) += std::cos(spec.alignment_angle);
  direction(d - 1) += std::sin(spec.alignment_angle);
  direction.normalize();

  SynthManifolds out;
  std::array<Matrix*, 2> dest{&out.pair.m0, &out.pair.m1};
  for (int c = 0; c < 2; ++c) {
    const CounterRng rng(spec.seed, 0x5E7, static_cast<std::uint64_t>(c));
    const Vector mean = (c == 0 ? -0.5 : 0.5) * spec.separation * direction;
    Matrix& m = *dest[c];
    m.resize(spec.n_per_class, d);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index k = 0; k < d; ++k) {
        const double sd = k < static_cast<Eigen::Index>(spec.spectrum.size()) ? std::sqrt(spec.spectrum[static_cast<std::size_t>(k)]) : 0.0;
        m(i, k) = mean(k) + sd * rng.normal(static_cast<std::uint64_t>(i * d + k));
      }
    }
    out.labels.insert(out.labels.end(), static_cast<std::size_t>(spec.n_per_class), c);
  }
  return out;
}

ProbeSolution naive_qp_oracle(const Matrix& s, const Vector& g, double kappa) {
  const Eigen::Index n = s.rows();
  if (n > kOracleMaxConstraints) {
    throw Error(ErrorKind::Argument, "naive_qp_oracle: too many constraints (" + std::to_string(n) + ")");
  }
  const double tol = 1e-9;
  double best_obj = std::numeric_limits<double>::infinity();
  ProbeSolution best;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index p = 0; p < n; ++p) {
      if (mask & (1u << p)) active.push_back(p);
    }
    const auto k = static_cast<Eigen::Index>(active.size());
    Vector lambda = Vector::Zero(n);
    if (k > 0) {
      Matrix sa(k, s.cols());
      for (Eigen::Index i = 0; i < k; ++i) sa.row(i) = s.row(active[i]);
      // Active constraints hold with equality: S_A (g - S_A^T lam) = -kappa.
      const Matrix gram = sa * sa.transpose();
      const Vector rhs = (sa * g).array() + kappa;
      const Vector lam = gram.completeOrthogonalDecomposition().solve(rhs);
      if ((gram * lam - rhs).norm() > 1e-8 * (1.0 + rhs.norm())) continue;  // inconsistent system
      for (Eigen::Index i = 0; i < k; ++i) lambda(active[i]) = lam(i);
    }
    if ((lambda.array() < -tol).any()) continue;
    const Vector v = g - s.transpose() * lambda;
    if ((((s * v).array() + kappa) > tol).any()) continue;
    const double obj = 0.5 * (v - g).squaredNorm();
    if (obj < best_obj - 1e-14) {
      best_obj = obj;
      best.v_star = v;
      best.multipliers = lambda.cwiseMax(0.0);
      best.adjustment = (v - g).squaredNorm();
    }
  }
  if (!std::isfinite(best_obj)) throw Error(ErrorKind::Numeric, "naive_qp_oracle: no feasible active set");
  const double total = best.multipliers.sum();
  if (total > 1e-12) best.anchor = s.transpose() * best.multipliers / total;
  return best;
}

std::vector<Matrix> surrogate_behavior(const LearnerConfig& learner, double beta_true, const TrialSet& trials,
                                       std::uint64_t seed, double noise_sd) {
  const Vector mean = joint_mean(trials);
  const auto streams = streams_from_trials(trials, mean);
  std::vector<Matrix> out;
  out.reserve(streams.size());
  for (std::size_t k = 0; k < streams.size(); ++k) {
    const LearnerTrace trace = run_learner(learner, streams[k]);
    const CounterRng rng(seed, 0x5067, k);
    Matrix logits = Matrix::Zero(static_cast<Eigen::Index>(trace.size()), 2);
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const ClassLogits& l = trace.logits[i];
      double g = 0.0;
      if (trace.mask[i]) {
        g = beta_true * trace.diffs[i];
      } else if (l.value[1] && !l.value[0]) {
        g = beta_true * kOneSidedLogOdds;
      } else if (l.value[0] && !l.value[1]) {
        g = -beta_true * kOneSidedLogOdds;
      }
      if (noise_sd > 0.0) g += noise_sd * rng.normal(i);
      logits(static_cast<Eigen::Index>(i), 1) = g;
    }
    out.push_back(std::move(logits));
  }
  return out;
}

GradedSuite graded_difficulty_suite(std::uint64_t seed, const GradedOptions& opt) {
  if (opt.n_conditions < 2 || opt.dim < 2) throw Error(ErrorKind::Argument, "graded suite: need >= 2 conditions and dim >= 2");
  GradedSuite suite;
  suite.options = opt;
  const Eigen::Index d = opt.dim;

  Vector sd(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    sd(k) = std::pow(opt.spectrum_ratio, -static_cast<double>(k) / static_cast<double>(d - 1));
  }
  const CounterRng pool_rng(seed, 0x9001);
  suite.pool.resize(opt.pool_size, d);
  for (Eigen::Index i = 0; i < suite.pool.rows(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) suite.pool(i, k) = sd(k) * pool_rng.normal(static_cast<std::uint64_t>(i * d + k));
  }
  const CenteredData centered = center(suite.pool);

  for (int c = 0; c < opt.n_conditions; ++c) {
    // Axis steps through the pool's eigendirections, top variance to bottom,
    // so the label carries no information outside the axis coordinate.
    const Eigen::Index k_axis = static_cast<Eigen::Index>(
        std::lround(static_cast<double>(c) * static_cast<double>(d - 1) / static_cast<double>(opt.n_conditions - 1)));
    TaskAxis axis;
    axis.family = AxisFamily::PC;
    axis.rank = c + 1;  // position along the difficulty gradient
    axis.target_layer = 0;
    axis.direction = Vector::Zero(d);
    axis.direction(k_axis) = 1.0;
    axis.center = centered.mean;
    const double variance = (centered.centered * axis.direction).squaredNorm() / static_cast<double>(opt.pool_size - 1);
    axis.singular_value = std::sqrt(variance * static_cast<double>(opt.pool_size - 1));

    LabelAssignment labels = binarize(centered.centered, axis);
    TrialSet trials = sample_trials(labels, opt.seq_len, opt.n_sequences, seed);
    // In-context reorganization: the coordinate a along the axis is replaced by
    // sqrt(rho) |a| sign(shown) + sqrt(1 - rho) eps, eps ~ N(0, axis variance),
    // with rho growing linearly over the sequence. The marginal spread along the
    // axis is preserved; only its alignment with the shown labels changes.
    const double axis_sd = std::sqrt(variance);
    const CounterRng noise_rng(seed, 0x9002, static_cast<std::uint64_t>(c));
    for (std::size_t k = 0; k < trials.trials.size(); ++k) {
      Trial& t = trials.trials[k];
      const std::size_t len = t.length();
      Matrix reps(static_cast<Eigen::Index>(len), d);
      for (std::size_t i = 0; i < len; ++i) {
        const double progress = len > 1 ? static_cast<double>(i) / static_cast<double>(len - 1) : 1.0;
        const double rho = std::clamp(opt.reorganization * progress, 0.0, 1.0);
        const Vector x = suite.pool.row(t.sequence[i]).transpose();
        const double a = (x - axis.center).dot(axis.direction);
        const double eps = axis_sd * noise_rng.normal(static_cast<std::uint64_t>(k * len + i));
        const double aligned = std::sqrt(rho) * std::abs(a) * (2.0 * t.shown_labels[i] - 1.0) + std::sqrt(1.0 - rho) * eps;
        reps.row(static_cast<Eigen::Index>(i)) = (x + (aligned - a) * axis.direction).transpose();
      }
      t.reps = std::move(reps);
    }
    const auto behavior = surrogate_behavior(LearnerConfig{LearnerKind::Prototype}, opt.beta_true, trials, seed);
    for (std::size_t k = 0; k < trials.trials.size(); ++k) trials.trials[k].logits = behavior[k];

    suite.axis_variance.push_back(variance);
    suite.axes.push_back(std::move(axis));
    suite.labels.push_back(std::move(labels));
    suite.conditions.push_back(std::move(trials));
  }
  return suite;
}

void write_suite(const GradedSuite& suite, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  Manifest manifest;
  manifest.model_name = "synthetic";
  manifest.dataset_name = "graded";
  manifest.base_dir = dir;
  register_layer(manifest, 0, suite.pool);
  save_manifest(manifest, dir / "manifest.json");
  save_trials(dir / "trials.jsonl", suite.conditions);
}

}  // namespace geolab
