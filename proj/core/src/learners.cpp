#include "geolab/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "geolab/error.hpp"
#include "geolab/parallel.hpp"

namespace geolab {

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::Prototype: return "prototype";
    case LearnerKind::Exemplar: return "exemplar";
    case LearnerKind::Nn1: return "nn1";
    case LearnerKind::Ogd: return "ogd";
    case LearnerKind::Bayes: return "bayes";
    case LearnerKind::Kalman: return "kalman";
  }
  return "unknown";
}

LearnerKind parse_learner_kind(const std::string& text) {
  for (LearnerKind k : kAllLearners) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorKind::Argument, "unknown learner '" + text + "'");
}

NormalizedStream normalize_stream(const Matrix& z, const Vector& mean, std::vector<int> labels) {
  if (mean.size() != z.cols()) throw Error(ErrorKind::Argument, "normalize_stream: mean has wrong dimension");
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(z.rows())) {
    throw Error(ErrorKind::Argument, "normalize_stream: label count does not match rows");
  }
  const double scale = std::sqrt(static_cast<double>(z.cols()));
  NormalizedStream out;
  out.z.resize(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Vector centered = z.row(i).transpose() - mean;
    const double norm = centered.norm();
    if (!(norm > 0.0)) throw Error(ErrorKind::Numeric, "normalize_stream: zero-norm row " + std::to_string(i));
    out.z.row(i) = scale * centered.transpose() / norm;
  }
  out.labels = std::move(labels);
  out.mean = mean;
  return out;
}

std::optional<double> ClassLogits::diff() const {
  if (!value[0] || !value[1]) return std::nullopt;
  return *value[1] - *value[0];
}

void LearnerTrace::push(const ClassLogits& l) {
  logits.push_back(l);
  const auto d = l.diff();
  diffs.push_back(d.value_or(0.0));
  mask.push_back(d ? 1 : 0);
}

namespace {

void require_labels(const NormalizedStream& s) {
  if (s.labels.size() != s.size()) throw Error(ErrorKind::Argument, "learner: stream has no labels");
}

double norm_dist(const Vector& a, const Vector& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

// Scores from the distances to the prefix members of one class.
Logit score_class(LearnerKind kind, std::span<const double> dists) {
  if (dists.empty()) return std::nullopt;
  if (kind == LearnerKind::Nn1) return -*std::min_element(dists.begin(), dists.end());
  // log sum exp(-delta), shifted by the smallest distance
  const double lo = *std::min_element(dists.begin(), dists.end());
  double acc = 0.0;
  for (double dd : dists) acc += std::exp(-(dd - lo));
  return -lo + std::log(acc);
}

}  // namespace

ClassLogits similarity_logits(LearnerKind kind, const Matrix& prefix, std::span<const int> prefix_labels,
                              const Vector& query) {
  if (static_cast<std::size_t>(prefix.rows()) != prefix_labels.size()) {
    throw Error(ErrorKind::Argument, "similarity_logits: label count does not match prefix");
  }
  ClassLogits out;
  if (kind == LearnerKind::Prototype) {
    for (int c = 0; c < 2; ++c) {
      Vector sum = Vector::Zero(query.size());
      int n = 0;
      for (Eigen::Index j = 0; j < prefix.rows(); ++j) {
        if (prefix_labels[static_cast<std::size_t>(j)] == c) {
          sum += prefix.row(j).transpose();
          ++n;
        }
      }
      if (n > 0) out.value[c] = -norm_dist(query, sum / n);
    }
    return out;
  }
  if (kind != LearnerKind::Exemplar && kind != LearnerKind::Nn1) {
    throw Error(ErrorKind::Argument, "similarity_logits: not a similarity learner");
  }
  std::array<std::vector<double>, 2> dists;
  for (Eigen::Index j = 0; j < prefix.rows(); ++j) {
    dists[static_cast<std::size_t>(prefix_labels[static_cast<std::size_t>(j)])].push_back(
        norm_dist(query, prefix.row(j).transpose()));
  }
  for (int c = 0; c < 2; ++c) out.value[c] = score_class(kind, dists[c]);
  return out;
}

LearnerTrace similarity_run(LearnerKind kind, const NormalizedStream& s) {
  require_labels(s);
  const Eigen::Index d = s.z.cols();
  LearnerTrace trace;
  trace.logits.reserve(s.size());
  if (kind == LearnerKind::Prototype) {
    std::array<Vector, 2> sums{Vector::Zero(d), Vector::Zero(d)};
    std::array<int, 2> counts{0, 0};
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Vector q = s.z.row(static_cast<Eigen::Index>(i)).transpose();
      ClassLogits l;
      for (int c = 0; c < 2; ++c) {
        if (counts[c] > 0) l.value[c] = -norm_dist(q, sums[c] / counts[c]);
      }
      trace.push(l);
      const int y = s.labels[i];
      sums[y] += q;
      ++counts[y];
    }
    return trace;
  }
  if (kind != LearnerKind::Exemplar && kind != LearnerKind::Nn1) {
    throw Error(ErrorKind::Argument, "similarity_run: not a similarity learner");
  }
  std::array<std::vector<double>, 2> dists;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Vector q = s.z.row(row).transpose();
    dists[0].clear();
    dists[1].clear();
    if (row > 0) {
      const Vector dd = (s.z.topRows(row).rowwise() - q.transpose()).rowwise().squaredNorm() / static_cast<double>(d);
      for (Eigen::Index j = 0; j < row; ++j) dists[static_cast<std::size_t>(s.labels[static_cast<std::size_t>(j)])].push_back(dd(j));
    }
    ClassLogits l;
    for (int c = 0; c < 2; ++c) l.value[c] = score_class(kind, dists[c]);
    trace.push(l);
  }
  return trace;
}

LearnerTrace ogd_run(const NormalizedStream& s, double eta, double decay) {
  require_labels(s);
  // eta == 0 is accepted and leaves the learner at its zero initialization.
  if (eta < 0.0 || decay < 0.0) throw Error(ErrorKind::Argument, "ogd: need eta >= 0 and decay >= 0");
  const Eigen::Index d = s.z.cols();
  Matrix w = Matrix::Zero(d, 2);
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  LearnerTrace trace;
  trace.logits.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto zi = s.z.row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::Vector2d logit = w.transpose() * zi + b;
    trace.push(ClassLogits{{logit(0), logit(1)}});
    const double top = std::max(logit(0), logit(1));
    const double e0 = std::exp(logit(0) - top);
    const double e1 = std::exp(logit(1) - top);
    const double total = e0 + e1;
    Eigen::Vector2d err(e0 / total, e1 / total);
    err(s.labels[i]) -= 1.0;
    w = (1.0 - decay) * w - eta * zi * err.transpose();
    b -= eta * err;
  }
  return trace;
}

LearnerTrace bayes_run(const NormalizedStream& s, double tau2, double sigma2) {
  require_labels(s);
  if (!(tau2 > 0.0) || !(sigma2 > 0.0)) throw Error(ErrorKind::Argument, "bayes: tau2 and sigma2 must be positive");
  const Eigen::Index d = s.z.cols();
  std::array<Vector, 2> sums{Vector::Zero(d), Vector::Zero(d)};
  std::array<double, 2> counts{0.0, 0.0};
  LearnerTrace trace;
  trace.logits.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vector q = s.z.row(static_cast<Eigen::Index>(i)).transpose();
    ClassLogits l;
    if (i == 0) {
      l.value = {0.0, 0.0};
    } else {
      const double total = counts[0] + counts[1];
      for (int c = 0; c < 2; ++c) {
        const double v = 1.0 / (1.0 / tau2 + counts[c] / sigma2);
        const Vector mean = (v / sigma2) * sums[c];
        const double prior = (counts[c] + 1.0) / (total + 2.0);
        const double spread = sigma2 + v;
        l.value[c] = -norm_dist(q, mean) / (2.0 * spread) - 0.5 * std::log(spread) + std::log(prior);
      }
    }
    trace.push(l);
    const int y = s.labels[i];
    sums[y] += q;
    counts[y] += 1.0;
  }
  return trace;
}

LearnerTrace kalman_run(const NormalizedStream& s, double alpha, double sigma2, const CovarianceObserver& observer) {
  require_labels(s);
  if (!(alpha > 0.0) || !(sigma2 > 0.0)) throw Error(ErrorKind::Argument, "kalman: alpha and sigma2 must be positive");
  const Eigen::Index d = s.z.cols();
  // Covariance kept as P = alpha I - U U^T; each update appends one column.
  Matrix u(d, static_cast<Eigen::Index>(s.size()));
  Eigen::Index rank = 0;
  Matrix w = Matrix::Zero(d, 2);
  LearnerTrace trace;
  trace.logits.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vector zi = s.z.row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::Vector2d logit = w.transpose() * zi;
    trace.push(ClassLogits{{logit(0), logit(1)}});

    Vector pz = alpha * zi;
    if (rank > 0) pz.noalias() -= u.leftCols(rank) * (u.leftCols(rank).transpose() * zi);
    const double denom = sigma2 + zi.dot(pz);
    Eigen::Vector2d target(-1.0, -1.0);
    target(s.labels[i]) = 1.0;
    w.noalias() += (pz / denom) * (target - logit).transpose();
    u.col(rank++) = pz / std::sqrt(denom);

    if (observer) {
      const Matrix cov = alpha * Matrix::Identity(d, d) - u.leftCols(rank) * u.leftCols(rank).transpose();
      observer(i, cov);
    }
  }
  return trace;
}

std::string LearnerConfig::hyperparams() const {
  auto fmt = [](double v) {
    std::string text = format_real(v);
    // 17-digit output of grid values like 0.1 is noisy; prefer the short form when exact.
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::stod(buf) == v ? std::string(buf) : text;
  };
  switch (kind) {
    case LearnerKind::Ogd: return "eta=" + fmt(p1) + ";lambda=" + fmt(p2);
    case LearnerKind::Bayes: return "tau2=" + fmt(p1) + ";sigma2=" + fmt(p2);
    case LearnerKind::Kalman: return "alpha=" + fmt(p1) + ";sigma2=" + fmt(p2);
    default: return "";
  }
}

std::vector<LearnerConfig> default_grid(LearnerKind kind) {
  auto product = [kind](std::initializer_list<double> a, std::initializer_list<double> b) {
    std::vector<LearnerConfig> out;
    for (double x : a) {
      for (double y : b) out.push_back(LearnerConfig{kind, x, y});
    }
    return out;
  };
  switch (kind) {
    case LearnerKind::Ogd: return product({0.1, 0.2, 0.5}, {0.0, 0.1});
    case LearnerKind::Bayes: return product({0.1, 0.5, 1.0}, {0.5, 1.0});
    case LearnerKind::Kalman: return product({0.1, 1.0}, {0.1, 1.0});
    default: return {LearnerConfig{kind, 0.0, 0.0}};
  }
}

LearnerTrace run_learner(const LearnerConfig& config, const NormalizedStream& stream) {
  switch (config.kind) {
    case LearnerKind::Prototype:
    case LearnerKind::Exemplar:
    case LearnerKind::Nn1: return similarity_run(config.kind, stream);
    case LearnerKind::Ogd: return ogd_run(stream, config.p1, config.p2);
    case LearnerKind::Bayes: return bayes_run(stream, config.p1, config.p2);
    case LearnerKind::Kalman: return kalman_run(stream, config.p1, config.p2);
  }
  throw Error(ErrorKind::Argument, "run_learner: unknown kind");
}

TemperatureFit fit_temperature(std::span<const double> d, std::span<const double> g, std::span<const std::uint8_t> mask) {
  if (d.size() != g.size() || d.size() != mask.size()) {
    throw Error(ErrorKind::Argument, "fit_temperature: length mismatch");
  }
  double num = 0.0;
  double den = 0.0;
  TemperatureFit out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!mask[i]) continue;
    num += d[i] * g[i];
    den += d[i] * d[i];
    ++out.n_positions;
  }
  if (den == 0.0) {
    out.degenerate = true;
    return out;
  }
  out.beta = num / den;
  return out;
}

double descriptive_fit(std::span<const double> d, std::span<const double> g, std::span<const std::uint8_t> mask,
                       double beta) {
  if (d.size() != g.size() || d.size() != mask.size()) {
    throw Error(ErrorKind::Argument, "descriptive_fit: length mismatch");
  }
  std::size_t n = 0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!mask[i]) continue;
    ++n;
    agree += ((beta * d[i] >= 0.0) == (g[i] >= 0.0)) ? 1 : 0;
  }
  if (n == 0) throw Error(ErrorKind::Argument, "descriptive_fit: empty mask");
  return static_cast<double>(agree) / static_cast<double>(n);
}

std::vector<double> behavioral_log_odds(const Matrix& logits) {
  if (logits.cols() != 2) throw Error(ErrorKind::Argument, "behavioral_log_odds: expected P x 2 logits");
  std::vector<double> out(static_cast<std::size_t>(logits.rows()));
  // Two-token softmax: log p1 - log p0 reduces to the logit difference.
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = logits(i, 1) - logits(i, 0);
  return out;
}

Vector joint_mean(const TrialSet& trials) {
  if (!trials.has_reps()) throw Error(ErrorKind::Argument, "joint_mean: trials carry no representations");
  Vector sum = Vector::Zero(trials.trials.front().reps->cols());
  double count = 0.0;
  for (const Trial& t : trials.trials) {
    sum += t.reps->colwise().sum().transpose();
    count += static_cast<double>(t.reps->rows());
  }
  return sum / count;
}

std::vector<NormalizedStream> streams_from_trials(const TrialSet& trials, const Vector& mean) {
  std::vector<NormalizedStream> out;
  out.reserve(trials.trials.size());
  for (const Trial& t : trials.trials) {
    if (!t.reps) throw Error(ErrorKind::Argument, "streams_from_trials: trial without representations");
    out.push_back(normalize_stream(*t.reps, mean, t.shown_labels));
  }
  return out;
}

FamilyFit fit_family(std::span<const LearnerConfig> grid, std::span<const NormalizedStream> streams,
                     std::span<const std::vector<double>> log_odds, FitMode mode, unsigned threads) {
  if (grid.empty()) throw Error(ErrorKind::Argument, "fit_family: empty grid");
  if (streams.size() != log_odds.size()) throw Error(ErrorKind::Argument, "fit_family: streams and log-odds differ");

  FamilyFit fit;
  fit.variants.resize(grid.size());
  for (std::size_t v = 0; v < grid.size(); ++v) {
    std::vector<LearnerTrace> traces(streams.size());
    parallel_for(streams.size(), threads, [&](std::size_t k) { traces[k] = run_learner(grid[v], streams[k]); });

    VariantFit& out = fit.variants[v];
    out.config = grid[v];
    std::vector<double> d_all;
    std::vector<double> g_all;
    std::vector<std::uint8_t> m_all;
    std::vector<double> scaled;  // beta_k * d for per-trial mode
    double beta_sum = 0.0;
    for (std::size_t k = 0; k < streams.size(); ++k) {
      if (log_odds[k].size() != traces[k].size()) throw Error(ErrorKind::Argument, "fit_family: log-odds length mismatch");
      d_all.insert(d_all.end(), traces[k].diffs.begin(), traces[k].diffs.end());
      g_all.insert(g_all.end(), log_odds[k].begin(), log_odds[k].end());
      m_all.insert(m_all.end(), traces[k].mask.begin(), traces[k].mask.end());
      if (mode == FitMode::PerTrial) {
        const TemperatureFit tf = fit_temperature(traces[k].diffs, log_odds[k], traces[k].mask);
        beta_sum += tf.beta;
        for (double dd : traces[k].diffs) scaled.push_back(tf.beta * dd);
      }
    }
    const TemperatureFit pooled = fit_temperature(d_all, g_all, m_all);
    out.n_positions = pooled.n_positions;
    out.degenerate = pooled.degenerate;
    if (out.n_positions == 0) continue;
    if (mode == FitMode::Pooled) {
      out.beta = pooled.beta;
      out.agreement = descriptive_fit(d_all, g_all, m_all, out.beta);
    } else {
      out.beta = beta_sum / static_cast<double>(streams.size());
      out.agreement = descriptive_fit(scaled, g_all, m_all, 1.0);
    }
  }

  std::size_t best = 0;
  for (std::size_t v = 1; v < fit.variants.size(); ++v) {
    if (fit.variants[v].agreement > fit.variants[best].agreement) best = v;
  }
  fit.best = fit.variants[best];
  return fit;
}

}  // namespace geolab
