#include "geolab/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "geolab/error.hpp"
#include "geolab/parallel.hpp"
#include "geolab/rng.hpp"

namespace geolab {

PreprocessedPair preprocess_manifolds(const ManifoldPair& pair) {
  if (pair.m0.rows() < 1 || pair.m1.rows() < 1) {
    throw Error(ErrorKind::Degenerate, "preprocess: both manifolds must be nonempty");
  }
  if (pair.m0.cols() != pair.m1.cols()) throw Error(ErrorKind::Argument, "preprocess: dimension mismatch");
  if (!pair.m0.allFinite() || !pair.m1.allFinite()) throw Error(ErrorKind::Numeric, "preprocess: non-finite sample");

  const Eigen::Index d = pair.m0.cols();
  const std::array<const Matrix*, 2> clouds{&pair.m0, &pair.m1};
  const std::array<Vector, 2> means{pair.m0.colwise().mean().transpose(), pair.m1.colwise().mean().transpose()};

  PreprocessedPair out;
  out.global_mean = 0.5 * (means[0] + means[1]);
  for (int c = 0; c < 2; ++c) {
    const Vector centered_mean = means[c] - out.global_mean;
    const double norm = centered_mean.norm();
    if (norm <= 1e-12) throw Error(ErrorKind::Degenerate, "preprocess: degenerate geometry (class means coincide)");
    out.mean_norms[c] = norm;
    out.centroids[c] = centered_mean / norm;
    Matrix& s = out.samples[c];
    s.resize(clouds[c]->rows(), d + 1);
    s.leftCols(d) = (clouds[c]->rowwise() - out.global_mean.transpose()) / norm;
    s.col(d).setOnes();
  }
  return out;
}

ProbeSource gaussian_probes(std::uint64_t seed) {
  return [seed](int cls, std::int64_t index, Eigen::Index dim) {
    const CounterRng rng(seed, static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(index));
    Vector g(dim);
    for (Eigen::Index k = 0; k < dim; ++k) g(k) = rng.normal(static_cast<std::uint64_t>(k));
    return g;
  };
}

CapacityResult capacity(const ManifoldPair& pair, const CapacityOptions& options) {
  return capacity(pair, options, gaussian_probes(options.seed));
}

namespace {

struct ProbeStats {
  double adjustment = 0.0;
  bool has_anchor = false;
  double radius_sq = 0.0;
  bool has_direction = false;
  double projection_sq = 0.0;
};

ClassCapacity class_capacity(const Matrix& samples, const Vector& centroid, int cls, const CapacityOptions& options,
                             const ProbeSource& probes) {
  const ProbeQp qp(samples, options.kappa, options.qp);
  const Eigen::Index dim = samples.cols();
  const Eigen::Index d = dim - 1;
  const auto n = static_cast<std::size_t>(options.n_probes);
  std::vector<ProbeStats> stats(n);

  parallel_for(n, options.threads, [&](std::size_t j) {
    const Vector g = probes(cls, static_cast<std::int64_t>(j), dim);
    const ProbeSolution sol = qp.solve(g);
    ProbeStats& st = stats[j];
    st.adjustment = sol.adjustment;
    if (sol.anchor) {
      st.has_anchor = true;
      const Vector deviation = sol.anchor->head(d) - centroid;
      const double norm = deviation.norm();
      st.radius_sq = norm * norm;
      if (norm > 1e-12) {
        st.has_direction = true;
        const double proj = g.head(d).dot(deviation) / norm;
        st.projection_sq = proj * proj;
      }
    }
  });

  // Index-ordered reduction keeps the result independent of thread count.
  ClassCapacity out;
  double sum = 0.0;
  double sum_sq = 0.0;
  double radius_sum = 0.0;
  double dim_sum = 0.0;
  int directions = 0;
  for (const ProbeStats& st : stats) {
    sum += st.adjustment;
    sum_sq += st.adjustment * st.adjustment;
    if (st.has_anchor) {
      ++out.anchor_probes;
      radius_sum += st.radius_sq;
    }
    if (st.has_direction) {
      ++directions;
      dim_sum += st.projection_sq;
    }
  }
  const auto count = static_cast<double>(n);
  out.inv_capacity = sum / count;
  if (n > 1) {
    const double var = std::max(0.0, (sum_sq - count * out.inv_capacity * out.inv_capacity) / (count - 1.0));
    out.inv_capacity_se = std::sqrt(var / count);
  }
  if (out.anchor_probes > 0) out.radius = std::sqrt(radius_sum / out.anchor_probes);
  if (directions > 0) out.dimension = dim_sum / directions;
  return out;
}

}  // namespace

CapacityResult capacity(const ManifoldPair& pair, const CapacityOptions& options, const ProbeSource& probes) {
  if (options.n_probes < 1) throw Error(ErrorKind::Argument, "capacity: n_probes must be positive");
  const PreprocessedPair pre = preprocess_manifolds(pair);
  CapacityResult out;
  for (int c = 0; c < 2; ++c) out.classes[c] = class_capacity(pre.samples[c], pre.centroids[c], c, options, probes);

  const double mean_inv = 0.5 * (out.classes[0].inv_capacity + out.classes[1].inv_capacity);
  out.capacity = 1.0 / mean_inv;
  // Delta method: d(1/x) = dx / x^2.
  const double se_mean = 0.5 * std::hypot(out.classes[0].inv_capacity_se, out.classes[1].inv_capacity_se);
  out.capacity_se = se_mean / (mean_inv * mean_inv);
  if (out.classes[0].radius && out.classes[1].radius) {
    out.radius = 0.5 * (*out.classes[0].radius + *out.classes[1].radius);
  }
  if (out.classes[0].dimension && out.classes[1].dimension) {
    out.dimension = 0.5 * (*out.classes[0].dimension + *out.classes[1].dimension);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Spectrum {
  Vector r;  // singular values of the centered class matrix
  Matrix v;  // right singular vectors (d x k)
  double sum_sq = 0.0;
  double sum_4 = 0.0;
};

Spectrum class_spectrum(const Matrix& cloud, const Vector& mean) {
  Spectrum sp;
  const Matrix centered = cloud.rowwise() - mean.transpose();
  if (cloud.rows() < 2) {
    sp.r = Vector::Zero(1);
    sp.v = Matrix::Zero(cloud.cols(), 1);
    return sp;
  }
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  sp.r = svd.singularValues();
  sp.v = svd.matrixV();
  sp.sum_sq = sp.r.squaredNorm();
  sp.sum_4 = sp.r.array().pow(4).sum();
  return sp;
}

}  // namespace

SnrComponents snr_decomposition(const ManifoldPair& pair, int m) {
  if (m < 1) throw Error(ErrorKind::Argument, "snr: m must be at least 1");
  if (pair.m0.rows() < 1 || pair.m1.rows() < 1) throw Error(ErrorKind::Degenerate, "snr: empty manifold");
  if (pair.m0.cols() != pair.m1.cols()) throw Error(ErrorKind::Argument, "snr: dimension mismatch");

  SnrComponents out;
  out.m = m;
  const Vector mu0 = pair.m0.colwise().mean().transpose();
  const Vector mu1 = pair.m1.colwise().mean().transpose();
  const Spectrum sp0 = class_spectrum(pair.m0, mu0);
  const Spectrum sp1 = class_spectrum(pair.m1, mu1);
  out.degenerate_spectrum = sp0.sum_sq <= 0.0 || sp1.sum_sq <= 0.0;

  const Vector diff = mu0 - mu1;
  const double dist = diff.norm();
  out.equal_means = dist < 1e-12;
  const Vector dhat = out.equal_means ? Vector::Zero(diff.size()) : Vector(diff / dist);

  auto pr = [](const Spectrum& sp) { return sp.sum_4 > 0.0 ? sp.sum_sq * sp.sum_sq / sp.sum_4 : 0.0; };
  out.d_pr = 0.5 * (pr(sp0) + pr(sp1));

  const double within0 = sp0.sum_sq / static_cast<double>(pair.m0.rows());
  out.delta = (out.equal_means || within0 <= 0.0) ? 0.0 : dist / std::sqrt(within0);

  auto csa = [&](const Spectrum& sp) {
    if (sp.sum_sq <= 0.0) return 0.0;
    const Vector overlap = sp.v.transpose() * dhat;
    return overlap.cwiseAbs2().dot(sp.r.cwiseAbs2()) / sp.sum_sq;
  };
  out.csa0 = csa(sp0);
  out.csa1 = csa(sp1);

  if (sp0.sum_sq > 0.0) {
    const Matrix a0 = sp0.v * sp0.r.asDiagonal();
    const Matrix a1 = sp1.v * sp1.r.asDiagonal();
    out.ss = (a0.transpose() * a1).squaredNorm() / (sp0.sum_sq * sp0.sum_sq);
  }
  out.bias = sp1.sum_sq > 0.0 ? sp0.sum_sq / sp1.sum_sq - 1.0 : 0.0;

  const double md = static_cast<double>(m);
  const double delta_sq = out.delta * out.delta;
  out.signal = delta_sq + out.bias / md;
  const double pr_term = out.d_pr > 0.0 ? 1.0 / (out.d_pr * md) : 0.0;
  const double noise_sq = pr_term + delta_sq * (out.csa0 + out.csa1 / md) + out.ss / md;
  out.noise = std::sqrt(noise_sq);
  out.snr = out.noise > 0.0 ? 0.5 * out.signal / out.noise : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<PositionGeometry> track_geometry(const TrialSet& trials, std::span<const int> positions,
                                             const CapacityOptions& options, int m) {
  if (!trials.has_reps()) {
    throw Error(ErrorKind::Argument, "track_geometry: condition " + trials.condition_id +
                                         " has no per-position representations");
  }
  const auto len = static_cast<int>(trials.sequence_length());
  const Eigen::Index d = trials.trials.front().reps->cols();
  std::vector<PositionGeometry> out;
  out.reserve(positions.size());
  for (int pos : positions) {
    PositionGeometry row;
    row.position = pos;
    if (pos < 1 || pos > len) {
      row.note = "position out of range";
      out.push_back(std::move(row));
      continue;
    }
    std::array<std::vector<Eigen::Index>, 2> members;
    for (std::size_t k = 0; k < trials.trials.size(); ++k) {
      members[static_cast<std::size_t>(trials.trials[k].shown_labels[static_cast<std::size_t>(pos - 1)])].push_back(
          static_cast<Eigen::Index>(k));
    }
    if (members[0].empty() || members[1].empty()) {
      row.note = "class absent at position";
      out.push_back(std::move(row));
      continue;
    }
    ManifoldPair pair;
    std::array<Matrix*, 2> dest{&pair.m0, &pair.m1};
    for (int c = 0; c < 2; ++c) {
      dest[c]->resize(static_cast<Eigen::Index>(members[c].size()), d);
      for (std::size_t i = 0; i < members[c].size(); ++i) {
        dest[c]->row(static_cast<Eigen::Index>(i)) =
            trials.trials[static_cast<std::size_t>(members[c][i])].reps->row(pos - 1);
      }
    }
    try {
      GeometryReport rep;
      rep.capacity = capacity(pair, options);
      rep.snr = snr_decomposition(pair, m);
      rep.n_probes = options.n_probes;
      rep.seed = options.seed;
      rep.m = m;
      rep.class_sizes = {static_cast<int>(members[0].size()), static_cast<int>(members[1].size())};
      row.report = std::move(rep);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Degenerate) throw;
      row.note = e.what();
    }
    out.push_back(std::move(row));
  }
  return out;
}

namespace {

constexpr std::string_view kGeometryMetrics[] = {
    "capacity", "capacity_se", "inv_capacity_0", "inv_capacity_1", "radius", "radius_0", "radius_1",
    "dimension", "dimension_0", "dimension_1", "delta", "d_pr", "csa_0", "csa_1", "ss", "bias",
    "signal", "noise", "snr", "n_class_0", "n_class_1"};

}  // namespace

std::span<const std::string_view> geometry_metric_names() { return kGeometryMetrics; }

void append_geometry_metrics(MetricsTable& table, const ConditionMeta& meta, std::span<const PositionGeometry> rows) {
  for (const PositionGeometry& row : rows) {
    auto add = [&](std::string_view name, std::optional<double> value) {
      MetricRow r;
      r.condition_id = meta.condition_id;
      r.model = meta.model;
      r.dataset = meta.dataset;
      r.family = to_string(meta.axis.family);
      r.rank = meta.axis.rank;
      r.target_layer = meta.axis.target_layer;
      r.position = row.position;
      r.metric = std::string(name);
      r.value = value;
      table.rows.push_back(std::move(r));
    };
    if (!row.report) {
      for (auto name : kGeometryMetrics) add(name, std::nullopt);
      continue;
    }
    const GeometryReport& g = *row.report;
    const CapacityResult& cap = g.capacity;
    const bool snr_ok = !g.snr.degenerate_spectrum;
    auto snr_value = [&](double v) { return snr_ok ? std::optional<double>(v) : std::nullopt; };
    add("capacity", cap.capacity);
    add("capacity_se", cap.capacity_se);
    add("inv_capacity_0", cap.classes[0].inv_capacity);
    add("inv_capacity_1", cap.classes[1].inv_capacity);
    add("radius", cap.radius);
    add("radius_0", cap.classes[0].radius);
    add("radius_1", cap.classes[1].radius);
    add("dimension", cap.dimension);
    add("dimension_0", cap.classes[0].dimension);
    add("dimension_1", cap.classes[1].dimension);
    add("delta", snr_value(g.snr.delta));
    add("d_pr", snr_value(g.snr.d_pr));
    add("csa_0", snr_value(g.snr.csa0));
    add("csa_1", snr_value(g.snr.csa1));
    add("ss", snr_value(g.snr.ss));
    add("bias", snr_value(g.snr.bias));
    add("signal", snr_value(g.snr.signal));
    add("noise", snr_value(g.snr.noise));
    add("snr", snr_value(g.snr.snr));
    add("n_class_0", g.class_sizes[0]);
    add("n_class_1", g.class_sizes[1]);
  }
}

}  // namespace geolab
