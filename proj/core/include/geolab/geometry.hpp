#pragma once

// Manifold geometry of two class clouds: capacity with anchor radius and
// dimension from Gaussian probes, plus the SNR decomposition.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geolab/repstore.hpp"

namespace geolab {

/// Samples of the two classes at one position, one row per sample.
struct ManifoldPair {
  Matrix m0;
  Matrix m1;
};

/// Augmented samples after removing the global mean and scaling each class by
/// the norm of its own centered mean. Last column is the constant bias 1.
struct PreprocessedPair {
  std::array<Matrix, 2> samples;
  std::array<Vector, 2> centroids;  // class centroids in the normalized space (unit norm)
  Vector global_mean;
  std::array<double, 2> mean_norms{};
};

PreprocessedPair preprocess_manifolds(const ManifoldPair& pair);

// ---------------------------------------------------------------------------
// Probe QP: min 1/2 |v - g|^2  s.t.  S v <= -kappa

struct QpOptions {
  double gap_tol = 1e-10;
  double feasibility_tol = 1e-10;
  int max_sweeps = 200000;
  int polish_every = 8;    // sweeps between active-set polish attempts
  int finish_after = 256;  // sweeps before handing off to the exact active-set finish
};

struct ProbeSolution {
  Vector v_star;
  Vector multipliers;            // lambda >= 0, one per constraint
  std::optional<Vector> anchor;  // sum(lambda_p s_p) / sum(lambda_p)
  double adjustment = 0.0;       // |v* - g|^2
  double gap = 0.0;              // final duality gap
  int sweeps = 0;
};

/// Dual projected coordinate descent over lambda (v = g - S^T lambda) with a
/// periodic active-set polish. Instances where descent stalls (nearly
/// collinear constraints) are finished by a Lawson-Hanson active-set pass
/// and accepted only as a KKT point. The Gram matrix S S^T is built once, so one
/// instance serves every probe of a class.
class ProbeQp {
 public:
  ProbeQp(Matrix constraints, double kappa, QpOptions options = {});

  ProbeSolution solve(const Vector& g) const;

  const Matrix& constraints() const { return s_; }
  double kappa() const { return kappa_; }

 private:
  struct Tolerance {
    double gap;
    double feasibility;
  };
  bool polish(const Vector& h, const Tolerance& tol, Vector& lambda, Vector& residual) const;
  bool active_set_finish(const Vector& g, const Vector& h, const Tolerance& tol, Vector& lambda, Vector& residual) const;

  Matrix s_;
  Matrix gram_;
  double row_norm_ = 0.0;
  double kappa_;
  QpOptions options_;
};

ProbeSolution solve_probe_qp(const Matrix& s, const Vector& g, double kappa, const QpOptions& options = {});

struct KktResidual {
  double primal = 0.0;        // max_p (s_p . v + kappa)_+
  double slackness = 0.0;     // max_p |lambda_p (s_p . v + kappa)|
  double stationarity = 0.0;  // |v - g + S^T lambda|
  double dual = 0.0;          // max_p (-lambda_p)_+
};

KktResidual kkt_residual(const Matrix& s, const Vector& g, double kappa, const ProbeSolution& sol);

// ---------------------------------------------------------------------------
// Capacity

inline constexpr int kDefaultProbes = 2000;
inline constexpr int kAcceptanceProbes = 200000;

struct CapacityOptions {
  int n_probes = kDefaultProbes;
  std::uint64_t seed = 0;
  double kappa = 0.0;  // hard margin
  unsigned threads = 1;
  QpOptions qp;
};

/// Probe generator: (class, probe index, dimension) -> probe vector.
using ProbeSource = std::function<Vector(int cls, std::int64_t index, Eigen::Index dim)>;

/// Standard-normal probes from the counter stream keyed by (seed, class, index).
ProbeSource gaussian_probes(std::uint64_t seed);

struct ClassCapacity {
  double inv_capacity = 0.0;
  double inv_capacity_se = 0.0;  // standard error of the Monte-Carlo mean
  std::optional<double> radius;
  std::optional<double> dimension;
  int anchor_probes = 0;
};

struct CapacityResult {
  double capacity = 0.0;  // harmonic mean over the two classes
  double capacity_se = 0.0;
  std::array<ClassCapacity, 2> classes;
  std::optional<double> radius;
  std::optional<double> dimension;
};

CapacityResult capacity(const ManifoldPair& pair, const CapacityOptions& options);
CapacityResult capacity(const ManifoldPair& pair, const CapacityOptions& options, const ProbeSource& probes);

// ---------------------------------------------------------------------------
// SNR decomposition

struct SnrComponents {
  double delta = 0.0;
  double d_pr = 0.0;
  double csa0 = 0.0;
  double csa1 = 0.0;
  double ss = 0.0;
  double bias = 0.0;
  double signal = 0.0;
  double noise = 0.0;
  double snr = 0.0;
  int m = 1;
  bool equal_means = false;          // |mu0 - mu1| < 1e-12; center-direction terms zeroed
  bool degenerate_spectrum = false;  // a class has no within-class variance
};

SnrComponents snr_decomposition(const ManifoldPair& pair, int m = 1);

// ---------------------------------------------------------------------------
// Per-position tracking

struct GeometryReport {
  CapacityResult capacity;
  SnrComponents snr;
  int n_probes = 0;
  std::uint64_t seed = 0;
  int m = 1;
  std::array<int, 2> class_sizes{};
};

struct PositionGeometry {
  int position = 0;  // 1-based in-context position
  std::optional<GeometryReport> report;
  std::string note;  // reason for a null report
};

/// Pool the position-t record-layer representation across trials, split it
/// by shown label, and measure capacity and SNR at every requested position.
std::vector<PositionGeometry> track_geometry(const TrialSet& trials, std::span<const int> positions,
                                             const CapacityOptions& options, int m = 1);

struct ConditionMeta {
  std::string condition_id;
  std::string model;
  std::string dataset;
  AxisRef axis;
};

/// Append one row per geometry metric per position (null values for missing
/// or degenerate measurements).
void append_geometry_metrics(MetricsTable& table, const ConditionMeta& meta, std::span<const PositionGeometry> rows);

/// Metric names emitted by append_geometry_metrics, in emission order.
std::span<const std::string_view> geometry_metric_names();

}  // namespace geolab
