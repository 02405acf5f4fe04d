#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "geolab/analysis.hpp"
#include "geolab/error.hpp"
#include "geolab/learners.hpp"
#include "geolab/parallel.hpp"
#include "geolab/pipeline.hpp"
#include "geolab/synthlab.hpp"

using namespace geolab;

namespace {

GradedOptions small_suite() {
  GradedOptions o;
  o.n_conditions = 3;
  o.n_sequences = 4;
  o.seq_len = 30;
  o.pool_size = 300;
  return o;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_SUITE("synthlab") {
  TEST_CASE("oracle: single constraint cases") {
    Matrix s(1, 2);
    s << 1, 0;
    Vector g(2);
    g << -2, 1;
    ProbeSolution sat = naive_qp_oracle(s, g, 0.0);
    CHECK(sat.v_star == g);
    CHECK(sat.adjustment == 0.0);
    CHECK_FALSE(sat.anchor.has_value());

    Matrix s2(1, 3);
    s2 << 1, 2, -1;
    Vector g2(3);
    g2 << 1, 1, 0.5;
    const ProbeSolution viol = naive_qp_oracle(s2, g2, 0.0);
    const Vector closed = g2 - s2.row(0).dot(g2) * s2.row(0).transpose() / s2.row(0).squaredNorm();
    CHECK((viol.v_star - closed).norm() < 1e-12);
  }

  TEST_CASE("oracle rejects too many constraints") {
    CHECK_THROWS_AS(naive_qp_oracle(Matrix::Ones(kOracleMaxConstraints + 1, 2), Vector::Ones(2), 0.0), Error);
  }

  TEST_CASE("gaussian manifolds: seeds and symmetric null case") {
    SynthSpec spec;
    spec.dim = 4;
    spec.n_per_class = 2000;
    spec.separation = 0.0;
    spec.spectrum = {1.0, 1.0, 1.0, 1.0};
    spec.seed = 5;
    const SynthManifolds a = gen_gaussian_manifolds(spec);
    const SynthManifolds b = gen_gaussian_manifolds(spec);
    CHECK(a.pair.m0 == b.pair.m0);
    CHECK(a.pair.m1 == b.pair.m1);
    CHECK(a.labels.size() == 4000);
    spec.seed = 6;
    CHECK(gen_gaussian_manifolds(spec).pair.m0 != a.pair.m0);
    CHECK(std::abs(snr_decomposition(a.pair).snr) < 0.05);
  }

  TEST_CASE("gaussian manifolds: well separated point-like clouds approach the point limit") {
    SynthSpec spec;
    spec.dim = 3;
    spec.n_per_class = 4;
    spec.separation = 20.0;
    spec.spectrum = {0.01, 0.01, 0.01};
    spec.seed = 1;
    CapacityOptions opt;
    opt.n_probes = 4000;
    const CapacityResult r = capacity(gen_gaussian_manifolds(spec).pair, opt);
    CHECK(r.capacity < 2.0 + 4.0 * r.capacity_se);
    CHECK(r.capacity > 1.5);
  }

  TEST_CASE("surrogate: zero temperature and self agreement") {
    const GradedSuite suite = graded_difficulty_suite(3, small_suite());
    const TrialSet& trials = suite.conditions.front();
    for (const Matrix& m : surrogate_behavior(LearnerConfig{LearnerKind::Kalman, 1.0, 1.0}, 0.0, trials, 1)) {
      CHECK(m.cwiseAbs().maxCoeff() == 0.0);
    }
    const auto streams = streams_from_trials(trials, joint_mean(trials));
    for (LearnerKind k : kAllLearners) {
      const LearnerConfig cfg = default_grid(k).front();
      const auto logits = surrogate_behavior(cfg, 1.5, trials, 1);
      std::vector<std::vector<double>> odds;
      for (const Matrix& m : logits) odds.push_back(behavioral_log_odds(m));
      const std::vector<LearnerConfig> grid{cfg};
      const FamilyFit fit = fit_family(grid, streams, odds);
      CAPTURE(to_string(k));
      CHECK(fit.best.agreement == 1.0);
      CHECK(std::abs(fit.best.beta - 1.5) < 1e-9);
    }
  }

  TEST_CASE("surrogate: temperature recovered under noise") {
    const GradedSuite suite = graded_difficulty_suite(4, small_suite());
    const TrialSet& trials = suite.conditions.front();
    const auto streams = streams_from_trials(trials, joint_mean(trials));
    const auto logits = surrogate_behavior(LearnerConfig{LearnerKind::Prototype}, 2.0, trials, 9, 0.05);
    std::vector<std::vector<double>> odds;
    for (const Matrix& m : logits) odds.push_back(behavioral_log_odds(m));
    const auto grid = default_grid(LearnerKind::Prototype);
    CHECK(std::abs(fit_family(grid, streams, odds).best.beta - 2.0) <= 0.05);
  }

  TEST_CASE("graded suite: shape and determinism") {
    const GradedOptions o = small_suite();
    const GradedSuite a = graded_difficulty_suite(2, o);
    const GradedSuite b = graded_difficulty_suite(2, o);
    REQUIRE(a.conditions.size() == 3);
    CHECK(a.pool == b.pool);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(a.conditions[c].trials.size() == 8);
      CHECK(a.conditions[c].sequence_length() == 30);
      CHECK(a.conditions[c].has_reps());
      CHECK(a.conditions[c].has_logits());
      CHECK(*a.conditions[c].trials[3].reps == *b.conditions[c].trials[3].reps);
      CHECK_NOTHROW(validate_trials(a.conditions[c], o.pool_size));
    }
    CHECK(a.axis_variance.front() > a.axis_variance.back());
  }
}

TEST_SUITE("graded") {
  TEST_CASE("graded suite orders difficulty from the top axis to the bottom axis") {
    const GradedSuite suite = graded_difficulty_suite(7);
    const std::vector<int> positions = evaluation_positions(PipelineConfig{}, suite.options.seq_len);
    CapacityOptions opt;
    opt.n_probes = kDefaultProbes;
    opt.seed = 7;
    opt.threads = resolve_threads(0);
    std::vector<double> acc;
    std::vector<double> cap;
    for (const TrialSet& t : suite.conditions) {
      acc.push_back(mean(accuracy_from_logits(t).accuracy));
      std::vector<double> caps;
      for (const PositionGeometry& g : track_geometry(t, positions, opt)) {
        if (g.report) caps.push_back(g.report->capacity.capacity);
      }
      cap.push_back(mean(caps));
    }
    CHECK(std::max_element(acc.begin(), acc.end()) == acc.begin());
    std::size_t nearest = 0;
    for (std::size_t c = 1; c < acc.size(); ++c) {
      if (std::abs(acc[c] - 0.5) < std::abs(acc[nearest] - 0.5)) nearest = c;
    }
    CHECK(nearest == acc.size() - 1);
    for (std::size_t c = 1; c < cap.size(); ++c) {
      CAPTURE(c);
      CHECK(cap[c] < cap[c - 1]);
    }
  }
}
