#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "geolab/error.hpp"
#include "geolab/rng.hpp"
#include "geolab/taskgen.hpp"
#include "helpers.hpp"

using namespace geolab;

namespace {

Matrix gaussian(Eigen::Index n, Eigen::Index d, std::uint64_t seed, const Vector& sd) {
  const CounterRng rng(seed, 0x7A5C);
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = sd(j) * rng.normal(static_cast<std::uint64_t>(i * d + j));
  }
  return x;
}

LabelAssignment toy_pool(int n) {
  LabelAssignment pool;
  pool.condition_id = "L0-PC1";
  pool.axis = AxisRef{AxisFamily::PC, 1, 0};
  for (int i = 0; i < n; ++i) {
    pool.example_indices.push_back(100 + i);
    pool.labels.push_back(i % 2);
  }
  pool.projections = Vector::Zero(n);
  return pool;
}

}  // namespace

TEST_SUITE("taskgen") {
  TEST_CASE("center: two rows") {
    Matrix x(2, 2);
    x << 1, 0, 3, 0;
    const CenteredData c = center(x);
    CHECK(c.mean(0) == 2.0);
    CHECK(c.mean(1) == 0.0);
    CHECK(c.centered(0, 0) == -1.0);
    CHECK(c.centered(1, 0) == 1.0);
  }

  TEST_CASE("center: already centered data is unchanged") {
    Matrix x(3, 2);
    x << 1, -2, -1, 2, 0, 0;
    const CenteredData c = center(x);
    CHECK(c.mean.cwiseAbs().maxCoeff() < 1e-15);
    testutil::check_matrix_near(c.centered, x, 1e-15);
  }

  TEST_CASE("center: random 100x8 has zero column sums") {
    const Matrix x = gaussian(100, 8, 1, Vector::Constant(8, 3.0)).array() + 5.0;
    const CenteredData c = center(x);
    CHECK(c.centered.colwise().sum().cwiseAbs().maxCoeff() < 1e-6);
    CHECK_THROWS_AS(center(Matrix::Ones(1, 3)), Error);
  }

  TEST_CASE("pca: all seven default ranks when the spectrum allows") {
    const Matrix x = gaussian(600, 520, 2, Vector::LinSpaced(520, 3.0, 0.5));
    const std::vector<int> ranks{1, 2, 4, 8, 32, 128, 512};
    const auto axes = pca_axes(center(x), ranks, 7);
    REQUIRE(axes.size() == 7);
    for (std::size_t i = 0; i < axes.size(); ++i) {
      CHECK(axes[i].rank == ranks[i]);
      CHECK(axes[i].target_layer == 7);
      CHECK(std::abs(axes[i].direction.norm() - 1.0) < 1e-12);
      CHECK(axes[i].condition_id() == "L7-PC" + std::to_string(ranks[i]));
      for (std::size_t j = 0; j < i; ++j) CHECK(std::abs(axes[i].direction.dot(axes[j].direction)) < 1e-9);
    }
  }

  TEST_CASE("pca: data on the first coordinate axis gives e1") {
    Matrix x = Matrix::Zero(4, 3);
    x.col(0) << -3, -1, 1, 3;
    const std::vector<int> ranks{1};
    const auto axes = pca_axes(center(x), ranks, 0);
    CHECK(axes[0].direction(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(axes[0].direction(1)) < 1e-12);
  }

  TEST_CASE("pca: diag(4,1) covariance, N=10000") {
    Vector sd(2);
    sd << 2.0, 1.0;
    const std::vector<int> ranks{1};
    const auto axes = pca_axes(center(gaussian(10000, 2, 3, sd)), ranks, 0);
    CHECK(std::abs(axes[0].direction(0)) > 0.99);
  }

  TEST_CASE("pca: sign convention, descending spectrum, error cases") {
    const Matrix x = gaussian(50, 6, 4, Vector::LinSpaced(6, 4.0, 1.0));
    const std::vector<int> ranks{1, 2, 3, 4, 5, 6};
    const auto axes = pca_axes(center(x), ranks, 0);
    for (const auto& a : axes) {
      Eigen::Index arg = 0;
      a.direction.cwiseAbs().maxCoeff(&arg);
      CHECK(a.direction(arg) > 0.0);
    }
    for (std::size_t k = 1; k < axes.size(); ++k) CHECK(axes[k].singular_value <= axes[k - 1].singular_value);
    // Explained variance along each axis follows the spectrum.
    const CenteredData c = center(x);
    for (const auto& a : axes) {
      CHECK((c.centered * a.direction).norm() == doctest::Approx(a.singular_value).epsilon(1e-9));
    }
    const std::vector<int> too_big{7};
    CHECK_THROWS_AS(pca_axes(center(x), too_big, 0), Error);
    const std::vector<int> one{1};
    CHECK_THROWS_AS(pca_axes(center(Matrix::Zero(5, 3)), one, 0), Error);
  }

  TEST_CASE("lr: separable 1-D data") {
    Matrix x(2, 1);
    x << -1, 1;
    const std::vector<int> y{0, 1};
    LrDiagnostics diag;
    LrOptions opt;
    opt.l2 = 0.01;
    const TaskAxis axis = fit_lr_axis(center(x), y, 0, opt, &diag);
    CHECK(axis.family == AxisFamily::LR);
    CHECK(axis.direction(0) > 0.0);
    CHECK(diag.training_accuracy == 1.0);
    CHECK(diag.gradient_norm <= 1e-6);
    CHECK(axis.condition_id() == "L0-LR");
  }

  TEST_CASE("lr: single-class labels are degenerate") {
    Matrix x(3, 1);
    x << -1, 0, 1;
    const std::vector<int> y{0, 0, 0};
    try {
      fit_lr_axis(center(x), y, 0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("degenerate labels") != std::string::npos);
    }
  }

  TEST_CASE("lr: random labels give chance training accuracy") {
    const int n = 4000;
    const Matrix x = gaussian(n, 5, 5, Vector::Ones(5));
    const CounterRng rng(6);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = rng.uniform(static_cast<std::uint64_t>(i)) < 0.5 ? 1 : 0;
    LrDiagnostics diag;
    fit_lr_axis(center(x), y, 0, {}, &diag);
    CHECK(std::abs(diag.training_accuracy - 0.5) <= 0.05);
  }

  TEST_CASE("binarize: thresholds strictly at zero") {
    TaskAxis axis;
    axis.direction = Vector::Unit(2, 0);
    axis.center = Vector::Zero(2);
    Matrix xc(3, 2);
    xc << 2, 5, -2, 1, 0, 3;
    const LabelAssignment l = binarize(xc, axis);
    CHECK(l.labels == std::vector<int>{1, 0, 0});
    CHECK(l.projections(2) == 0.0);
    CHECK(l.class1_fraction == doctest::Approx(1.0 / 3.0));
    CHECK_FALSE(l.degenerate);
  }

  TEST_CASE("binarize: all-same-sign projections are flagged") {
    TaskAxis axis;
    axis.direction = Vector::Unit(2, 0);
    axis.center = Vector::Zero(2);
    Matrix xc(2, 2);
    xc << 1, 0, 2, 0;
    CHECK(binarize(xc, axis).degenerate);
  }

  TEST_CASE("binarize: PC1 of a symmetric cloud is balanced; negated axis flips labels") {
    const std::vector<int> ranks{1};
    const CenteredData c = center(gaussian(2000, 4, 7, Vector::LinSpaced(4, 2.0, 1.0)));
    const TaskAxis axis = pca_axes(c, ranks, 0)[0];
    const LabelAssignment l = binarize(c.centered, axis);
    CHECK(l.class1_fraction >= 0.4);
    CHECK(l.class1_fraction <= 0.6);
    TaskAxis neg = axis;
    neg.direction = -axis.direction;
    const LabelAssignment f = binarize(c.centered, neg);
    for (std::size_t i = 0; i < l.labels.size(); ++i) {
      if (l.projections(static_cast<Eigen::Index>(i)) != 0.0) CHECK(f.labels[i] == 1 - l.labels[i]);
    }
  }

  TEST_CASE("label_examples centers with the training center") {
    TaskAxis axis;
    axis.direction = Vector::Unit(2, 0);
    axis.center = Vector::Constant(2, 10.0);
    Matrix raw(2, 2);
    raw << 11, 0, 9, 0;
    const LabelAssignment l = label_examples(raw, axis, {4, 9});
    CHECK(l.labels == std::vector<int>{1, 0});
    CHECK(l.example_indices == std::vector<std::int64_t>{4, 9});
  }

  TEST_CASE("select_target_layers") {
    CHECK(select_target_layers(36, 5) == std::vector<LayerId>{6, 12, 18, 24, 30});
    CHECK(select_target_layers(6, 5) == std::vector<LayerId>{1, 2, 3, 4, 5});
    for (int layers = 12; layers <= 200; ++layers) {
      const auto out = select_target_layers(layers, 5);
      CHECK(out.size() == 5);
      CHECK(std::is_sorted(out.begin(), out.end()));
      CHECK(std::set<LayerId>(out.begin(), out.end()).size() == 5);
    }
    CHECK_THROWS_AS(select_target_layers(5, 5), Error);
  }

  TEST_CASE("split_examples partitions deterministically") {
    const ExampleSplit a = split_examples(101, 0.5, 3);
    const ExampleSplit b = split_examples(101, 0.5, 3);
    CHECK(a.train == b.train);
    CHECK(a.eval == b.eval);
    CHECK(a.train.size() + a.eval.size() == 101);
    std::set<std::int64_t> all(a.train.begin(), a.train.end());
    all.insert(a.eval.begin(), a.eval.end());
    CHECK(all.size() == 101);
  }

  TEST_CASE("sample_trials: defaults give 200 trials") {
    const TrialSet set = sample_trials(toy_pool(600), kDefaultSeqLen, kDefaultNumSequences, 1);
    CHECK(set.trials.size() == 200);
    CHECK(set.sequence_length() == 500);
    CHECK_NOTHROW(validate_trials(set));
  }

  TEST_CASE("sample_trials: n_seq=2, seq_len=3 gives 4 trials with flipped complements") {
    const LabelAssignment pool = toy_pool(10);
    const TrialSet set = sample_trials(pool, 3, 2, 9);
    REQUIRE(set.trials.size() == 4);
    int complements = 0;
    for (std::size_t k = 0; k < 4; k += 2) {
      const Trial& orig = set.trials[k];
      const Trial& comp = set.trials[k + 1];
      CHECK_FALSE(orig.is_complement);
      CHECK(comp.is_complement);
      CHECK(orig.sequence == comp.sequence);
      std::set<std::int64_t> distinct(orig.sequence.begin(), orig.sequence.end());
      CHECK(distinct.size() == 3);
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(comp.shown_labels[i] == 1 - orig.shown_labels[i]);
        // Original labels are the pool labels of the sampled example.
        const auto pos = std::find(pool.example_indices.begin(), pool.example_indices.end(), orig.sequence[i]);
        REQUIRE(pos != pool.example_indices.end());
        CHECK(orig.shown_labels[i] == pool.labels[static_cast<std::size_t>(pos - pool.example_indices.begin())]);
      }
    }
    for (const Trial& t : set.trials) complements += t.is_complement ? 1 : 0;
    CHECK(complements == 2);
  }

  TEST_CASE("sample_trials: deterministic and seed-sensitive; pool too small fails") {
    const LabelAssignment pool = toy_pool(50);
    const TrialSet a = sample_trials(pool, 20, 5, 4);
    const TrialSet b = sample_trials(pool, 20, 5, 4);
    const TrialSet c = sample_trials(pool, 20, 5, 5);
    for (std::size_t k = 0; k < a.trials.size(); ++k) CHECK(a.trials[k].sequence == b.trials[k].sequence);
    bool differs = false;
    for (std::size_t k = 0; k < a.trials.size(); ++k) differs = differs || a.trials[k].sequence != c.trials[k].sequence;
    CHECK(differs);
    CHECK_THROWS_AS(sample_trials(pool, 51, 1, 0), Error);
  }

  TEST_CASE("axes and labels files round-trip") {
    testutil::TempDir dir("axes_io");
    const std::vector<int> ranks{1, 2};
    const auto axes = pca_axes(center(gaussian(30, 4, 8, Vector::Ones(4))), ranks, 3);
    const ExampleSplit split = split_examples(30, 0.5, 1);
    save_axes(dir / "axes.json", axes, split);
    ExampleSplit back_split;
    const auto back = load_axes(dir / "axes.json", &back_split);
    REQUIRE(back.size() == 2);
    CHECK(back[1].rank == 2);
    CHECK(back[1].direction == axes[1].direction);
    CHECK(back[1].center == axes[1].center);
    CHECK(back_split.eval == split.eval);

    const std::vector<LabelAssignment> labels{binarize(center(gaussian(30, 4, 8, Vector::Ones(4))).centered, axes[0])};
    save_labels(dir / "labels.json", labels);
    const auto lback = load_labels(dir / "labels.json");
    REQUIRE(lback.size() == 1);
    CHECK(lback[0].labels == labels[0].labels);
    CHECK(lback[0].condition_id == labels[0].condition_id);
  }
}
