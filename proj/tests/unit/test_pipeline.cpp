#include <fstream>

#include "doctest.h"
#include "geolab/error.hpp"
#include "geolab/pipeline.hpp"
#include "geolab/rng.hpp"
#include "geolab/synthlab.hpp"
#include "helpers.hpp"

using namespace geolab;

namespace {

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Two layers of 120 Gaussian examples in 6 dims with a decaying spectrum.
fs::path tiny_manifest(const fs::path& dir) {
  Manifest m;
  m.model_name = "tiny";
  m.dataset_name = "toy";
  m.base_dir = dir;
  for (LayerId layer : {3, 8}) {
    const CounterRng rng(50, static_cast<std::uint64_t>(layer));
    Matrix x(120, 6);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = (6.0 - j) * rng.normal(static_cast<std::uint64_t>(i * 6 + j));
    }
    register_layer(m, layer, x);
  }
  save_manifest(m, dir / "manifest.json");
  return dir / "manifest.json";
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config: keys, relative paths and unknown keys") {
    testutil::TempDir dir("config");
    write(dir / "ok.json",
          R"({"manifest": "data/manifest.json", "ranks": [1, 2], "families": ["PC"], "seed": 4,
              "fit_mode": "per_trial", "grids": {"ogd": [[0.3, 0.0]]}, "positions": [1, 3]})");
    const PipelineConfig c = load_config(dir / "ok.json");
    CHECK(c.manifest == dir / "data/manifest.json");
    CHECK(c.ranks == std::vector<int>{1, 2});
    CHECK(c.families == std::vector<AxisFamily>{AxisFamily::PC});
    CHECK(c.seed == 4);
    CHECK(c.fit_mode == FitMode::PerTrial);
    CHECK(grid_for(c, LearnerKind::Ogd).size() == 1);
    CHECK(grid_for(c, LearnerKind::Bayes).size() == 6);

    write(dir / "bad.json", R"({"manifest": "m.json", "colour": "blue"})");
    try {
      load_config(dir / "bad.json");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
      CHECK(std::string(e.what()).find("colour") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config(dir / "absent.json"), Error);
  }

  TEST_CASE("evaluation positions") {
    const PipelineConfig c;
    const auto p = evaluation_positions(c, 500);
    CHECK(p.front() == 1);
    CHECK(p[1] == 25);
    CHECK(p.back() == 500);
    CHECK(p.size() == 21);
    CHECK(evaluation_positions(c, 10).size() == 10);
    PipelineConfig explicit_positions;
    explicit_positions.positions = {7, 3, 3, 900};
    CHECK(evaluation_positions(explicit_positions, 10) == std::vector<int>{3, 7});
  }

  TEST_CASE("axes, label and sample chain on a tiny manifest") {
    testutil::TempDir dir("chain");
    PipelineConfig c;
    c.manifest = tiny_manifest(dir.path());
    c.out_dir = dir.path();
    c.families = {AxisFamily::PC, AxisFamily::LR};
    c.ranks = {1, 2, 512};
    c.seq_len = 5;
    c.n_seq = 3;
    c.seed = 2;

    const IngestSummary ingest = cmd_ingest(c);
    CHECK(ingest.layer_norms.size() == 2);

    const AxesResult axes = cmd_axes(c);
    CHECK(axes.axes.size() == 4);  // two layers x ranks {1, 2}
    bool lr_note = false;
    bool rank_note = false;
    for (const auto& n : axes.notes) {
      lr_note = lr_note || n.find("LR family skipped") != std::string::npos;
      rank_note = rank_note || n.find("rank 512") != std::string::npos;
    }
    CHECK(lr_note);
    CHECK(rank_note);

    const auto labels = cmd_label(c);
    REQUIRE(labels.size() == 4);
    CHECK(labels[0].example_indices.size() == axes.split.eval.size());
    CHECK(labels[0].condition_id == "L3-PC1");

    const auto sets = cmd_sample(c);
    REQUIRE(sets.size() == 4);
    for (const TrialSet& s : sets) {
      CHECK(s.trials.size() == 6);
      CHECK(s.sequence_length() == 5);
    }
    CHECK(load_trials(dir / "trials.jsonl").size() == 4);
  }

  TEST_CASE("axes with dataset labels adds the LR family") {
    testutil::TempDir dir("chain_lr");
    PipelineConfig c;
    c.manifest = tiny_manifest(dir.path());
    c.out_dir = dir.path();
    c.ranks = {1};
    std::string labels = "[";
    for (int i = 0; i < 120; ++i) labels += std::string(i ? "," : "") + (i % 3 == 0 ? "1" : "0");
    write(dir / "y.json", labels + "]");
    c.dataset_labels = dir / "y.json";
    const AxesResult axes = cmd_axes(c);
    REQUIRE(axes.axes.size() == 4);
    CHECK(axes.axes[1].family == AxisFamily::LR);
  }

  TEST_CASE("analysis stages on a small synthetic fixture") {
    testutil::TempDir dir("stages");
    GradedOptions o;
    o.n_conditions = 3;
    o.n_sequences = 4;
    o.seq_len = 20;
    o.pool_size = 200;
    write_suite(graded_difficulty_suite(1, o), dir / "fixture");

    PipelineConfig c;
    c.manifest = dir / "fixture" / "manifest.json";
    c.trials = dir / "fixture" / "trials.jsonl";
    c.out_dir = dir.path();
    c.n_probes = 100;
    c.positions = {2, 10, 20};

    const MetricsTable m = cmd_geometry(c);
    CHECK(m.rows.size() == 3 * 3 * geometry_metric_names().size());
    CHECK(fs::exists(dir / "metrics.csv"));
    CHECK(m.rows.front().model == "synthetic");

    const auto fits = cmd_fit_learners(c);
    CHECK(fits.size() == 3 * kAllLearners.size());
    CHECK(fits.front().learner == "prototype");
    CHECK(fits.front().agreement == 1.0);

    const auto corr = cmd_correlate(c);
    CHECK_FALSE(corr.empty());
    CHECK(fs::exists(dir / "correlations.csv"));
  }

  TEST_CASE("run: missing manifest is an I/O error naming the path") {
    PipelineConfig c;
    c.manifest = "/nonexistent/manifest.json";
    try {
      cmd_run(c);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Io);
      CHECK(std::string(e.what()).find("/nonexistent/manifest.json") != std::string::npos);
    }
    c.synth = "bogus";
    CHECK_THROWS_AS(cmd_run(c), Error);
  }
}
