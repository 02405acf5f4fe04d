#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include "doctest.h"
#include "geolab/error.hpp"
#include "geolab/repstore.hpp"
#include "geolab/rng.hpp"
#include "helpers.hpp"

using namespace geolab;
using testutil::TempDir;

namespace {

void write_floats(const fs::path& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

// Manifest text written by hand, as an external producer would.
void write_hand_manifest(const TempDir& dir, const std::string& checksum, int schema = 1) {
  std::ofstream out(dir / "manifest.json");
  out << "{\n"
      << "  \"schema_version\": " << schema << ",\n"
      << "  \"model_name\": \"tiny\",\n"
      << "  \"dataset_name\": \"toy\",\n"
      << "  \"dim\": 3,\n"
      << "  \"n_examples\": 4,\n"
      << "  \"layers\": [2],\n"
      << "  \"tensor_files\": {\"2\": \"2.f32\"},\n"
      << "  \"dtype\": \"f32le\",\n"
      << "  \"checksums\": {\"2.f32\": \"" << checksum << "\"}\n"
      << "}\n";
}

Matrix random_f32_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  const CounterRng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = static_cast<double>(static_cast<float>(rng.normal(static_cast<std::uint64_t>(i * cols + j))));
    }
  }
  return m;
}

TrialSet small_trial_set(bool with_arrays) {
  TrialSet set;
  set.condition_id = "L3-PC2";
  set.axis = AxisRef{AxisFamily::PC, 2, 3};
  Trial a;
  a.sequence = {0, 2, 1};
  a.shown_labels = {1, 0, 1};
  Trial b = a;
  b.is_complement = true;
  b.shown_labels = {0, 1, 0};
  if (with_arrays) {
    a.logits = random_f32_matrix(3, 2, 1);
    b.logits = random_f32_matrix(3, 2, 2);
    a.reps = random_f32_matrix(3, 4, 3);
    b.reps = random_f32_matrix(3, 4, 4);
  }
  set.trials = {a, b};
  return set;
}

}  // namespace

TEST_SUITE("repstore") {
  TEST_CASE("hand-written manifest with one 4x3 layer loads") {
    TempDir dir("manifest_hand");
    std::vector<float> values(12);
    for (int i = 0; i < 12; ++i) values[static_cast<std::size_t>(i)] = static_cast<float>(i) * 0.5f;
    write_floats(dir / "2.f32", values);
    write_hand_manifest(dir, sha256_file(dir / "2.f32"));

    const Manifest m = load_manifest(dir / "manifest.json");
    CHECK(m.n_examples == 4);
    CHECK(m.dim == 3);
    CHECK(m.layers == std::vector<LayerId>{2});
    const RepMatrix rep = load_rep_matrix(m, 2);
    CHECK(rep.data.rows() == 4);
    CHECK(rep.data(1, 2) == doctest::Approx(2.5));
    CHECK(rep.data(3, 0) == doctest::Approx(4.5));
  }

  TEST_CASE("tensor file one byte short reports a size mismatch") {
    TempDir dir("manifest_short");
    std::vector<float> values(12, 1.0f);
    write_floats(dir / "2.f32", values);
    {
      std::vector<char> bytes(47, 0);
      std::ofstream out(dir / "2.f32", std::ios::binary | std::ios::trunc);
      out.write(bytes.data(), 47);
    }
    write_hand_manifest(dir, sha256_file(dir / "2.f32"));
    const auto msg = error_message([&] { load_manifest(dir / "manifest.json"); });
    CHECK(msg.find("size mismatch") != std::string::npos);
    CHECK(msg.find("tensor_files[2]") != std::string::npos);
  }

  TEST_CASE("checksum mismatch and unsupported schema name the field") {
    TempDir dir("manifest_bad");
    write_floats(dir / "2.f32", std::vector<float>(12, 1.0f));
    write_hand_manifest(dir, std::string(64, '0'));
    auto msg = error_message([&] { load_manifest(dir / "manifest.json"); });
    CHECK(msg.find("checksum mismatch") != std::string::npos);
    CHECK(msg.find("checksums[2.f32]") != std::string::npos);

    write_hand_manifest(dir, sha256_file(dir / "2.f32"), 99);
    msg = error_message([&] { load_manifest(dir / "manifest.json"); });
    CHECK(msg.find("schema_version") != std::string::npos);
  }

  TEST_CASE("missing manifest is an I/O error naming the path") {
    TempDir dir("manifest_missing");
    const fs::path p = dir / "nope.json";
    try {
      load_manifest(p);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Io);
      CHECK(std::string(e.what()).find(p.string()) != std::string::npos);
    }
  }

  TEST_CASE("missing tensor file is reported") {
    TempDir dir("manifest_nofile");
    write_hand_manifest(dir, std::string(64, '0'));
    const auto msg = error_message([&] { load_manifest(dir / "manifest.json"); });
    CHECK(msg.find("tensor_files[2]") != std::string::npos);
    CHECK(msg.find("missing file") != std::string::npos);
  }

  TEST_CASE("save then load reproduces the manifest") {
    TempDir dir("manifest_roundtrip");
    Manifest m;
    m.model_name = "m";
    m.dataset_name = "d";
    m.base_dir = dir.path();
    register_layer(m, 4, random_f32_matrix(5, 3, 9));
    register_layer(m, 8, random_f32_matrix(5, 3, 10));
    save_manifest(m, dir / "manifest.json");
    const Manifest back = load_manifest(dir / "manifest.json");
    CHECK(back == m);
    CHECK(back.dtype == "f32le");
    CHECK(back.schema_version == kSchemaVersion);
  }

  TEST_CASE("decode of [1.0, 2.0] with N=1, d=2") {
    TempDir dir("decode");
    write_floats(dir / "x.f32", {1.0f, 2.0f});
    const Matrix m = read_f32(dir / "x.f32", 1, 2);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(0, 1) == 2.0);
  }

  TEST_CASE("NaN entries are rejected with their coordinates") {
    TempDir dir("nan");
    write_floats(dir / "x.f32", {1.0f, 2.0f, std::numeric_limits<float>::quiet_NaN(), 4.0f});
    const auto msg = error_message([&] { read_f32(dir / "x.f32", 2, 2); });
    CHECK(msg.find("non-finite entry at (1,0)") != std::string::npos);
  }

  TEST_CASE("1000x64 random matrix round-trips bit-identically") {
    TempDir dir("bits");
    const Matrix m = random_f32_matrix(1000, 64, 77);
    write_f32(dir / "r.f32", m);
    const Matrix back = read_f32(dir / "r.f32", 1000, 64);
    CHECK(std::memcmp(m.data(), back.data(), sizeof(double) * 64000) == 0);
  }

  TEST_CASE("unknown layer is an argument error") {
    TempDir dir("unknown_layer");
    Manifest m;
    m.base_dir = dir.path();
    register_layer(m, 1, random_f32_matrix(2, 2, 1));
    CHECK_THROWS_AS(load_rep_matrix(m, 5), Error);
  }

  TEST_CASE("metrics CSV: header only, one row, deterministic bytes") {
    TempDir dir("metrics");
    MetricsTable empty;
    save_metrics(empty, dir / "empty.csv");
    CHECK(read_text_file(dir / "empty.csv") == "condition_id,model,dataset,family,rank,target_layer,position,metric,value\n");

    MetricsTable one;
    one.rows.push_back(MetricRow{"L1-PC1", "m", "d", "PC", 1, 1, 5, "capacity", 0.1});
    save_metrics(one, dir / "one.csv");
    const std::string text = read_text_file(dir / "one.csv");
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(text.find("0.10000000000000001") != std::string::npos);

    save_metrics(one, dir / "one_again.csv");
    CHECK(read_text_file(dir / "one_again.csv") == text);
  }

  TEST_CASE("metrics rows are sorted and round-trip with nulls") {
    TempDir dir("metrics_sort");
    MetricsTable t;
    t.rows.push_back(MetricRow{"B", "m", "d", "PC", 1, 0, 2, "snr", 1.5});
    t.rows.push_back(MetricRow{"A", "m", "d", "LR", 0, 0, 10, "radius", std::nullopt});
    t.rows.push_back(MetricRow{"A", "m", "d", "LR", 0, 0, 2, "capacity", 0.25});
    save_metrics(t, dir / "m.csv");
    const MetricsTable back = load_metrics(dir / "m.csv");
    REQUIRE(back.rows.size() == 3);
    CHECK(back.rows[0].condition_id == "A");
    CHECK(back.rows[0].position == 2);
    CHECK(back.rows[1].position == 10);
    CHECK_FALSE(back.rows[1].value.has_value());
    CHECK(back.rows[2].condition_id == "B");
    CHECK(*back.rows[2].value == 1.5);
  }

  TEST_CASE("duplicate metric keys and non-finite values are invalid") {
    MetricsTable t;
    t.rows.push_back(MetricRow{"A", "m", "d", "PC", 1, 0, 1, "snr", 1.0});
    t.rows.push_back(MetricRow{"A", "m", "d", "PC", 1, 0, 1, "snr", 2.0});
    CHECK_THROWS(t.validate());
    MetricsTable u;
    u.rows.push_back(MetricRow{"A", "m", "d", "PC", 1, 0, 1, "snr", std::numeric_limits<double>::infinity()});
    CHECK_THROWS(u.validate());
  }

  TEST_CASE("fits CSV round-trips") {
    TempDir dir("fits");
    std::vector<FitRow> rows{{"L1-PC1", "ogd", "eta=0.1;lambda=0", 1.25, 0.75, 40},
                             {"L1-PC1", "bayes", "tau2=1;sigma2=1", -0.5, 0.5, 41}};
    save_fits(rows, dir / "fits.csv");
    const auto back = load_fits(dir / "fits.csv");
    REQUIRE(back.size() == 2);
    bool found = false;
    for (const auto& r : back) {
      if (r.learner == "ogd") {
        found = true;
        CHECK(r.hyperparams == "eta=0.1;lambda=0");
        CHECK(r.beta_star == 1.25);
        CHECK(r.n_positions == 40);
      }
    }
    CHECK(found);
  }

  TEST_CASE("trials round-trip with and without arrays") {
    TempDir dir("trials");
    for (bool arrays : {false, true}) {
      const TrialSet set = small_trial_set(arrays);
      const std::vector<TrialSet> sets{set};
      const fs::path path = dir / (arrays ? "with.jsonl" : "without.jsonl");
      save_trials(path, sets);
      const auto back = load_trials(path);
      REQUIRE(back.size() == 1);
      CHECK(back[0].condition_id == set.condition_id);
      CHECK(back[0].axis == set.axis);
      REQUIRE(back[0].trials.size() == 2);
      for (std::size_t k = 0; k < 2; ++k) {
        CHECK(back[0].trials[k].sequence == set.trials[k].sequence);
        CHECK(back[0].trials[k].shown_labels == set.trials[k].shown_labels);
        CHECK(back[0].trials[k].is_complement == set.trials[k].is_complement);
        CHECK(back[0].trials[k].logits.has_value() == arrays);
        if (arrays) {
          CHECK(*back[0].trials[k].logits == *set.trials[k].logits);
          CHECK(*back[0].trials[k].reps == *set.trials[k].reps);
        }
      }
    }
  }

  TEST_CASE("trial validation enforces complement pairing, lengths and index range") {
    TrialSet ok = small_trial_set(false);
    CHECK_NOTHROW(validate_trials(ok, 3));
    CHECK_THROWS(validate_trials(ok, 2));

    TrialSet unflipped = ok;
    unflipped.trials[1].shown_labels = {1, 1, 0};
    CHECK_THROWS(validate_trials(unflipped));

    TrialSet unpaired = ok;
    unpaired.trials.pop_back();
    CHECK_THROWS(validate_trials(unpaired));

    TrialSet ragged = ok;
    ragged.trials[1].sequence.push_back(0);
    ragged.trials[1].shown_labels.push_back(1);
    CHECK_THROWS(validate_trials(ragged));

    TrialSet bad_label = ok;
    bad_label.trials[0].shown_labels[0] = 2;
    CHECK_THROWS(validate_trials(bad_label));
  }

  TEST_CASE("axis families print and parse") {
    CHECK(to_string(AxisFamily::PC) == "PC");
    CHECK(to_string(AxisFamily::LR) == "LR");
    CHECK(parse_axis_family("LR") == AxisFamily::LR);
    CHECK_THROWS(parse_axis_family("XX"));
  }
}
