#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "geolab/error.hpp"
#include "geolab/pipeline.hpp"

namespace {

using geolab::PipelineConfig;

struct Overrides {
  std::string config;
  std::string manifest;
  std::string out;
  std::string axes;
  std::string labels;
  std::string trials;
  std::string metrics;
  std::string dataset_labels;
  std::string model;
  std::string dataset;
  std::string synth;
  std::string fit_mode;
  std::vector<std::string> families;
  std::vector<int> ranks;
  std::vector<int> positions;
  std::optional<int> layers_count;
  std::optional<int> record_layer;
  std::optional<int> seq_len;
  std::optional<int> n_seq;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_probes;
  std::optional<double> kappa;
  std::optional<int> m;
  std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON pipeline config");
  cmd->add_option("--manifest", o.manifest, "representation manifest.json");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--threads", o.threads, "worker threads (fallback: GEOLAB_THREADS)");
  cmd->add_option("--model", o.model, "model name written to output tables");
  cmd->add_option("--dataset", o.dataset, "dataset name written to output tables");
}

void add_axes_opts(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--axes", o.axes, "axes.json path");
  cmd->add_option("--families", o.families, "axis families (pc, lr)");
  cmd->add_option("--ranks", o.ranks, "principal-component ranks");
  cmd->add_option("--layers-count", o.layers_count, "number of target layers");
  cmd->add_option("--record-layer", o.record_layer, "layer whose representations are recorded");
  cmd->add_option("--dataset-labels", o.dataset_labels, "JSON array of binary labels for the LR family");
}

void add_sample_opts(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--labels", o.labels, "labels.json path");
  cmd->add_option("--seq-len", o.seq_len, "sequence length");
  cmd->add_option("--n-seq", o.n_seq, "sequences per condition");
}

void add_analysis_opts(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--trials", o.trials, "trials.jsonl path");
  cmd->add_option("--metrics", o.metrics, "metrics.csv path");
  cmd->add_option("--n-probes", o.n_probes, "Gaussian probes per class");
  cmd->add_option("--kappa", o.kappa, "margin");
  cmd->add_option("--m", o.m, "shots for the SNR");
  cmd->add_option("--positions", o.positions, "in-context positions to evaluate (1-based)");
  cmd->add_option("--fit-mode", o.fit_mode, "pooled or per_trial");
}

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : geolab::load_config(o.config);
  if (!o.manifest.empty()) c.manifest = o.manifest;
  if (!o.out.empty()) c.out_dir = o.out;
  if (!o.axes.empty()) c.axes = o.axes;
  if (!o.labels.empty()) c.labels = o.labels;
  if (!o.trials.empty()) c.trials = o.trials;
  if (!o.metrics.empty()) c.metrics = o.metrics;
  if (!o.dataset_labels.empty()) c.dataset_labels = o.dataset_labels;
  if (!o.model.empty()) c.model = o.model;
  if (!o.dataset.empty()) c.dataset = o.dataset;
  if (!o.synth.empty()) c.synth = o.synth;
  if (!o.families.empty()) {
    c.families.clear();
    for (const auto& f : o.families) c.families.push_back(geolab::parse_axis_family(f));
  }
  if (!o.ranks.empty()) c.ranks = o.ranks;
  if (!o.positions.empty()) c.positions = o.positions;
  if (o.fit_mode == "pooled") c.fit_mode = geolab::FitMode::Pooled;
  else if (o.fit_mode == "per_trial") c.fit_mode = geolab::FitMode::PerTrial;
  else if (!o.fit_mode.empty()) throw geolab::Error(geolab::ErrorKind::Argument, "--fit-mode: expected pooled or per_trial");
  if (o.layers_count) c.layers_count = *o.layers_count;
  if (o.record_layer) c.record_layer = *o.record_layer;
  if (o.seq_len) c.seq_len = *o.seq_len;
  if (o.n_seq) c.n_seq = *o.n_seq;
  if (o.seed) c.seed = *o.seed;
  if (o.n_probes) c.n_probes = *o.n_probes;
  if (o.kappa) c.kappa = *o.kappa;
  if (o.m) c.m = *o.m;
  if (o.threads) c.threads = *o.threads;
  if (c.seq_len < 2) throw geolab::Error(geolab::ErrorKind::Argument, "--seq-len: must be at least 2");
  if (c.n_seq < 1) throw geolab::Error(geolab::ErrorKind::Argument, "--n-seq: must be positive");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geolab: representation geometry and in-context learning analysis"};
  app.require_subcommand(1);
  Overrides o;

  auto* ingest = app.add_subcommand("ingest", "validate a manifest and report per-layer statistics");
  add_common(ingest, o);
  auto* axes = app.add_subcommand("axes", "construct task axes per target layer");
  add_common(axes, o);
  add_axes_opts(axes, o);
  auto* label = app.add_subcommand("label", "binarize held-out examples under each axis");
  add_common(label, o);
  add_axes_opts(label, o);
  add_sample_opts(label, o);
  auto* sample = app.add_subcommand("sample", "sample trial sequences per condition");
  add_common(sample, o);
  add_sample_opts(sample, o);
  sample->add_option("--trials", o.trials, "trials.jsonl path");
  auto* geometry = app.add_subcommand("geometry", "manifold geometry across positions");
  add_common(geometry, o);
  add_analysis_opts(geometry, o);
  auto* fit = app.add_subcommand("fit-learners", "fit the six online learners to behavioral logits");
  add_common(fit, o);
  add_analysis_opts(fit, o);
  auto* correlate = app.add_subcommand("correlate", "correlate geometry with accuracy");
  add_common(correlate, o);
  add_analysis_opts(correlate, o);
  auto* run = app.add_subcommand("run", "full analysis pipeline");
  add_common(run, o);
  add_analysis_opts(run, o);
  run->add_option("--synth", o.synth, "run on a synthetic suite (graded)");
  auto* synth = app.add_subcommand("synth", "write a synthetic suite");
  add_common(synth, o);
  synth->add_option("--suite", o.synth, "suite name (default: graded)");

  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const PipelineConfig c = resolve(o);
    if (ingest->parsed()) {
      const auto s = geolab::cmd_ingest(c);
      std::printf("%s / %s: %lld examples, dim %lld, %zu layers\n", s.manifest.model_name.c_str(),
                  s.manifest.dataset_name.c_str(), static_cast<long long>(s.manifest.n_examples),
                  static_cast<long long>(s.manifest.dim), s.manifest.layers.size());
      for (const auto& [layer, norm] : s.layer_norms) std::printf("layer %d: mean norm %.6g\n", layer, norm);
    } else if (axes->parsed()) {
      const auto r = geolab::cmd_axes(c);
      for (const auto& note : r.notes) std::fprintf(stderr, "note: %s\n", note.c_str());
      std::printf("%zu axes\n", r.axes.size());
    } else if (label->parsed()) {
      for (const auto& l : geolab::cmd_label(c)) {
        std::printf("%s: %zu examples, class-1 fraction %.4f%s\n", l.condition_id.c_str(), l.labels.size(),
                    l.class1_fraction, l.degenerate ? " (degenerate)" : "");
      }
    } else if (sample->parsed()) {
      for (const auto& s : geolab::cmd_sample(c)) std::printf("%s: %zu trials\n", s.condition_id.c_str(), s.trials.size());
    } else if (geometry->parsed()) {
      std::printf("%zu metric rows\n", geolab::cmd_geometry(c).rows.size());
    } else if (fit->parsed()) {
      for (const auto& r : geolab::cmd_fit_learners(c)) {
        std::printf("%s %s %s beta=%.6g agreement=%.4f\n", r.condition_id.c_str(), r.learner.c_str(),
                    r.hyperparams.c_str(), r.beta_star, r.agreement);
      }
    } else if (correlate->parsed()) {
      for (const auto& r : geolab::cmd_correlate(c)) {
        std::printf("%s r=%.4f p=%.4g n=%zu\n", r.metric.c_str(), r.r, r.p, r.n);
      }
    } else if (run->parsed()) {
      const auto s = geolab::cmd_run(c);
      for (const auto& line : s.condition_lines) std::printf("%s\n", line.c_str());
    } else if (synth->parsed()) {
      geolab::cmd_synth(c);
      std::printf("wrote %s\n", c.out_dir.string().c_str());
    }
  } catch (const geolab::Error& e) {
    std::fprintf(stderr, "geolab %s: %s\n", name.c_str(), e.what());
    return e.kind() == geolab::ErrorKind::Io ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "geolab %s: %s\n", name.c_str(), e.what());
    return 1;
  }
  return 0;
}
