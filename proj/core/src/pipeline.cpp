#include "geolab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "geolab/error.hpp"
#include "geolab/geometry.hpp"
#include "geolab/parallel.hpp"
#include "geolab/synthlab.hpp"
#include "json.hpp"

namespace geolab {

using json = nlohmann::json;

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "config not found: " + path.string());
  PipelineConfig c;
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": malformed config: " + e.what());
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const json& v) {
    const fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "manifest") c.manifest = resolve(v);
      else if (key == "out_dir") c.out_dir = resolve(v);
      else if (key == "axes") c.axes = resolve(v);
      else if (key == "labels") c.labels = resolve(v);
      else if (key == "trials") c.trials = resolve(v);
      else if (key == "metrics") c.metrics = resolve(v);
      else if (key == "dataset_labels") c.dataset_labels = resolve(v);
      else if (key == "model") c.model = v.get<std::string>();
      else if (key == "dataset") c.dataset = v.get<std::string>();
      else if (key == "families") {
        c.families.clear();
        for (const auto& f : v) c.families.push_back(parse_axis_family(f.get<std::string>()));
      } else if (key == "ranks") c.ranks = v.get<std::vector<int>>();
      else if (key == "layers_count") c.layers_count = v.get<int>();
      else if (key == "record_layer") c.record_layer = v.get<LayerId>();
      else if (key == "eval_fraction") c.eval_fraction = v.get<double>();
      else if (key == "l2") c.l2 = v.get<double>();
      else if (key == "seq_len") c.seq_len = v.get<int>();
      else if (key == "n_seq") c.n_seq = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "n_probes") c.n_probes = v.get<int>();
      else if (key == "kappa") c.kappa = v.get<double>();
      else if (key == "m") c.m = v.get<int>();
      else if (key == "positions") c.positions = v.get<std::vector<int>>();
      else if (key == "fit_mode") {
        const auto mode = v.get<std::string>();
        if (mode == "pooled") c.fit_mode = FitMode::Pooled;
        else if (mode == "per_trial") c.fit_mode = FitMode::PerTrial;
        else throw Error(ErrorKind::Format, "fit_mode: expected 'pooled' or 'per_trial'");
      } else if (key == "grids") {
        for (const auto& [name, points] : v.items()) {
          const LearnerKind kind = parse_learner_kind(name);
          std::vector<LearnerConfig> grid;
          for (const auto& pt : points) {
            const auto pair = pt.get<std::vector<double>>();
            if (pair.size() != 2) throw Error(ErrorKind::Format, "grids." + name + ": entries must be [a, b]");
            grid.push_back(LearnerConfig{kind, pair[0], pair[1]});
          }
          c.grids[kind] = std::move(grid);
        }
      } else if (key == "threads") c.threads = v.get<unsigned>();
      else if (key == "synth") c.synth = v.get<std::string>();
      else throw Error(ErrorKind::Format, path.string() + ": unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": bad config value: " + e.what());
  }
  if (c.ranks.empty()) throw Error(ErrorKind::Format, "ranks: must be nonempty");
  if (c.seq_len < 2) throw Error(ErrorKind::Format, "seq_len: must be at least 2");
  return c;
}

std::vector<LearnerConfig> grid_for(const PipelineConfig& config, LearnerKind kind) {
  const auto it = config.grids.find(kind);
  return it != config.grids.end() && !it->second.empty() ? it->second : default_grid(kind);
}

std::vector<int> evaluation_positions(const PipelineConfig& config, int seq_len) {
  std::vector<int> out;
  if (!config.positions.empty()) {
    for (int p : config.positions) {
      if (p >= 1 && p <= seq_len) out.push_back(p);
    }
  } else {
    const int step = std::max(1, seq_len / 20);
    out.push_back(1);
    for (int p = step; p <= seq_len; p += step) {
      if (p != 1) out.push_back(p);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

fs::path or_default(const fs::path& p, const fs::path& dir, const char* name) { return p.empty() ? dir / name : p; }

Manifest require_manifest(const PipelineConfig& config) {
  if (config.manifest.empty()) throw Error(ErrorKind::Argument, "no manifest given (--manifest)");
  return load_manifest(config.manifest);
}

std::vector<LayerId> target_layers(const Manifest& m, int count) {
  std::vector<LayerId> sorted = m.layers;
  std::sort(sorted.begin(), sorted.end());
  if (static_cast<int>(sorted.size()) <= count) return sorted;
  std::vector<LayerId> out;
  for (LayerId ordinal : select_target_layers(static_cast<int>(sorted.size()), count)) {
    out.push_back(sorted[static_cast<std::size_t>(std::min<LayerId>(ordinal, static_cast<LayerId>(sorted.size()) - 1))]);
  }
  return out;
}

Matrix select_rows(const Matrix& x, const std::vector<std::int64_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

std::vector<TrialSet> require_trials(const PipelineConfig& config) {
  const fs::path path = or_default(config.trials, config.out_dir, "trials.jsonl");
  auto sets = load_trials(path);
  for (const TrialSet& s : sets) validate_trials(s);
  return sets;
}

struct Names {
  std::string model;
  std::string dataset;
};

Names output_names(const PipelineConfig& config) {
  Names n{config.model, config.dataset};
  if ((n.model.empty() || n.dataset.empty()) && !config.manifest.empty() && fs::exists(config.manifest)) {
    const Manifest m = load_manifest(config.manifest);
    if (n.model.empty()) n.model = m.model_name;
    if (n.dataset.empty()) n.dataset = m.dataset_name;
  }
  return n;
}

ConditionMeta meta_for(const TrialSet& set, const Names& names) {
  return ConditionMeta{set.condition_id, names.model, names.dataset, set.axis};
}

CapacityOptions capacity_options(const PipelineConfig& config) {
  CapacityOptions o;
  o.n_probes = config.n_probes;
  o.seed = config.seed;
  o.kappa = config.kappa;
  o.threads = resolve_threads(config.threads);
  return o;
}

void geometry_for(const PipelineConfig& config, const TrialSet& set, const Names& names, MetricsTable& table,
                  std::vector<PositionGeometry>* rows_out = nullptr) {
  const auto positions = evaluation_positions(config, static_cast<int>(set.sequence_length()));
  auto rows = track_geometry(set, positions, capacity_options(config), config.m);
  append_geometry_metrics(table, meta_for(set, names), rows);
  if (rows_out != nullptr) *rows_out = std::move(rows);
}

std::vector<FitRow> fits_for(const PipelineConfig& config, const TrialSet& set) {
  if (!set.has_logits()) throw Error(ErrorKind::Argument, "fit-learners: condition " + set.condition_id + " has no logits");
  const Vector mean = joint_mean(set);
  const auto streams = streams_from_trials(set, mean);
  std::vector<std::vector<double>> log_odds;
  log_odds.reserve(set.trials.size());
  for (const Trial& t : set.trials) log_odds.push_back(behavioral_log_odds(*t.logits));
  std::vector<FitRow> rows;
  for (LearnerKind kind : kAllLearners) {
    const auto grid = grid_for(config, kind);
    const FamilyFit fit = fit_family(grid, streams, log_odds, config.fit_mode, resolve_threads(config.threads));
    rows.push_back(FitRow{set.condition_id, to_string(kind), fit.best.config.hyperparams(), fit.best.beta,
                          fit.best.agreement, static_cast<std::int64_t>(fit.best.n_positions)});
  }
  return rows;
}

template <class F>
auto staged(const char* stage, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + ": " + e.what());
  }
}

}  // namespace

IngestSummary cmd_ingest(const PipelineConfig& config) {
  IngestSummary s;
  s.manifest = require_manifest(config);
  for (LayerId layer : s.manifest.layers) {
    const RepMatrix rep = load_rep_matrix(s.manifest, layer);
    s.layer_norms.emplace_back(layer, rep.data.rowwise().norm().mean());
  }
  return s;
}

AxesResult cmd_axes(const PipelineConfig& config) {
  const Manifest m = require_manifest(config);
  AxesResult result;
  result.split = split_examples(m.n_examples, config.eval_fraction, config.seed);

  std::vector<int> dataset_labels;
  const bool want_lr = std::find(config.families.begin(), config.families.end(), AxisFamily::LR) != config.families.end();
  const bool want_pc = std::find(config.families.begin(), config.families.end(), AxisFamily::PC) != config.families.end();
  if (want_lr) {
    if (config.dataset_labels.empty()) {
      result.notes.push_back("LR family skipped: no dataset labels given");
    } else {
      try {
        dataset_labels = json::parse(read_text_file(config.dataset_labels)).get<std::vector<int>>();
      } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, config.dataset_labels.string() + ": expected a JSON array of 0/1 labels");
      }
      if (static_cast<std::int64_t>(dataset_labels.size()) != m.n_examples) {
        throw Error(ErrorKind::Format, "dataset_labels: expected " + std::to_string(m.n_examples) + " labels");
      }
    }
  }

  for (LayerId layer : target_layers(m, config.layers_count)) {
    const RepMatrix rep = load_rep_matrix(m, layer);
    const CenteredData train = center(select_rows(rep.data, result.split.train));
    if (want_pc) {
      const auto available = std::min<Eigen::Index>(train.centered.rows() - 1, train.centered.cols());
      std::vector<int> ranks;
      for (int k : config.ranks) {
        if (k <= available) ranks.push_back(k);
        else result.notes.push_back("layer " + std::to_string(layer) + ": rank " + std::to_string(k) + " exceeds spectrum");
      }
      for (TaskAxis& a : pca_axes(train, ranks, layer)) result.axes.push_back(std::move(a));
    }
    if (want_lr && !dataset_labels.empty()) {
      std::vector<int> y;
      for (auto i : result.split.train) y.push_back(dataset_labels[static_cast<std::size_t>(i)]);
      LrOptions opt;
      opt.l2 = config.l2;
      result.axes.push_back(fit_lr_axis(train, y, layer, opt));
    }
  }
  if (result.axes.empty()) throw Error(ErrorKind::Degenerate, "axes: no axes could be constructed");
  save_axes(or_default(config.axes, config.out_dir, "axes.json"), result.axes, result.split);
  return result;
}

std::vector<LabelAssignment> cmd_label(const PipelineConfig& config) {
  const Manifest m = require_manifest(config);
  ExampleSplit split;
  const auto axes = load_axes(or_default(config.axes, config.out_dir, "axes.json"), &split);
  std::map<LayerId, Matrix> eval_rows;
  std::vector<LabelAssignment> out;
  for (const TaskAxis& axis : axes) {
    auto it = eval_rows.find(axis.target_layer);
    if (it == eval_rows.end()) {
      it = eval_rows.emplace(axis.target_layer, select_rows(load_rep_matrix(m, axis.target_layer).data, split.eval)).first;
    }
    out.push_back(label_examples(it->second, axis, split.eval));
  }
  save_labels(or_default(config.labels, config.out_dir, "labels.json"), out);
  return out;
}

std::vector<TrialSet> cmd_sample(const PipelineConfig& config) {
  const auto labels = load_labels(or_default(config.labels, config.out_dir, "labels.json"));
  std::vector<TrialSet> sets;
  for (const LabelAssignment& l : labels) {
    sets.push_back(sample_trials(l, config.seq_len, config.n_seq, config.seed));
    validate_trials(sets.back());
  }
  save_trials(or_default(config.trials, config.out_dir, "trials.jsonl"), sets);
  return sets;
}

MetricsTable cmd_geometry(const PipelineConfig& config) {
  const Names names = output_names(config);
  MetricsTable table;
  for (const TrialSet& set : require_trials(config)) geometry_for(config, set, names, table);
  save_metrics(table, or_default(config.metrics, config.out_dir, "metrics.csv"));
  return table;
}

std::vector<FitRow> cmd_fit_learners(const PipelineConfig& config) {
  std::vector<FitRow> rows;
  for (const TrialSet& set : require_trials(config)) {
    auto part = fits_for(config, set);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  save_fits(rows, config.out_dir / "fits.csv");
  return rows;
}

std::vector<CorrelationResult> cmd_correlate(const PipelineConfig& config) {
  const MetricsTable metrics = load_metrics(or_default(config.metrics, config.out_dir, "metrics.csv"));
  std::vector<AccuracyCurve> accuracy = accuracy_from_metrics(metrics);
  if (accuracy.empty()) {
    for (const TrialSet& set : require_trials(config)) accuracy.push_back(accuracy_from_logits(set));
  }
  auto result = correlate_geometry_accuracy(metrics, accuracy);
  save_correlations(result, config.out_dir / "correlations.csv");
  return result;
}

void cmd_synth(const PipelineConfig& config) {
  if (!config.synth.empty() && config.synth != "graded") {
    throw Error(ErrorKind::Argument, "unknown synthetic suite '" + config.synth + "' (expected 'graded')");
  }
  write_suite(graded_difficulty_suite(config.seed), config.out_dir);
}

RunSummary cmd_run(const PipelineConfig& input) {
  PipelineConfig config = input;
  if (!config.synth.empty()) {
    if (config.synth != "graded") {
      throw Error(ErrorKind::Argument, "unknown synthetic suite '" + config.synth + "' (expected 'graded')");
    }
    const fs::path fixture = config.out_dir / "fixture";
    staged("synth", [&] { write_suite(graded_difficulty_suite(config.seed), fixture); });
    config.manifest = fixture / "manifest.json";
    config.trials = fixture / "trials.jsonl";
  } else if (!config.manifest.empty() && !fs::exists(config.manifest)) {
    throw Error(ErrorKind::Io, "manifest not found: " + config.manifest.string());
  }

  const Names names = output_names(config);
  const auto sets = staged("load", [&] { return require_trials(config); });
  MetricsTable metrics;
  std::vector<AccuracyCurve> accuracy;
  std::vector<FitRow> fits;
  RunSummary summary;
  for (const TrialSet& set : sets) {
    std::vector<PositionGeometry> rows;
    staged("geometry", [&] { geometry_for(config, set, names, metrics, &rows); });
    AccuracyCurve curve = staged("accuracy", [&] { return accuracy_from_logits(set); });
    append_accuracy_metrics(metrics, meta_for(set, names), curve);
    auto fit_rows = staged("fit-learners", [&] { return fits_for(config, set); });

    const FitRow& best = *std::max_element(fit_rows.begin(), fit_rows.end(), [](const FitRow& a, const FitRow& b) {
      return a.agreement < b.agreement;
    });
    std::optional<double> last_capacity;
    for (const auto& r : rows) {
      if (r.report) last_capacity = r.report->capacity.capacity;
    }
    char line[256];
    std::snprintf(line, sizeof line, "%s: trials=%zu final_accuracy=%.4f final_capacity=%s best_learner=%s agreement=%.4f",
                  set.condition_id.c_str(), set.trials.size(), curve.accuracy.back(),
                  last_capacity ? format_real(*last_capacity).substr(0, 8).c_str() : "null", best.learner.c_str(),
                  best.agreement);
    summary.condition_lines.emplace_back(line);

    accuracy.push_back(std::move(curve));
    fits.insert(fits.end(), fit_rows.begin(), fit_rows.end());
  }
  summary.report = staged("report", [&] { return emit_report(metrics, accuracy, fits, config.out_dir); });
  return summary;
}

}  // namespace geolab
