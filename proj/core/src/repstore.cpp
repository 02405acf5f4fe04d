#include "geolab/repstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "geolab/error.hpp"
#include "json.hpp"
#include "sha256.hpp"

namespace geolab {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

std::vector<std::byte> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open file: " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw Error(ErrorKind::Io, "short read: " + path.string());
  }
  return bytes;
}

void write_bytes(const fs::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

std::vector<std::byte> encode_f32(const Matrix& m) {
  std::vector<std::byte> bytes(static_cast<std::size_t>(m.size()) * 4);
  std::size_t off = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const auto word = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
      std::memcpy(bytes.data() + off, &word, 4);
      off += 4;
    }
  }
  return bytes;
}

Matrix decode_f32(std::span<const std::byte> bytes, std::int64_t rows, std::int64_t cols, const fs::path& origin) {
  Matrix m(rows, cols);
  std::size_t off = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      std::uint32_t word;
      std::memcpy(&word, bytes.data() + off, 4);
      off += 4;
      const float v = std::bit_cast<float>(to_little(word));
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::Numeric, "non-finite entry at (" + std::to_string(r) + "," + std::to_string(c) +
                                            ") in " + origin.string());
      }
      m(r, c) = v;
    }
  }
  return m;
}

std::string field_error(const std::string& field, const std::string& msg) { return field + ": " + msg; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out += "\"";
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, std::size_t columns) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    auto cells = csv_split(line);
    if (cells.size() != columns) {
      throw Error(ErrorKind::Format, path.string() + ": expected " + std::to_string(columns) + " columns, found " +
                                         std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string sanitize(const std::string& id) {
  std::string out;
  for (char ch : id) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '-' ||
                    ch == '_' || ch == '.';
    out.push_back(ok ? ch : '_');
  }
  return out;
}

}  // namespace

std::string format_real(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& text) {
  write_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

std::string read_text_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "file not found: " + path.string());
  const auto bytes = read_bytes(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

std::string sha256_file(const fs::path& path) { return detail::sha256_hex(read_bytes(path)); }

std::string write_f32(const fs::path& path, const Matrix& m) {
  const auto bytes = encode_f32(m);
  write_bytes(path, bytes);
  return detail::sha256_hex(bytes);
}

Matrix read_f32(const fs::path& path, std::int64_t rows, std::int64_t cols) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "missing file: " + path.string());
  const auto bytes = read_bytes(path);
  const auto expected = static_cast<std::size_t>(rows * cols * 4);
  if (bytes.size() != expected) {
    throw Error(ErrorKind::Format, path.string() + ": size mismatch (expected " + std::to_string(expected) +
                                       " bytes, found " + std::to_string(bytes.size()) + ")");
  }
  return decode_f32(bytes, rows, cols, path);
}

// ---------------------------------------------------------------------------
// Manifest

bool Manifest::operator==(const Manifest& o) const {
  return std::tie(schema_version, model_name, dataset_name, dim, n_examples, layers, tensor_files, dtype, checksums) ==
         std::tie(o.schema_version, o.model_name, o.dataset_name, o.dim, o.n_examples, o.layers, o.tensor_files,
                  o.dtype, o.checksums);
}

Manifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "manifest not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": malformed manifest: " + e.what());
  }

  Manifest m;
  m.base_dir = path.parent_path();
  auto require = [&](const char* key) -> const json& {
    if (!doc.contains(key)) throw Error(ErrorKind::Format, field_error(key, "missing field"));
    return doc.at(key);
  };
  try {
    m.schema_version = require("schema_version").get<int>();
    if (m.schema_version != kSchemaVersion) {
      throw Error(ErrorKind::Format,
                  field_error("schema_version", "unsupported value " + std::to_string(m.schema_version)));
    }
    m.model_name = require("model_name").get<std::string>();
    m.dataset_name = require("dataset_name").get<std::string>();
    m.dim = require("dim").get<std::int64_t>();
    m.n_examples = require("n_examples").get<std::int64_t>();
    m.layers = require("layers").get<std::vector<LayerId>>();
    for (const auto& [key, value] : require("tensor_files").items()) {
      m.tensor_files[std::stoi(key)] = value.get<std::string>();
    }
    m.dtype = require("dtype").get<std::string>();
    m.checksums = require("checksums").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": bad field type: " + e.what());
  } catch (const std::invalid_argument&) {
    throw Error(ErrorKind::Format, field_error("tensor_files", "layer keys must be integers"));
  }

  if (m.dtype != kDtypeF32) throw Error(ErrorKind::Format, field_error("dtype", "unsupported dtype " + m.dtype));
  if (m.dim <= 0) throw Error(ErrorKind::Format, field_error("dim", "must be positive"));
  if (m.n_examples <= 0) throw Error(ErrorKind::Format, field_error("n_examples", "must be positive"));
  if (std::set<LayerId>(m.layers.begin(), m.layers.end()).size() != m.layers.size()) {
    throw Error(ErrorKind::Format, field_error("layers", "duplicate layer id"));
  }

  const auto expected_bytes = static_cast<std::uintmax_t>(m.n_examples * m.dim * 4);
  for (const LayerId layer : m.layers) {
    const std::string field = "tensor_files[" + std::to_string(layer) + "]";
    const auto it = m.tensor_files.find(layer);
    if (it == m.tensor_files.end()) throw Error(ErrorKind::Format, field_error(field, "no file for layer"));
    const fs::path file = m.base_dir / it->second;
    if (!fs::exists(file)) throw Error(ErrorKind::Io, field_error(field, "missing file " + file.string()));
    const auto size = fs::file_size(file);
    if (size != expected_bytes) {
      throw Error(ErrorKind::Format, field_error(field, "size mismatch (expected " + std::to_string(expected_bytes) +
                                                            " bytes, found " + std::to_string(size) + ")"));
    }
    const auto sum = m.checksums.find(it->second);
    const std::string sum_field = "checksums[" + it->second + "]";
    if (sum == m.checksums.end()) throw Error(ErrorKind::Format, field_error(sum_field, "missing checksum"));
    if (sha256_file(file) != sum->second) throw Error(ErrorKind::Format, field_error(sum_field, "checksum mismatch"));
  }
  return m;
}

void save_manifest(const Manifest& m, const fs::path& path) {
  ordered_json doc;
  doc["schema_version"] = m.schema_version;
  doc["model_name"] = m.model_name;
  doc["dataset_name"] = m.dataset_name;
  doc["dim"] = m.dim;
  doc["n_examples"] = m.n_examples;
  doc["layers"] = m.layers;
  ordered_json files = ordered_json::object();
  for (const auto& [layer, file] : m.tensor_files) files[std::to_string(layer)] = file;
  doc["tensor_files"] = files;
  doc["dtype"] = m.dtype;
  ordered_json sums = ordered_json::object();
  for (const auto& [file, sum] : m.checksums) sums[file] = sum;
  doc["checksums"] = sums;
  write_text_file(path, doc.dump(2) + "\n");
}

void register_layer(Manifest& m, LayerId layer, const Matrix& data) {
  if (m.tensor_files.empty()) {
    m.n_examples = data.rows();
    m.dim = data.cols();
  } else if (data.rows() != m.n_examples || data.cols() != m.dim) {
    throw Error(ErrorKind::Argument, "register_layer: shape does not match manifest");
  }
  const std::string file = std::to_string(layer) + ".f32";
  m.checksums[file] = write_f32(m.base_dir / file, data);
  m.tensor_files[layer] = file;
  if (std::find(m.layers.begin(), m.layers.end(), layer) == m.layers.end()) m.layers.push_back(layer);
}

RepMatrix load_rep_matrix(const Manifest& m, LayerId layer) {
  const auto it = m.tensor_files.find(layer);
  if (it == m.tensor_files.end()) throw Error(ErrorKind::Argument, "unknown layer " + std::to_string(layer));
  return RepMatrix{layer, read_f32(m.base_dir / it->second, m.n_examples, m.dim)};
}

// ---------------------------------------------------------------------------
// Trials

std::string to_string(AxisFamily family) { return family == AxisFamily::PC ? "PC" : "LR"; }

AxisFamily parse_axis_family(const std::string& text) {
  if (text == "PC" || text == "pc") return AxisFamily::PC;
  if (text == "LR" || text == "lr") return AxisFamily::LR;
  throw Error(ErrorKind::Format, "unknown axis family '" + text + "'");
}

bool TrialSet::has_logits() const {
  return !trials.empty() && std::all_of(trials.begin(), trials.end(), [](const Trial& t) { return t.logits.has_value(); });
}

bool TrialSet::has_reps() const {
  return !trials.empty() && std::all_of(trials.begin(), trials.end(), [](const Trial& t) { return t.reps.has_value(); });
}

void validate_trials(const TrialSet& set, std::optional<std::int64_t> n_examples) {
  const std::string where = "trials[" + set.condition_id + "]";
  const std::size_t len = set.sequence_length();
  for (std::size_t k = 0; k < set.trials.size(); ++k) {
    const Trial& t = set.trials[k];
    const std::string at = where + " trial " + std::to_string(k);
    if (t.length() != len) throw Error(ErrorKind::Format, at + ": length differs from first trial");
    if (t.shown_labels.size() != len) throw Error(ErrorKind::Format, at + ": label count differs from sequence length");
    for (int y : t.shown_labels) {
      if (y != 0 && y != 1) throw Error(ErrorKind::Format, at + ": label outside {0,1}");
    }
    for (auto idx : t.sequence) {
      if (idx < 0 || (n_examples && idx >= *n_examples)) {
        throw Error(ErrorKind::Format, at + ": example index " + std::to_string(idx) + " out of range");
      }
    }
    if (t.logits && (t.logits->rows() != static_cast<Eigen::Index>(len) || t.logits->cols() != 2)) {
      throw Error(ErrorKind::Format, at + ": logits must be P x 2");
    }
    if (t.reps && t.reps->rows() != static_cast<Eigen::Index>(len)) {
      throw Error(ErrorKind::Format, at + ": reps must have one row per position");
    }
  }

  std::size_t originals = 0;
  std::size_t complements = 0;
  for (const Trial& t : set.trials) (t.is_complement ? complements : originals)++;
  if (originals != complements) {
    throw Error(ErrorKind::Format, where + ": complement pairing broken (" + std::to_string(originals) +
                                       " originals, " + std::to_string(complements) + " complements)");
  }
  for (std::size_t k = 0; k < set.trials.size(); ++k) {
    const Trial& t = set.trials[k];
    if (t.is_complement) continue;
    std::size_t matches = 0;
    for (const Trial& c : set.trials) {
      if (!c.is_complement || c.sequence != t.sequence) continue;
      bool flipped = true;
      for (std::size_t i = 0; i < len && flipped; ++i) flipped = c.shown_labels[i] == 1 - t.shown_labels[i];
      matches += flipped ? 1 : 0;
    }
    if (matches != 1) {
      throw Error(ErrorKind::Format, where + " trial " + std::to_string(k) + ": expected exactly one complement, found " +
                                         std::to_string(matches));
    }
  }
}

void save_trials(const fs::path& path, std::span<const TrialSet> sets) {
  const fs::path data_dir_rel = path.stem().string() + ".data";
  const fs::path base = path.parent_path();
  std::string out;
  for (const TrialSet& set : sets) {
    const std::string tag = sanitize(set.condition_id);
    for (std::size_t k = 0; k < set.trials.size(); ++k) {
      const Trial& t = set.trials[k];
      ordered_json rec;
      rec["condition_id"] = set.condition_id;
      rec["axis"] = {{"family", to_string(set.axis.family)},
                     {"rank", set.axis.rank},
                     {"target_layer", set.axis.target_layer}};
      rec["sequence"] = t.sequence;
      rec["shown_labels"] = t.shown_labels;
      rec["is_complement"] = t.is_complement;
      if (t.logits) {
        const fs::path rel = data_dir_rel / tag / (std::to_string(k) + ".logits.f32");
        write_f32(base / rel, *t.logits);
        rec["logits_file"] = rel.generic_string();
      }
      if (t.reps) {
        const fs::path rel = data_dir_rel / tag / (std::to_string(k) + ".reps.f32");
        write_f32(base / rel, *t.reps);
        rec["reps_file"] = rel.generic_string();
      }
      out += rec.dump();
      out += '\n';
    }
  }
  write_text_file(path, out);
}

std::vector<TrialSet> load_trials(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  const fs::path base = path.parent_path();
  std::vector<TrialSet> sets;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const json rec = json::parse(line);
      const std::string cond = rec.at("condition_id").get<std::string>();
      const json& axis = rec.at("axis");
      AxisRef ref{parse_axis_family(axis.at("family").get<std::string>()), axis.at("rank").get<int>(),
                  axis.at("target_layer").get<LayerId>()};
      auto [it, inserted] = index.emplace(cond, sets.size());
      if (inserted) sets.push_back(TrialSet{cond, ref, {}});
      TrialSet& set = sets[it->second];
      if (!(set.axis == ref)) throw Error(ErrorKind::Format, where + ": axis differs within condition " + cond);

      Trial t;
      t.sequence = rec.at("sequence").get<std::vector<std::int64_t>>();
      t.shown_labels = rec.at("shown_labels").get<std::vector<int>>();
      t.is_complement = rec.at("is_complement").get<bool>();
      const auto len = static_cast<std::int64_t>(t.sequence.size());
      if (rec.contains("logits_file")) t.logits = read_f32(base / rec.at("logits_file").get<std::string>(), len, 2);
      if (rec.contains("reps_file")) {
        const fs::path file = base / rec.at("reps_file").get<std::string>();
        if (!fs::exists(file)) throw Error(ErrorKind::Io, where + ": missing reps file " + file.string());
        const auto bytes = static_cast<std::int64_t>(fs::file_size(file));
        if (len == 0 || bytes % (4 * len) != 0) throw Error(ErrorKind::Format, where + ": reps file size mismatch");
        t.reps = read_f32(file, len, bytes / (4 * len));
      }
      set.trials.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Format, where + ": malformed trial record: " + e.what());
    }
  }
  return sets;
}

// ---------------------------------------------------------------------------
// Tables

void MetricsTable::validate() const {
  std::set<std::tuple<std::string, int, std::string>> seen;
  for (const MetricRow& r : rows) {
    if (!seen.emplace(r.condition_id, r.position, r.metric).second) {
      throw Error(ErrorKind::Format, "metrics: duplicate row (" + r.condition_id + ", " + std::to_string(r.position) +
                                         ", " + r.metric + ")");
    }
    if (r.value && !std::isfinite(*r.value)) {
      throw Error(ErrorKind::Numeric, "metrics: non-finite value for " + r.metric + " in " + r.condition_id);
    }
  }
}

std::vector<MetricRow> MetricsTable::sorted() const {
  std::vector<MetricRow> out = rows;
  std::stable_sort(out.begin(), out.end(), [](const MetricRow& a, const MetricRow& b) {
    return std::tie(a.condition_id, a.position, a.metric) < std::tie(b.condition_id, b.position, b.metric);
  });
  return out;
}

void save_metrics(const MetricsTable& table, const fs::path& path) {
  table.validate();
  std::string out = "condition_id,model,dataset,family,rank,target_layer,position,metric,value\n";
  for (const MetricRow& r : table.sorted()) {
    out += csv_field(r.condition_id) + ',' + csv_field(r.model) + ',' + csv_field(r.dataset) + ',' +
           csv_field(r.family) + ',' + std::to_string(r.rank) + ',' + std::to_string(r.target_layer) + ',' +
           std::to_string(r.position) + ',' + csv_field(r.metric) + ',' + (r.value ? format_real(*r.value) : "") +
           '\n';
  }
  write_text_file(path, out);
}

MetricsTable load_metrics(const fs::path& path) {
  MetricsTable table;
  for (auto& c : read_csv(path, 9)) {
    MetricRow r;
    r.condition_id = c[0];
    r.model = c[1];
    r.dataset = c[2];
    r.family = c[3];
    r.rank = std::stoi(c[4]);
    r.target_layer = std::stoi(c[5]);
    r.position = std::stoi(c[6]);
    r.metric = c[7];
    if (!c[8].empty()) r.value = std::stod(c[8]);
    table.rows.push_back(std::move(r));
  }
  table.validate();
  return table;
}

void save_fits(std::span<const FitRow> rows, const fs::path& path) {
  std::vector<FitRow> sorted(rows.begin(), rows.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const FitRow& a, const FitRow& b) {
    return std::tie(a.condition_id, a.learner, a.hyperparams) < std::tie(b.condition_id, b.learner, b.hyperparams);
  });
  std::string out = "condition_id,learner,hyperparams,beta_star,agreement,n_positions\n";
  for (const FitRow& r : sorted) {
    out += csv_field(r.condition_id) + ',' + csv_field(r.learner) + ',' + csv_field(r.hyperparams) + ',' +
           format_real(r.beta_star) + ',' + format_real(r.agreement) + ',' + std::to_string(r.n_positions) + '\n';
  }
  write_text_file(path, out);
}

std::vector<FitRow> load_fits(const fs::path& path) {
  std::vector<FitRow> rows;
  for (auto& c : read_csv(path, 6)) {
    rows.push_back(FitRow{c[0], c[1], c[2], std::stod(c[3]), std::stod(c[4]), std::stoll(c[5])});
  }
  return rows;
}

}  // namespace geolab
