#include "geolab/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geolab/error.hpp"
#include "geolab/rng.hpp"
#include "json.hpp"

namespace geolab {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

std::string condition_id_for(const AxisRef& ref) {
  std::string id = "L" + std::to_string(ref.target_layer) + "-" + to_string(ref.family);
  if (ref.family == AxisFamily::PC) id += std::to_string(ref.rank);
  return id;
}

std::string TaskAxis::condition_id() const { return condition_id_for(ref()); }

CenteredData center(const Matrix& x) {
  if (x.rows() < 2) throw Error(ErrorKind::Argument, "center: need at least 2 rows, got " + std::to_string(x.rows()));
  Vector mean = x.colwise().mean().transpose();
  Matrix centered = x.rowwise() - mean.transpose();
  return {std::move(centered), std::move(mean)};
}

namespace {

void fix_sign(Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  }
  if (v(best) < 0) v = -v;
}

}  // namespace

std::vector<TaskAxis> pca_axes(const CenteredData& data, std::span<const int> ranks, LayerId layer) {
  const Matrix& xc = data.centered;
  const auto available = std::min<Eigen::Index>(xc.rows() - 1, xc.cols());
  for (int k : ranks) {
    if (k < 1 || k > available) {
      throw Error(ErrorKind::Argument, "pca_axes: rank " + std::to_string(k) + " exceeds available spectrum (" +
                                           std::to_string(available) + ")");
    }
  }
  if (xc.squaredNorm() == 0.0) throw Error(ErrorKind::Degenerate, "pca_axes: zero matrix");

  Eigen::BDCSVD<Matrix> svd(xc, Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  std::vector<TaskAxis> axes;
  axes.reserve(ranks.size());
  for (int k : ranks) {
    const double s = sigma(k - 1);
    if (s <= 1e-12 * sigma(0)) {
      throw Error(ErrorKind::Degenerate, "pca_axes: rank " + std::to_string(k) + " has zero singular value");
    }
    TaskAxis axis;
    axis.family = AxisFamily::PC;
    axis.rank = k;
    axis.target_layer = layer;
    axis.direction = svd.matrixV().col(k - 1).normalized();
    fix_sign(axis.direction);
    axis.center = data.mean;
    axis.singular_value = s;
    axes.push_back(std::move(axis));
  }
  return axes;
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)), overflow-safe
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct LrProblem {
  const Matrix& x;
  Vector y;
  double l2;
  double inv_n;

  // theta = [w; b]
  Vector scores(const Vector& theta) const {
    return (x * theta.head(x.cols())).array() + theta(x.cols());
  }

  double objective(const Vector& theta) const {
    const Vector z = scores(theta);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(z(i)) - y(i) * z(i);
    return loss * inv_n + 0.5 * l2 * theta.head(x.cols()).squaredNorm();
  }

  Vector gradient(const Vector& theta, const Vector& p) const {
    Vector g(theta.size());
    const Vector r = p - y;
    g.head(x.cols()) = x.transpose() * r * inv_n + l2 * theta.head(x.cols());
    g(x.cols()) = r.sum() * inv_n;
    return g;
  }

  Vector hessian_times(const Vector& weights, const Vector& v) const {
    const Vector xv = (x * v.head(x.cols())).array() + v(x.cols());
    const Vector dxv = weights.cwiseProduct(xv);
    Vector out(v.size());
    out.head(x.cols()) = x.transpose() * dxv * inv_n + l2 * v.head(x.cols());
    out(x.cols()) = dxv.sum() * inv_n;
    return out;
  }
};

}  // namespace

TaskAxis fit_lr_axis(const CenteredData& data, std::span<const int> labels, LayerId layer, const LrOptions& options,
                     LrDiagnostics* diagnostics) {
  const Matrix& x = data.centered;
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    throw Error(ErrorKind::Argument, "fit_lr_axis: label count does not match rows");
  }
  const auto ones = std::count(labels.begin(), labels.end(), 1);
  if (ones == 0 || ones == static_cast<std::ptrdiff_t>(labels.size())) {
    throw Error(ErrorKind::Degenerate, "fit_lr_axis: degenerate labels (single class)");
  }
  if (options.l2 < 0) throw Error(ErrorKind::Argument, "fit_lr_axis: l2 must be nonnegative");

  LrProblem prob{x, Vector(x.rows()), options.l2, 1.0 / static_cast<double>(x.rows())};
  for (Eigen::Index i = 0; i < x.rows(); ++i) prob.y(i) = labels[static_cast<std::size_t>(i)];

  const Eigen::Index dim = x.cols() + 1;
  Vector theta = Vector::Zero(dim);
  Vector p(x.rows());
  Vector grad;
  double f = prob.objective(theta);
  int iter = 0;
  for (;; ++iter) {
    const Vector z = prob.scores(theta);
    for (Eigen::Index i = 0; i < z.size(); ++i) p(i) = sigmoid(z(i));
    grad = prob.gradient(theta, p);
    const double gnorm = grad.norm();
    if (gnorm <= options.gradient_tol) break;
    if (iter >= options.max_iterations) {
      throw Error(ErrorKind::Numeric, "fit_lr_axis: no convergence after " + std::to_string(iter) +
                                          " iterations (gradient norm " + format_real(gnorm) + ")");
    }

    // Inner CG on H s = -g with Eisenstat-Walker style forcing term.
    const Vector weights = p.cwiseProduct((1.0 - p.array()).matrix());
    const double forcing = std::min(0.5, std::sqrt(gnorm)) * gnorm;
    Vector s = Vector::Zero(dim);
    Vector r = -grad;
    Vector d = r;
    double rr = r.squaredNorm();
    for (Eigen::Index cg = 0; cg < 2 * dim + 10 && std::sqrt(rr) > forcing; ++cg) {
      const Vector hd = prob.hessian_times(weights, d);
      const double curvature = d.dot(hd);
      if (curvature <= 1e-300) break;
      const double step = rr / curvature;
      s += step * d;
      r -= step * hd;
      const double rr_next = r.squaredNorm();
      d = r + (rr_next / rr) * d;
      rr = rr_next;
    }
    if (s.squaredNorm() == 0.0) s = -grad;

    // Armijo backtracking.
    const double slope = grad.dot(s);
    double t = 1.0;
    double f_next = prob.objective(theta + s);
    while (f_next > f + 1e-4 * t * slope && t > 1e-12) {
      t *= 0.5;
      f_next = prob.objective(theta + t * s);
    }
    theta += t * s;
    f = f_next;
  }

  const double wnorm = theta.head(x.cols()).norm();
  if (wnorm == 0.0) throw Error(ErrorKind::Degenerate, "fit_lr_axis: zero weight vector");

  TaskAxis axis;
  axis.family = AxisFamily::LR;
  axis.rank = 0;
  axis.target_layer = layer;
  axis.direction = theta.head(x.cols()) / wnorm;
  axis.intercept = theta(x.cols()) / wnorm;
  axis.center = data.mean;

  if (diagnostics != nullptr) {
    diagnostics->iterations = iter;
    diagnostics->gradient_norm = grad.norm();
    const Vector z = prob.scores(theta);
    std::ptrdiff_t correct = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) correct += ((z(i) > 0 ? 1 : 0) == labels[static_cast<std::size_t>(i)]);
    diagnostics->training_accuracy = static_cast<double>(correct) / static_cast<double>(z.size());
  }
  return axis;
}

LabelAssignment binarize(const Matrix& centered, const TaskAxis& axis) {
  if (centered.cols() != axis.direction.size()) {
    throw Error(ErrorKind::Argument, "binarize: axis dimension " + std::to_string(axis.direction.size()) +
                                         " does not match data dimension " + std::to_string(centered.cols()));
  }
  LabelAssignment out;
  out.condition_id = axis.condition_id();
  out.axis = axis.ref();
  out.projections = (centered * axis.direction).array() + axis.intercept;
  out.labels.resize(static_cast<std::size_t>(centered.rows()));
  out.example_indices.resize(out.labels.size());
  std::iota(out.example_indices.begin(), out.example_indices.end(), std::int64_t{0});
  std::size_t ones = 0;
  for (Eigen::Index i = 0; i < centered.rows(); ++i) {
    const int y = out.projections(i) > 0.0 ? 1 : 0;
    out.labels[static_cast<std::size_t>(i)] = y;
    ones += static_cast<std::size_t>(y);
  }
  out.class1_fraction = out.labels.empty() ? 0.0 : static_cast<double>(ones) / static_cast<double>(out.labels.size());
  out.degenerate = ones == 0 || ones == out.labels.size();
  return out;
}

LabelAssignment label_examples(const Matrix& raw, const TaskAxis& axis, std::vector<std::int64_t> example_indices) {
  if (static_cast<Eigen::Index>(example_indices.size()) != raw.rows()) {
    throw Error(ErrorKind::Argument, "label_examples: index count does not match rows");
  }
  if (axis.center.size() != raw.cols()) throw Error(ErrorKind::Argument, "label_examples: axis center has wrong size");
  LabelAssignment out = binarize(raw.rowwise() - axis.center.transpose(), axis);
  out.example_indices = std::move(example_indices);
  return out;
}

std::vector<LayerId> select_target_layers(int n_layers, int count) {
  if (count < 1) throw Error(ErrorKind::Argument, "select_target_layers: count must be positive");
  if (n_layers <= count) {
    throw Error(ErrorKind::Argument, "select_target_layers: need more layers (" + std::to_string(n_layers) +
                                         ") than requested count (" + std::to_string(count) + ")");
  }
  std::vector<LayerId> out;
  for (int j = 1; j <= count; ++j) {
    const auto layer = static_cast<LayerId>(
        std::lround(static_cast<double>(j) / static_cast<double>(count + 1) * static_cast<double>(n_layers)));
    if (out.empty() || layer > out.back()) out.push_back(layer);
  }
  return out;
}

ExampleSplit split_examples(std::int64_t n, double eval_fraction, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorKind::Argument, "split_examples: need at least 2 examples");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw Error(ErrorKind::Argument, "split_examples: eval_fraction must lie in (0, 1)");
  }
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), std::int64_t{0});
  const CounterRng rng(seed, 0x5B117);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i, i + 1)]);
  auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(n)));
  n_eval = std::clamp<std::size_t>(n_eval, 1, perm.size() - 1);
  ExampleSplit split;
  split.eval.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_eval));
  split.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_eval), perm.end());
  std::sort(split.eval.begin(), split.eval.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

TrialSet sample_trials(const LabelAssignment& pool, int seq_len, int n_seq, std::uint64_t seed) {
  const auto pool_size = pool.labels.size();
  if (seq_len < 1 || n_seq < 1) throw Error(ErrorKind::Argument, "sample_trials: seq_len and n_seq must be positive");
  if (pool_size < static_cast<std::size_t>(seq_len)) {
    throw Error(ErrorKind::Argument, "sample_trials: pool too small (" + std::to_string(pool_size) + " < " +
                                         std::to_string(seq_len) + ")");
  }
  TrialSet set;
  set.condition_id = pool.condition_id;
  set.axis = pool.axis;
  set.trials.reserve(2 * static_cast<std::size_t>(n_seq));
  std::vector<std::size_t> perm(pool_size);
  for (int s = 0; s < n_seq; ++s) {
    const CounterRng rng(seed, static_cast<std::uint64_t>(s));
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Trial original;
    original.sequence.reserve(static_cast<std::size_t>(seq_len));
    original.shown_labels.reserve(static_cast<std::size_t>(seq_len));
    for (std::size_t i = 0; i < static_cast<std::size_t>(seq_len); ++i) {
      std::swap(perm[i], perm[i + rng.below(i, pool_size - i)]);
      original.sequence.push_back(pool.example_indices[perm[i]]);
      original.shown_labels.push_back(pool.labels[perm[i]]);
    }
    Trial complement = original;
    complement.is_complement = true;
    for (int& y : complement.shown_labels) y = 1 - y;
    set.trials.push_back(std::move(original));
    set.trials.push_back(std::move(complement));
  }
  return set;
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

void save_axes(const fs::path& path, std::span<const TaskAxis> axes, const ExampleSplit& split) {
  ordered_json doc;
  ordered_json list = ordered_json::array();
  for (const TaskAxis& a : axes) {
    ordered_json rec;
    rec["family"] = to_string(a.family);
    rec["rank"] = a.rank;
    rec["target_layer"] = a.target_layer;
    rec["direction"] = to_std(a.direction);
    rec["intercept"] = a.intercept;
    rec["center"] = to_std(a.center);
    rec["singular_value"] = a.singular_value;
    list.push_back(std::move(rec));
  }
  doc["axes"] = std::move(list);
  doc["train_indices"] = split.train;
  doc["eval_indices"] = split.eval;
  write_text_file(path, doc.dump(1) + "\n");
}

std::vector<TaskAxis> load_axes(const fs::path& path, ExampleSplit* split) {
  std::vector<TaskAxis> axes;
  try {
    const json doc = json::parse(read_text_file(path));
    for (const json& rec : doc.at("axes")) {
      TaskAxis a;
      a.family = parse_axis_family(rec.at("family").get<std::string>());
      a.rank = rec.at("rank").get<int>();
      a.target_layer = rec.at("target_layer").get<LayerId>();
      a.direction = from_std(rec.at("direction").get<std::vector<double>>());
      a.intercept = rec.at("intercept").get<double>();
      a.center = from_std(rec.at("center").get<std::vector<double>>());
      a.singular_value = rec.value("singular_value", 0.0);
      axes.push_back(std::move(a));
    }
    if (split != nullptr) {
      split->train = doc.at("train_indices").get<std::vector<std::int64_t>>();
      split->eval = doc.at("eval_indices").get<std::vector<std::int64_t>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": malformed axes file: " + e.what());
  }
  return axes;
}

void save_labels(const fs::path& path, std::span<const LabelAssignment> labels) {
  ordered_json list = ordered_json::array();
  for (const LabelAssignment& l : labels) {
    ordered_json rec;
    rec["condition_id"] = l.condition_id;
    rec["axis"] = {{"family", to_string(l.axis.family)}, {"rank", l.axis.rank}, {"target_layer", l.axis.target_layer}};
    rec["example_indices"] = l.example_indices;
    rec["labels"] = l.labels;
    rec["projections"] = to_std(l.projections);
    rec["class1_fraction"] = l.class1_fraction;
    rec["degenerate"] = l.degenerate;
    list.push_back(std::move(rec));
  }
  write_text_file(path, list.dump(1) + "\n");
}

std::vector<LabelAssignment> load_labels(const fs::path& path) {
  std::vector<LabelAssignment> out;
  try {
    for (const json& rec : json::parse(read_text_file(path))) {
      LabelAssignment l;
      l.condition_id = rec.at("condition_id").get<std::string>();
      const json& axis = rec.at("axis");
      l.axis = AxisRef{parse_axis_family(axis.at("family").get<std::string>()), axis.at("rank").get<int>(),
                       axis.at("target_layer").get<LayerId>()};
      l.example_indices = rec.at("example_indices").get<std::vector<std::int64_t>>();
      l.labels = rec.at("labels").get<std::vector<int>>();
      l.projections = from_std(rec.at("projections").get<std::vector<double>>());
      l.class1_fraction = rec.at("class1_fraction").get<double>();
      l.degenerate = rec.at("degenerate").get<bool>();
      out.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": malformed labels file: " + e.what());
  }
  return out;
}

}  // namespace geolab
