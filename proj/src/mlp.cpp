#include "ctxlab/mlp.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ctxlab::mlp {

namespace {

constexpr double kProbFloor = 1e-12;

Matrix affine(const Matrix& x, const Matrix& w, const Vector& b) {
  Matrix z = x * w.transpose();
  z.rowwise() += b.transpose();
  return z;
}

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

struct Activations {
  Matrix z1, h1, z2, h2, z3, h3;
};

Activations hidden(const MlpModel& m, const Matrix& x) {
  Activations a;
  a.z1 = affine(x, m.w1, m.b1);
  a.h1 = relu(a.z1);
  a.z2 = affine(a.h1, m.w2, m.b2);
  a.h2 = relu(a.z2);
  a.z3 = affine(a.h2, m.w3, m.b3);
  a.h3 = relu(a.z3);
  return a;
}

enum class Head { task, background };

// Mean cross-entropy of `head` on (x, labels); when `grads` is given, adds
// weight * d(mean CE)/d(params) into it.
double head_loss(const MlpModel& m, const Matrix& x, const Labels& labels, Head head, double weight, MlpModel* grads) {
  const Activations a = hidden(m, x);
  const Matrix& hw = head == Head::task ? m.task_w : m.bg_w;
  const Vector& hb = head == Head::task ? m.task_b : m.bg_b;
  Matrix p = softmax_rows(affine(a.h3, hw, hb));
  const auto n = static_cast<double>(x.rows());
  double ce = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) ce -= std::log(std::max(p(i, labels[static_cast<std::size_t>(i)]), kProbFloor));
  ce /= n;
  if (!grads) return ce;

  for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  const Matrix dlogits = p * (weight / n);
  if (head == Head::task) {
    grads->task_w.noalias() += dlogits.transpose() * a.h3;
    grads->task_b += dlogits.colwise().sum().transpose();
  } else {
    grads->bg_w.noalias() += dlogits.transpose() * a.h3;
    grads->bg_b += dlogits.colwise().sum().transpose();
  }
  Matrix dz3 = (dlogits * hw).cwiseProduct((a.z3.array() > 0.0).cast<double>().matrix());
  grads->w3.noalias() += dz3.transpose() * a.h2;
  grads->b3 += dz3.colwise().sum().transpose();
  Matrix dz2 = (dz3 * m.w3).cwiseProduct((a.z2.array() > 0.0).cast<double>().matrix());
  grads->w2.noalias() += dz2.transpose() * a.h1;
  grads->b2 += dz2.colwise().sum().transpose();
  Matrix dz1 = (dz2 * m.w2).cwiseProduct((a.z1.array() > 0.0).cast<double>().matrix());
  grads->w1.noalias() += dz1.transpose() * x;
  grads->b1 += dz1.colwise().sum().transpose();
  return ce;
}

LossBreakdown weighted_loss(const MlpModel& m, const TrainingBatch& batch, const TrainConfig& cfg, MlpModel* grads) {
  if (batch.size() == 0) throw InvalidArgument("empty batch");
  LossBreakdown l;
  if (cfg.alpha0 > 0.0) l.task = head_loss(m, batch.x, batch.y, Head::task, cfg.alpha0, grads);
  if (cfg.alpha1 > 0.0) l.fg = head_loss(m, batch.x_fg, batch.y, Head::task, cfg.alpha1, grads);
  if (cfg.alpha2 > 0.0) l.bg = head_loss(m, batch.x_bg, batch.z_s, Head::background, cfg.alpha2, grads);
  l.total = cfg.alpha0 * l.task + cfg.alpha1 * l.fg + cfg.alpha2 * l.bg;
  return l;
}

}  // namespace

// ---------------------------------------------------------------------------

MlpModel MlpModel::zeros(int input_dim) {
  MlpModel m;
  m.w1 = Matrix::Zero(kHidden, input_dim);
  m.w2 = Matrix::Zero(kHidden, kHidden);
  m.w3 = Matrix::Zero(kHidden, kHidden);
  m.b1 = Vector::Zero(kHidden);
  m.b2 = Vector::Zero(kHidden);
  m.b3 = Vector::Zero(kHidden);
  m.task_w = Matrix::Zero(kOutputs, kHidden);
  m.bg_w = Matrix::Zero(kOutputs, kHidden);
  m.task_b = Vector::Zero(kOutputs);
  m.bg_b = Vector::Zero(kOutputs);
  return m;
}

bool MlpModel::all_finite() const {
  bool ok = true;
  for_each_tensor([&](const char*, const double* d, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) ok = ok && std::isfinite(d[i]);
  });
  return ok;
}

bool MlpModel::operator==(const MlpModel& o) const {
  return seed == o.seed && w1 == o.w1 && w2 == o.w2 && w3 == o.w3 && b1 == o.b1 && b2 == o.b2 && b3 == o.b3 &&
         task_w == o.task_w && task_b == o.task_b && bg_w == o.bg_w && bg_b == o.bg_b;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
  if (epochs <= 0) throw InvalidArgument("epochs must be positive");
  if (lr_decay_every <= 0) throw InvalidArgument("lr_decay_every must be positive");
  if (!(lr_decay_factor > 0.0)) throw InvalidArgument("lr_decay_factor must be positive");
  if (batch_size <= 0) throw InvalidArgument("batch_size must be positive");
  if (!(alpha0 >= 0.0 && alpha1 >= 0.0 && alpha2 >= 0.0)) throw InvalidArgument("loss weights must be nonnegative");
  if (!(alpha0 > 0.0 || alpha1 + alpha2 > 0.0)) throw InvalidArgument("at least one loss weight must be positive");
}

double TrainConfig::learning_rate_at(int epoch) const {
  return lr / std::pow(lr_decay_factor, epoch / lr_decay_every);
}

const Matrix& RepresentationSet::layer(int k) const {
  switch (k) {
    case 1: return h1;
    case 2: return h2;
    case 3: return h3;
    default: throw InvalidArgument("hidden layer index must be 1, 2 or 3");
  }
}

MlpModel init(std::uint64_t seed, int input_dim) {
  if (input_dim <= 0) throw InvalidArgument("input_dim must be positive");
  MlpModel m = MlpModel::zeros(input_dim);
  m.seed = seed;
  std::mt19937_64 rng(seed);
  auto he = [&](Matrix& w) {
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(w.cols())));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = n(rng);
  };
  he(m.w1);
  he(m.w2);
  he(m.w3);
  he(m.task_w);
  he(m.bg_w);
  return m;
}

RepresentationSet forward(const MlpModel& m, const Matrix& x) {
  if (x.cols() != m.input_dim()) throw InvalidArgument("input width does not match the model");
  if (!x.allFinite()) throw InvalidArgument("forward input must be finite");
  Activations a = hidden(m, x);
  RepresentationSet r;
  r.task_prob = softmax_rows(affine(a.h3, m.task_w, m.task_b));
  r.bg_prob = softmax_rows(affine(a.h3, m.bg_w, m.bg_b));
  r.h1 = std::move(a.h1);
  r.h2 = std::move(a.h2);
  r.h3 = std::move(a.h3);
  return r;
}

Matrix layer_output(const MlpModel& m, const Matrix& x, int layer) {
  if (layer < 1 || layer > 4) throw InvalidArgument("layer must be 1..3 (hidden) or 4 (output)");
  RepresentationSet r = forward(m, x);
  if (layer == 4) return std::move(r.task_prob);
  return layer == 1 ? std::move(r.h1) : layer == 2 ? std::move(r.h2) : std::move(r.h3);
}

TrainingBatch make_batch(const synth::Dataset& ds, std::span<const int> rows, const TrainConfig& cfg,
                         std::mt19937_64& rng) {
  TrainingBatch b;
  const std::vector<int> idx(rows.begin(), rows.end());
  b.x = take_rows(ds.x, idx);
  b.y = take(ds.y, idx);
  b.z_s = take(ds.z_s, idx);
  if (cfg.alpha1 > 0.0) {
    b.x_fg = b.x;
    std::uniform_int_distribution<int> cls(0, synth::kNumClasses - 1);
    Eigen::RowVectorXd row;
    for (Eigen::Index i = 0; i < b.x_fg.rows(); ++i) {
      row = b.x_fg.row(i);
      synth::fill_spurious(ds.spec, cls(rng), rng, row);
      b.x_fg.row(i) = row;
    }
  }
  if (cfg.alpha2 > 0.0) {
    b.x_bg = b.x;
    b.x_bg.middleCols(ds.layout.causal.begin, ds.layout.causal.size()).setConstant(ds.spec.mu_n);
  }
  return b;
}

LossBreakdown loss_and_grads(const MlpModel& m, const TrainingBatch& batch, const TrainConfig& cfg, MlpModel& grads) {
  grads = MlpModel::zeros(m.input_dim());
  return weighted_loss(m, batch, cfg, &grads);
}

LossBreakdown loss(const MlpModel& m, const TrainingBatch& batch, const TrainConfig& cfg) {
  return weighted_loss(m, batch, cfg, nullptr);
}

MlpModel train(const synth::Dataset& ds, const TrainConfig& cfg, std::vector<double>* loss_history) {
  cfg.validate();
  if (ds.size() == 0) throw InvalidArgument("cannot train on an empty dataset");
  MlpModel m = init(cfg.seed, ds.dim());
  MlpModel g = MlpModel::zeros(ds.dim());
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7472u));
  std::vector<int> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), 0);
  if (loss_history) loss_history->clear();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      const TrainingBatch batch = make_batch(ds, std::span<const int>(order.data() + start, len), cfg, rng);
      const LossBreakdown l = loss_and_grads(m, batch, cfg, g);
      if (!std::isfinite(l.total))
        throw DegenerateError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
      m.w1 -= lr * g.w1;
      m.b1 -= lr * g.b1;
      m.w2 -= lr * g.w2;
      m.b2 -= lr * g.b2;
      m.w3 -= lr * g.w3;
      m.b3 -= lr * g.b3;
      m.task_w -= lr * g.task_w;
      m.task_b -= lr * g.task_b;
      if (cfg.alpha2 > 0.0) {
        m.bg_w -= lr * g.bg_w;
        m.bg_b -= lr * g.bg_b;
      }
      epoch_loss += l.total;
      ++batches;
    }
    if (loss_history) loss_history->push_back(epoch_loss / batches);
  }
  if (!m.all_finite()) throw DegenerateError("training produced non-finite parameters");
  return m;
}

double accuracy_from_logits(const Matrix& logits, const Labels& y) {
  if (y.empty()) return 0.0;
  int hit = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k)
      if (logits(i, k) > logits(i, best)) best = static_cast<int>(k);
    hit += best == y[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

double evaluate(const MlpModel& m, const synth::Dataset& ds) {
  return accuracy_from_logits(forward(m, ds.x).task_prob, ds.y);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

using nlohmann::json;

json to_json(const Matrix& w) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < w.cols(); ++j) r.push_back(w(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Matrix matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw IoError(std::string("bad tensor shape: ") + name);
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) throw IoError(std::string("bad tensor shape: ") + name);
    for (Eigen::Index k = 0; k < cols; ++k) w(i, k) = r[static_cast<std::size_t>(k)].get<double>();
  }
  return w;
}

Vector vector_from(const json& j, Eigen::Index n, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) throw IoError(std::string("bad tensor shape: ") + name);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const MlpModel& m, const TrainConfig& cfg) {
  json doc;
  doc["format"] = "ctxlab-mlp/1";
  doc["seed"] = m.seed;
  doc["input_dim"] = m.input_dim();
  json t = json::object();
  t["w1"] = to_json(m.w1);
  t["b1"] = to_json(m.b1);
  t["w2"] = to_json(m.w2);
  t["b2"] = to_json(m.b2);
  t["w3"] = to_json(m.w3);
  t["b3"] = to_json(m.b3);
  t["task_w"] = to_json(m.task_w);
  t["task_b"] = to_json(m.task_b);
  t["bg_w"] = to_json(m.bg_w);
  t["bg_b"] = to_json(m.bg_b);
  doc["tensors"] = std::move(t);
  doc["config"] = {{"lr", cfg.lr},
                   {"epochs", cfg.epochs},
                   {"lr_decay_every", cfg.lr_decay_every},
                   {"lr_decay_factor", cfg.lr_decay_factor},
                   {"batch_size", cfg.batch_size},
                   {"alpha0", cfg.alpha0},
                   {"alpha1", cfg.alpha1},
                   {"alpha2", cfg.alpha2},
                   {"seed", cfg.seed}};
  out << doc.dump(1) << '\n';
}

MlpModel read_checkpoint(std::istream& in, TrainConfig* cfg) {
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
  try {
    const int dim = doc.at("input_dim").get<int>();
    MlpModel m = MlpModel::zeros(dim);
    m.seed = doc.at("seed").get<std::uint64_t>();
    const json& t = doc.at("tensors");
    m.w1 = matrix_from(t.at("w1"), kHidden, dim, "w1");
    m.b1 = vector_from(t.at("b1"), kHidden, "b1");
    m.w2 = matrix_from(t.at("w2"), kHidden, kHidden, "w2");
    m.b2 = vector_from(t.at("b2"), kHidden, "b2");
    m.w3 = matrix_from(t.at("w3"), kHidden, kHidden, "w3");
    m.b3 = vector_from(t.at("b3"), kHidden, "b3");
    m.task_w = matrix_from(t.at("task_w"), kOutputs, kHidden, "task_w");
    m.task_b = vector_from(t.at("task_b"), kOutputs, "task_b");
    m.bg_w = matrix_from(t.at("bg_w"), kOutputs, kHidden, "bg_w");
    m.bg_b = vector_from(t.at("bg_b"), kOutputs, "bg_b");
    if (cfg) {
      const json& c = doc.at("config");
      cfg->lr = c.at("lr").get<double>();
      cfg->epochs = c.at("epochs").get<int>();
      cfg->lr_decay_every = c.at("lr_decay_every").get<int>();
      cfg->lr_decay_factor = c.at("lr_decay_factor").get<double>();
      cfg->batch_size = c.at("batch_size").get<int>();
      cfg->alpha0 = c.at("alpha0").get<double>();
      cfg->alpha1 = c.at("alpha1").get<double>();
      cfg->alpha2 = c.at("alpha2").get<double>();
      cfg->seed = c.at("seed").get<std::uint64_t>();
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const MlpModel& m, const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_checkpoint(out, m, cfg);
  if (!out) throw IoError("write failed for " + path);
}

MlpModel load_checkpoint(const std::string& path, TrainConfig* cfg) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return read_checkpoint(in, cfg);
}

}  // namespace ctxlab::mlp
