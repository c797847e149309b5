#pragma once

// Three-hidden-layer ReLU MLP (5 units per layer) with a 2-way task head and a
// separate 2-way background head, trained with SGD on the weighted objective
//   alpha0 * L_task + alpha1 * L_fg + alpha2 * L_bg.

#include "ctxlab/common.hpp"
#include "ctxlab/synthenv.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>

namespace ctxlab::mlp {

inline constexpr int kHidden = 5;
inline constexpr int kLayers = 3;
inline constexpr int kOutputs = 2;

/// Parameters of the network. The same type carries gradients.
struct MlpModel {
  Matrix w1, w2, w3;   // out x in
  Vector b1, b2, b3;
  Matrix task_w, bg_w;  // 2 x kHidden
  Vector task_b, bg_b;
  std::uint64_t seed = 0;

  int input_dim() const { return static_cast<int>(w1.cols()); }

  static MlpModel zeros(int input_dim);

  /// Calls f(name, data, size) for every tensor in checkpoint order
  /// `w1,b1,w2,b2,w3,b3,task_w,task_b,bg_w,bg_b`.
  template <typename F>
  void for_each_tensor(F&& f) {
    f("w1", w1.data(), w1.size());
    f("b1", b1.data(), b1.size());
    f("w2", w2.data(), w2.size());
    f("b2", b2.data(), b2.size());
    f("w3", w3.data(), w3.size());
    f("b3", b3.data(), b3.size());
    f("task_w", task_w.data(), task_w.size());
    f("task_b", task_b.data(), task_b.size());
    f("bg_w", bg_w.data(), bg_w.size());
    f("bg_b", bg_b.data(), bg_b.size());
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<MlpModel*>(this)->for_each_tensor([&](const char* name, double* d, Eigen::Index n) {
      f(name, static_cast<const double*>(d), n);
    });
  }

  bool all_finite() const;
  bool operator==(const MlpModel& o) const;
};

struct TrainConfig {
  double lr = 0.1;
  int epochs = 750;
  int lr_decay_every = 250;
  double lr_decay_factor = 10.0;
  int batch_size = 64;
  double alpha0 = 1.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  double learning_rate_at(int epoch) const;
  bool operator==(const TrainConfig&) const = default;
};

struct RepresentationSet {
  Matrix h1, h2, h3;
  Matrix task_prob;
  Matrix bg_prob;

  /// Hidden layer 1..3.
  const Matrix& layer(int k) const;
  int rows() const { return static_cast<int>(h1.rows()); }
};

/// He-normal weights N(0, 2/fan_in), zero biases.
MlpModel init(std::uint64_t seed, int input_dim);

RepresentationSet forward(const MlpModel& m, const Matrix& x);

/// Activations of one hidden layer (1..3), or task-head probabilities for layer 4.
Matrix layer_output(const MlpModel& m, const Matrix& x, int layer);

/// One mini-batch with the augmented variants used by L_fg and L_bg.
/// Variants are only populated when their loss weight is nonzero.
struct TrainingBatch {
  Matrix x;
  Labels y;
  Matrix x_fg;   ///< spurious block redrawn from a uniformly random class
  Matrix x_bg;   ///< causal block replaced by the uninformative constant mu_n
  Labels z_s;

  int size() const { return static_cast<int>(y.size()); }
};

TrainingBatch make_batch(const synth::Dataset& ds, std::span<const int> rows, const TrainConfig& cfg,
                         std::mt19937_64& rng);

struct LossBreakdown {
  double total = 0.0;
  double task = 0.0;
  double fg = 0.0;
  double bg = 0.0;
};

/// Weighted loss on `batch` and its gradient (written to `grads`, same shapes as `m`).
LossBreakdown loss_and_grads(const MlpModel& m, const TrainingBatch& batch, const TrainConfig& cfg, MlpModel& grads);

/// Weighted loss only.
LossBreakdown loss(const MlpModel& m, const TrainingBatch& batch, const TrainConfig& cfg);

/// SGD over shuffled mini-batches with step decay. Throws DegenerateError if
/// the loss becomes non-finite. `loss_history`, when given, receives the mean
/// batch loss of every epoch.
MlpModel train(const synth::Dataset& ds, const TrainConfig& cfg, std::vector<double>* loss_history = nullptr);

double evaluate(const MlpModel& m, const synth::Dataset& ds);
double accuracy_from_logits(const Matrix& logits, const Labels& y);

// Checkpoints: JSON document with nested-array tensors and the training config.
void write_checkpoint(std::ostream& out, const MlpModel& m, const TrainConfig& cfg);
MlpModel read_checkpoint(std::istream& in, TrainConfig* cfg = nullptr);
void save_checkpoint(const std::string& path, const MlpModel& m, const TrainConfig& cfg);
MlpModel load_checkpoint(const std::string& path, TrainConfig* cfg = nullptr);

}  // namespace ctxlab::mlp
