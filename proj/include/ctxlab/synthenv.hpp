#pragma once

// Synthetic environments: each input is the concatenation of an irrelevant
// block, a causal ("foreground") block and a spurious ("background") block,
// each drawn from per-coordinate Gaussians conditioned on latent classes.

#include "ctxlab/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>

namespace ctxlab::synth {

struct EnvironmentSpec {
  double p_co = 0.9;
  double sigma_eps = 0.0;
  double mu_c0 = 0.2;
  double mu_c1 = 0.8;
  double mu_s0 = 0.2;
  double mu_s1 = 0.8;
  double sigma_c = 0.2;
  double sigma_s = 0.2;
  double mu_n = 0.5;
  double sigma_n = 0.2;
  int dim_irrelevant = 80;
  int dim_causal = 10;
  int dim_spurious = 10;
  int n_samples = 1000;
  std::uint64_t seed = 0;

  int total_dim() const { return dim_irrelevant + dim_causal + dim_spurious; }
  double causal_mean(int cls) const { return cls == 0 ? mu_c0 : mu_c1; }
  double spurious_mean(int cls) const { return cls == 0 ? mu_s0 : mu_s1; }

  /// Throws InvalidArgument when a field is out of its domain.
  void validate() const;

  bool operator==(const EnvironmentSpec&) const = default;
};

struct IndexRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

/// Column layout of an input vector: irrelevant, then causal, then spurious.
struct BlockLayout {
  IndexRange irrelevant;
  IndexRange causal;
  IndexRange spurious;

  static BlockLayout of(const EnvironmentSpec& spec);
  bool operator==(const BlockLayout&) const = default;
};

struct Sample {
  Vector x;
  int y = 0;
  int z_c = 0;
  int z_s = 0;
};

/// Row i of `x` is sample i; `y[i] == z_c[i]` always.
struct Dataset {
  Matrix x;
  Labels y;
  Labels z_c;
  Labels z_s;
  EnvironmentSpec spec;
  BlockLayout layout;

  int size() const { return static_cast<int>(y.size()); }
  int dim() const { return static_cast<int>(x.cols()); }
  Sample sample(int i) const { return {x.row(i).transpose(), y[i], z_c[i], z_s[i]}; }
};

enum class Block { causal, spurious };

/// Single-block view of a dataset, labelled for 2n-way block/class probing:
/// causal-only rows carry z_c, spurious-only rows carry n_classes + z_s.
struct MaskedDataset {
  Dataset data;
  Block block = Block::causal;
  Labels probe_label;
};

inline constexpr int kNumClasses = 2;

Dataset generate(const EnvironmentSpec& spec);

/// Background-Invariance test environment: no co-occurrence, clean causal block.
EnvironmentSpec make_ood1(const EnvironmentSpec& base);

/// Object-Disambiguation test environment: full co-occurrence, heavy causal noise.
EnvironmentSpec make_ood2(const EnvironmentSpec& base);

MaskedDataset make_block_only(const Dataset& ds, Block block);

// Block samplers shared by the generator and the perturbation-based metrics.
// Each writes into the block's columns of `row` and consumes `rng` in a fixed order.
void fill_irrelevant(const EnvironmentSpec& spec, std::mt19937_64& rng, Eigen::Ref<Eigen::RowVectorXd> row);
void fill_causal(const EnvironmentSpec& spec, int z_c, std::mt19937_64& rng, Eigen::Ref<Eigen::RowVectorXd> row);
void fill_spurious(const EnvironmentSpec& spec, int z_s, std::mt19937_64& rng, Eigen::Ref<Eigen::RowVectorXd> row);

// Persistence. CSV header is `y,z_c,z_s,x_0,...,x_{D-1}`; the spec sidecar is
// `key=value` lines named after the EnvironmentSpec fields.
void write_csv(std::ostream& out, const Dataset& ds);
void write_spec(std::ostream& out, const EnvironmentSpec& spec);
EnvironmentSpec read_spec(std::istream& in);
Dataset read_csv(std::istream& in, const EnvironmentSpec& spec);

void save(const std::string& csv_path, const Dataset& ds);
Dataset load(const std::string& csv_path);
std::string sidecar_path(const std::string& csv_path);

/// Apply one `key=value` assignment to a spec; returns false for unknown keys.
bool set_spec_field(EnvironmentSpec& spec, const std::string& key, const std::string& value);

}  // namespace ctxlab::synth
