#include "ctxlab/synthenv.hpp"

#include "ctxlab/textio.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ctxlab::synth {

void EnvironmentSpec::validate() const {
  if (!(p_co >= 0.0 && p_co <= 1.0)) throw InvalidArgument("p_co must lie in [0,1]");
  if (!(sigma_eps >= 0.0) || !std::isfinite(sigma_eps)) throw InvalidArgument("sigma_eps must be a finite nonnegative real");
  if (!(sigma_c > 0.0) || !(sigma_s > 0.0) || !(sigma_n > 0.0)) throw InvalidArgument("sigma_c, sigma_s and sigma_n must be positive");
  for (double mu : {mu_c0, mu_c1, mu_s0, mu_s1, mu_n})
    if (!std::isfinite(mu)) throw InvalidArgument("means must be finite");
  if (dim_irrelevant <= 0 || dim_causal <= 0 || dim_spurious <= 0) throw InvalidArgument("block dimensions must be positive");
  if (n_samples <= 0) throw InvalidArgument("n_samples must be positive");
}

BlockLayout BlockLayout::of(const EnvironmentSpec& spec) {
  BlockLayout l;
  l.irrelevant = {0, spec.dim_irrelevant};
  l.causal = {l.irrelevant.end, l.irrelevant.end + spec.dim_causal};
  l.spurious = {l.causal.end, l.causal.end + spec.dim_spurious};
  return l;
}

void fill_irrelevant(const EnvironmentSpec& spec, std::mt19937_64& rng, Eigen::Ref<Eigen::RowVectorXd> row) {
  std::normal_distribution<double> n(spec.mu_n, spec.sigma_n);
  for (int j = 0; j < spec.dim_irrelevant; ++j) row(j) = n(rng);
}

void fill_causal(const EnvironmentSpec& spec, int z_c, std::mt19937_64& rng, Eigen::Ref<Eigen::RowVectorXd> row) {
  const int off = spec.dim_irrelevant;
  std::normal_distribution<double> base(spec.causal_mean(z_c), spec.sigma_c);
  for (int j = 0; j < spec.dim_causal; ++j) row(off + j) = base(rng);
  if (spec.sigma_eps > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.sigma_eps);
    for (int j = 0; j < spec.dim_causal; ++j) row(off + j) += noise(rng);
  }
}

void fill_spurious(const EnvironmentSpec& spec, int z_s, std::mt19937_64& rng, Eigen::Ref<Eigen::RowVectorXd> row) {
  const int off = spec.dim_irrelevant + spec.dim_causal;
  std::normal_distribution<double> n(spec.spurious_mean(z_s), spec.sigma_s);
  for (int j = 0; j < spec.dim_spurious; ++j) row(off + j) = n(rng);
}

Dataset generate(const EnvironmentSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  ds.layout = BlockLayout::of(spec);
  const int n = spec.n_samples;
  ds.x.resize(n, spec.total_dim());
  ds.y.resize(n);
  ds.z_c.resize(n);
  ds.z_s.resize(n);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::RowVectorXd row(spec.total_dim());
  for (int i = 0; i < n; ++i) {
    const int zc = unit(rng) < 0.5 ? 0 : 1;
    const int zs = unit(rng) < spec.p_co ? zc : 1 - zc;
    fill_irrelevant(spec, rng, row);
    fill_causal(spec, zc, rng, row);
    fill_spurious(spec, zs, rng, row);
    ds.x.row(i) = row;
    ds.y[i] = zc;
    ds.z_c[i] = zc;
    ds.z_s[i] = zs;
  }
  return ds;
}

EnvironmentSpec make_ood1(const EnvironmentSpec& base) {
  EnvironmentSpec s = base;
  s.p_co = 0.0;
  s.sigma_eps = 0.0;
  return s;
}

EnvironmentSpec make_ood2(const EnvironmentSpec& base) {
  EnvironmentSpec s = base;
  s.p_co = 1.0;
  s.sigma_eps = 1.5;
  return s;
}

MaskedDataset make_block_only(const Dataset& ds, Block block) {
  MaskedDataset out;
  out.block = block;
  out.data = ds;
  const IndexRange keep = block == Block::causal ? ds.layout.causal : ds.layout.spurious;
  const double fill = ds.spec.mu_n;
  Matrix& x = out.data.x;
  for (int j = 0; j < x.cols(); ++j)
    if (j < keep.begin || j >= keep.end) x.col(j).setConstant(fill);
  out.probe_label.resize(ds.y.size());
  for (std::size_t i = 0; i < ds.y.size(); ++i)
    out.probe_label[i] = block == Block::causal ? ds.z_c[i] : kNumClasses + ds.z_s[i];
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

struct Field {
  const char* name;
  std::function<std::string(const EnvironmentSpec&)> get;
  std::function<void(EnvironmentSpec&, const std::string&)> set;
};

template <typename T>
Field real_field(const char* name, T EnvironmentSpec::*member) {
  return {name, [member](const EnvironmentSpec& s) { return text::num(s.*member); },
          [member](EnvironmentSpec& s, const std::string& v) { s.*member = text::to_double(v); }};
}

Field int_field(const char* name, int EnvironmentSpec::*member) {
  return {name, [member](const EnvironmentSpec& s) { return std::to_string(s.*member); },
          [member](EnvironmentSpec& s, const std::string& v) { s.*member = static_cast<int>(text::to_int(v)); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      real_field("p_co", &EnvironmentSpec::p_co),
      real_field("sigma_eps", &EnvironmentSpec::sigma_eps),
      real_field("mu_c0", &EnvironmentSpec::mu_c0),
      real_field("mu_c1", &EnvironmentSpec::mu_c1),
      real_field("mu_s0", &EnvironmentSpec::mu_s0),
      real_field("mu_s1", &EnvironmentSpec::mu_s1),
      real_field("sigma_c", &EnvironmentSpec::sigma_c),
      real_field("sigma_s", &EnvironmentSpec::sigma_s),
      real_field("mu_n", &EnvironmentSpec::mu_n),
      real_field("sigma_n", &EnvironmentSpec::sigma_n),
      int_field("dim_irrelevant", &EnvironmentSpec::dim_irrelevant),
      int_field("dim_causal", &EnvironmentSpec::dim_causal),
      int_field("dim_spurious", &EnvironmentSpec::dim_spurious),
      int_field("n_samples", &EnvironmentSpec::n_samples),
      {"seed", [](const EnvironmentSpec& s) { return std::to_string(s.seed); },
       [](EnvironmentSpec& s, const std::string& v) { s.seed = text::to_u64(v); }},
  };
  return f;
}

}  // namespace

bool set_spec_field(EnvironmentSpec& spec, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.name) {
      f.set(spec, value);
      return true;
    }
  }
  return false;
}

void write_spec(std::ostream& out, const EnvironmentSpec& spec) {
  for (const auto& f : fields()) out << f.name << '=' << f.get(spec) << '\n';
}

EnvironmentSpec read_spec(std::istream& in) {
  EnvironmentSpec spec;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = text::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw IoError("malformed spec line: " + t);
    const std::string key = text::trim(t.substr(0, eq));
    if (!set_spec_field(spec, key, text::trim(t.substr(eq + 1))))
      throw IoError("unknown spec field: " + key);
  }
  spec.validate();
  return spec;
}

void write_csv(std::ostream& out, const Dataset& ds) {
  out << "y,z_c,z_s";
  for (int j = 0; j < ds.dim(); ++j) out << ",x_" << j;
  out << '\n';
  for (int i = 0; i < ds.size(); ++i) {
    out << ds.y[i] << ',' << ds.z_c[i] << ',' << ds.z_s[i];
    for (int j = 0; j < ds.dim(); ++j) out << ',' << text::num(ds.x(i, j));
    out << '\n';
  }
}

Dataset read_csv(std::istream& in, const EnvironmentSpec& spec) {
  Dataset ds;
  ds.spec = spec;
  ds.layout = BlockLayout::of(spec);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file");
  const auto header = text::split(text::trim(line), ',');
  const int dim = static_cast<int>(header.size()) - 3;
  if (dim != spec.total_dim() || header[0] != "y" || header[1] != "z_c" || header[2] != "z_s")
    throw IoError("dataset header does not match the spec layout");

  std::vector<double> values;
  while (std::getline(in, line)) {
    const std::string t = text::trim(line);
    if (t.empty()) continue;
    const auto cells = text::split(t, ',');
    if (static_cast<int>(cells.size()) != dim + 3) throw IoError("ragged dataset row");
    ds.y.push_back(static_cast<int>(text::to_int(cells[0])));
    ds.z_c.push_back(static_cast<int>(text::to_int(cells[1])));
    ds.z_s.push_back(static_cast<int>(text::to_int(cells[2])));
    for (int j = 0; j < dim; ++j) values.push_back(text::to_double(cells[static_cast<std::size_t>(j) + 3]));
  }
  const int n = static_cast<int>(ds.y.size());
  ds.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), n, dim);
  return ds;
}

std::string sidecar_path(const std::string& csv_path) {
  const auto dot = csv_path.rfind(".csv");
  return (dot == std::string::npos ? csv_path : csv_path.substr(0, dot)) + ".spec";
}

void save(const std::string& csv_path, const Dataset& ds) {
  std::ofstream csv(csv_path);
  std::ofstream side(sidecar_path(csv_path));
  if (!csv || !side) throw IoError("cannot write " + csv_path);
  write_csv(csv, ds);
  write_spec(side, ds.spec);
  if (!csv || !side) throw IoError("write failed for " + csv_path);
}

Dataset load(const std::string& csv_path) {
  std::ifstream side(sidecar_path(csv_path));
  if (!side) throw IoError("missing spec sidecar for " + csv_path);
  const EnvironmentSpec spec = read_spec(side);
  std::ifstream csv(csv_path);
  if (!csv) throw IoError("cannot read " + csv_path);
  return read_csv(csv, spec);
}

}  // namespace ctxlab::synth
