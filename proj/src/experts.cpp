#include "smore/experts.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace smore {

static_assert(std::endian::native == std::endian::little,
              "bank serialization assumes a little-endian host");

Vector perceptron_forward(const Perceptron& p, const Vector& u, Vector* hidden_pre) {
  Vector h = matvec(p.w1, u);
  axpy(h, 1.0, p.b1);
  if (hidden_pre) *hidden_pre = h;
  for (double& v : h) v = std::tanh(v);
  Vector out = matvec(p.w2, h);
  axpy(out, 1.0, p.b2);
  return out;
}

namespace {

Perceptron make_perceptron(int out_dim, int hidden, int in_dim, InitScheme scheme, RngState& rng) {
  Perceptron p;
  p.w1 = seeded_init(hidden, in_dim, scheme, rng);
  p.b1.assign(static_cast<std::size_t>(hidden), 0.0);
  p.w2 = seeded_init(out_dim, hidden, scheme, rng);
  p.b2.assign(static_cast<std::size_t>(out_dim), 0.0);
  return p;
}

int query_input_dim(const ArchitectureSpec& spec, int layer) {
  return spec.router_down_dim + (spec.depth - 1 - layer) * spec.router_key_dim;
}

// The single source of truth for parameter ordering. flatten/unflatten,
// bank_axpy and the serialization all walk this list.
std::vector<const std::vector<double>*> tensor_list(const ExpertBank& bank, bool include_router) {
  std::vector<const std::vector<double>*> out;
  const int pl = bank.param_layers();
  for (int l = 0; l < pl; ++l)
    for (const auto& m : bank.down[static_cast<std::size_t>(l)]) out.push_back(&m.data);
  for (int l = 0; l < pl; ++l)
    for (const auto& m : bank.up[static_cast<std::size_t>(l)]) out.push_back(&m.data);
  for (const auto& layer : bank.bias)
    for (const auto& b : layer) out.push_back(&b);
  for (const auto& m : bank.mixer) out.push_back(&m.data);
  out.push_back(&bank.proj.data);
  for (const auto& p : bank.sigma_mlp) {
    out.push_back(&p.w1.data);
    out.push_back(&p.b1);
    out.push_back(&p.w2.data);
    out.push_back(&p.b2);
  }
  if (include_router) {
    out.push_back(&bank.token_down.data);
    for (const auto& m : bank.keys) out.push_back(&m.data);
    for (const auto& m : bank.noise_keys) out.push_back(&m.data);
    for (const auto& p : bank.query) {
      out.push_back(&p.w1.data);
      out.push_back(&p.b1);
      out.push_back(&p.w2.data);
      out.push_back(&p.b2);
    }
    for (const auto& m : bank.bu_keys) out.push_back(&m.data);
    for (const auto& p : bank.bu_score) {
      if (p.empty()) continue;
      out.push_back(&p.w1.data);
      out.push_back(&p.b1);
      out.push_back(&p.w2.data);
      out.push_back(&p.b2);
    }
  }
  return out;
}

std::vector<std::vector<double>*> tensor_list(ExpertBank& bank, bool include_router) {
  auto views = tensor_list(static_cast<const ExpertBank&>(bank), include_router);
  std::vector<std::vector<double>*> out;
  out.reserve(views.size());
  for (const auto* v : views) out.push_back(const_cast<std::vector<double>*>(v));
  return out;
}

void check_same_shapes(const ExpertBank& a, const ExpertBank& b) {
  const auto ta = tensor_list(a, true);
  const auto tb = tensor_list(b, true);
  if (ta.size() != tb.size()) throw std::invalid_argument("bank shape mismatch");
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i]->size() != tb[i]->size()) throw std::invalid_argument("bank shape mismatch");
}

}  // namespace

ExpertBank init_bank(const ArchitectureSpec& spec, RngState& rng) {
  validate_or_throw(spec);
  ExpertBank bank;
  bank.spec = spec;
  bank.dims = dimension_schedule(spec);
  const int L = spec.depth;
  const int pl = bank.param_layers();

  bank.down.resize(static_cast<std::size_t>(pl));
  bank.up.resize(static_cast<std::size_t>(pl));
  if (spec.bias_enabled) bank.bias.resize(static_cast<std::size_t>(pl));
  for (int l = 0; l < pl; ++l) {
    const int s = spec.expert_counts[static_cast<std::size_t>(l)];
    const int r = spec.ranks[static_cast<std::size_t>(l)];
    const int d_out_l = bank.dims.at(l + 1);
    for (int i = 0; i < s; ++i) {
      bank.down[static_cast<std::size_t>(l)].push_back(
          seeded_init(static_cast<std::size_t>(r), static_cast<std::size_t>(spec.base_dim),
                      InitScheme::uniform_scaled, rng));
      bank.up[static_cast<std::size_t>(l)].push_back(
          Matrix(static_cast<std::size_t>(d_out_l), static_cast<std::size_t>(r)));
      if (spec.bias_enabled)
        bank.bias[static_cast<std::size_t>(l)].push_back(
            Vector(static_cast<std::size_t>(d_out_l), 0.0));
    }
  }

  bank.mixer.resize(static_cast<std::size_t>(L));
  bank.mixer[0] = Matrix(static_cast<std::size_t>(bank.dims.at(1)), 0);
  for (int l = 1; l < L; ++l) {
    bank.mixer[static_cast<std::size_t>(l)] =
        seeded_init(static_cast<std::size_t>(bank.dims.at(l + 1)),
                    static_cast<std::size_t>(bank.dims.at(l)), InitScheme::uniform_scaled, rng);
  }
  bank.proj = seeded_init(static_cast<std::size_t>(spec.output_dim),
                          static_cast<std::size_t>(bank.dims.inner_dim()),
                          InitScheme::uniform_scaled, rng);

  if (spec.activation == Activation::mlp) {
    for (int l = 0; l < L; ++l) {
      const int d = bank.dims.at(l + 1);
      bank.sigma_mlp.push_back(
          make_perceptron(d, bank.sigma_hidden(l), d, InitScheme::uniform_scaled, rng));
    }
  }

  const int m = spec.router_key_dim;
  const int dd = spec.router_down_dim;
  bank.token_down = dd > 0 ? seeded_init(static_cast<std::size_t>(dd),
                                         static_cast<std::size_t>(spec.base_dim),
                                         InitScheme::uniform_scaled, rng)
                           : Matrix(0, static_cast<std::size_t>(spec.base_dim));
  for (int l = 0; l < L; ++l) {
    const int s = spec.expert_counts[static_cast<std::size_t>(l)];
    bank.keys.push_back(m > 0 ? seeded_init(static_cast<std::size_t>(s),
                                            static_cast<std::size_t>(m),
                                            InitScheme::normal_scaled, rng)
                              : Matrix(static_cast<std::size_t>(s), 0));
  }
  if (spec.gate == GateType::noisy_topk) {
    for (int l = 0; l < L; ++l) {
      const int s = spec.expert_counts[static_cast<std::size_t>(l)];
      bank.noise_keys.push_back(m > 0 ? seeded_init(static_cast<std::size_t>(s),
                                                    static_cast<std::size_t>(m),
                                                    InitScheme::normal_scaled, rng)
                                      : Matrix(static_cast<std::size_t>(s), 0));
    }
  }
  for (int l = 0; l < L; ++l) {
    const int in = query_input_dim(spec, l);
    if (m > 0 && in > 0) {
      bank.query.push_back(make_perceptron(m, m, in, InitScheme::uniform_scaled, rng));
    } else {
      bank.query.emplace_back();
    }
  }

  if (spec.bottom_up) {
    bank.bu_keys.resize(static_cast<std::size_t>(L));
    bank.bu_score.resize(static_cast<std::size_t>(L));
    const long long positions1 = total_fanout(spec, 1);
    bank.bu_keys[0] = seeded_init(
        static_cast<std::size_t>(positions1 * spec.expert_counts[0]),
        static_cast<std::size_t>(dd), InitScheme::normal_scaled, rng);
    for (int l = 1; l < L; ++l) {
      const long long positions = total_fanout(spec, l);
      bank.bu_keys[static_cast<std::size_t>(l)] =
          seeded_init(static_cast<std::size_t>(positions), static_cast<std::size_t>(dd),
                      InitScheme::normal_scaled, rng);
      bank.bu_score[static_cast<std::size_t>(l)] =
          make_perceptron(spec.expert_counts[static_cast<std::size_t>(l)], m,
                          bank.dims.at(l) + dd, InitScheme::uniform_scaled, rng);
    }
  }
  return bank;
}

ExpertBank zero_like(const ExpertBank& bank) {
  ExpertBank out = bank;
  for (auto* t : tensor_list(out, true)) std::fill(t->begin(), t->end(), 0.0);
  return out;
}

BaselineParams random_baseline(int d, int d_out, const std::vector<int>& expert_counts,
                               const std::vector<int>& ranks, RngState& rng) {
  if (expert_counts.size() != ranks.size() || expert_counts.empty())
    throw std::invalid_argument("random_baseline: orders mismatch");
  BaselineParams base;
  base.base_dim = d;
  base.output_dim = d_out;
  base.expert_counts = expert_counts;
  base.ranks = ranks;
  base.experts.resize(expert_counts.size());
  for (std::size_t l = 0; l < expert_counts.size(); ++l) {
    for (int i = 0; i < expert_counts[l]; ++i) {
      Matrix down = seeded_init(static_cast<std::size_t>(ranks[l]), static_cast<std::size_t>(d),
                                InitScheme::uniform_scaled, rng);
      Matrix up = seeded_init(static_cast<std::size_t>(d_out), static_cast<std::size_t>(ranks[l]),
                              InitScheme::uniform_scaled, rng);
      base.experts[l].emplace_back(std::move(down), std::move(up));
    }
  }
  return base;
}

Matrix projection_embed(int a, int b) {
  if (a < b || b < 0) throw std::invalid_argument("projection_embed: need a >= b >= 0");
  Matrix p(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  for (int j = 0; j < b; ++j) p.at(static_cast<std::size_t>(a - b + j), static_cast<std::size_t>(j)) = 1.0;
  return p;
}

namespace {

ArchitectureSpec baseline_spec(const BaselineParams& base, Variant variant) {
  ArchitectureSpec spec;
  spec.depth = base.orders();
  spec.expert_counts = base.expert_counts;
  spec.ranks = base.ranks;
  spec.fanouts = base.expert_counts;
  spec.base_dim = base.base_dim;
  spec.output_dim = base.output_dim;
  spec.variant = variant;
  spec.activation = Activation::identity;
  spec.gate = GateType::dense;
  spec.bias_enabled = false;
  return spec;
}

void check_baseline_shapes(const BaselineParams& base) {
  for (int l = 0; l < base.orders(); ++l) {
    const auto& order = base.experts[static_cast<std::size_t>(l)];
    if (static_cast<int>(order.size()) != base.expert_counts[static_cast<std::size_t>(l)])
      throw std::invalid_argument("baseline: expert count mismatch at order " + std::to_string(l));
    for (const auto& [down, up] : order) {
      const std::size_t r = static_cast<std::size_t>(base.ranks[static_cast<std::size_t>(l)]);
      if (down.rows != r || down.cols != static_cast<std::size_t>(base.base_dim))
        throw std::invalid_argument("baseline: rank mismatch in down projection at order " +
                                    std::to_string(l));
      if (up.rows != static_cast<std::size_t>(base.output_dim) || up.cols != r)
        throw std::invalid_argument("baseline: dimension schedule mismatch in up projection at order " +
                                    std::to_string(l));
    }
  }
}

}  // namespace

ExpertBank construct_equivalent_molre(const BaselineParams& base, RngState& rng) {
  if (!base.is_molre()) throw std::invalid_argument("construct_equivalent_molre: baseline has multiple orders");
  check_baseline_shapes(base);
  ExpertBank bank = init_bank(baseline_spec(base, Variant::molre), rng);
  const int s = base.expert_counts[0];
  const int r = base.ranks[0];
  // A^i copies the baseline, B^i drops the rank-r output into block i, and the
  // projection concatenates the baseline up-projections so proj * B^i = up^i.
  for (int i = 0; i < s; ++i) {
    bank.down[0][static_cast<std::size_t>(i)] = base.experts[0][static_cast<std::size_t>(i)].first;
    Matrix b(static_cast<std::size_t>(s * r), static_cast<std::size_t>(r));
    for (int j = 0; j < r; ++j) b.at(static_cast<std::size_t>(i * r + j), static_cast<std::size_t>(j)) = 1.0;
    bank.up[0][static_cast<std::size_t>(i)] = std::move(b);
  }
  Matrix proj(static_cast<std::size_t>(base.output_dim), static_cast<std::size_t>(s * r));
  for (int i = 0; i < s; ++i) {
    const Matrix& up = base.experts[0][static_cast<std::size_t>(i)].second;
    for (std::size_t row = 0; row < up.rows; ++row)
      for (int j = 0; j < r; ++j)
        proj.at(row, static_cast<std::size_t>(i * r + j)) = up.at(row, static_cast<std::size_t>(j));
  }
  bank.proj = std::move(proj);
  return bank;
}

ExpertBank construct_equivalent_momor(const BaselineParams& base, RngState& rng) {
  check_baseline_shapes(base);
  ExpertBank bank = init_bank(baseline_spec(base, base.orders() == 1 ? Variant::molre : Variant::momor), rng);
  const int L = base.orders();
  for (int l = 0; l < L; ++l) {
    const int s = base.expert_counts[static_cast<std::size_t>(l)];
    const int r = base.ranks[static_cast<std::size_t>(l)];
    const int d_next = bank.dims.at(l + 1);
    for (int i = 0; i < s; ++i) {
      bank.down[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] =
          base.experts[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)].first;
      Matrix b(static_cast<std::size_t>(d_next), static_cast<std::size_t>(r));
      for (int j = 0; j < r; ++j)
        b.at(static_cast<std::size_t>(i * r + j), static_cast<std::size_t>(j)) = 1.0;
      bank.up[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] = std::move(b);
    }
    if (l >= 1)
      bank.mixer[static_cast<std::size_t>(l)] = projection_embed(bank.dims.at(l + 1), bank.dims.at(l));
  }
  // Mixers embed lower layers into the trailing coordinates, so the projection
  // blocks run from the top order down to order 0.
  Matrix proj(static_cast<std::size_t>(base.output_dim),
              static_cast<std::size_t>(bank.dims.inner_dim()));
  std::size_t col = 0;
  for (int l = L - 1; l >= 0; --l) {
    const int s = base.expert_counts[static_cast<std::size_t>(l)];
    const int r = base.ranks[static_cast<std::size_t>(l)];
    for (int i = 0; i < s; ++i) {
      const Matrix& up = base.experts[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)].second;
      for (std::size_t row = 0; row < up.rows; ++row)
        for (int j = 0; j < r; ++j) proj.at(row, col + static_cast<std::size_t>(j)) = up.at(row, static_cast<std::size_t>(j));
      col += static_cast<std::size_t>(r);
    }
  }
  bank.proj = std::move(proj);
  return bank;
}

ExpertBank construct_distinctness_params(const ArchitectureSpec& spec, RngState& rng) {
  if (spec.activation == Activation::identity)
    throw std::invalid_argument("distinctness construction requires nonlinear activation");
  if (spec.activation != Activation::mlp)
    throw std::invalid_argument("distinctness construction requires the mlp activation");
  if (!spec.bias_enabled)
    throw std::invalid_argument("distinctness construction requires biases");
  ExpertBank bank = init_bank(spec, rng);
  const int L = spec.depth;
  for (int l = 0; l < bank.param_layers(); ++l) {
    const int s = spec.expert_counts[static_cast<std::size_t>(l)];
    for (int i = 0; i < s; ++i) {
      auto& a = bank.down[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
      std::fill(a.data.begin(), a.data.end(), 0.0);
      auto& b = bank.up[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
      std::fill(b.data.begin(), b.data.end(), 0.0);
      auto& bias = bank.bias[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
      std::fill(bias.begin(), bias.end(), 0.0);
      bias[0] = static_cast<double>(i + 1);  // 1-based expert index in the first slot
    }
  }
  for (int l = 1; l < L; ++l)
    bank.mixer[static_cast<std::size_t>(l)] = projection_embed(bank.dims.at(l + 1), bank.dims.at(l));
  // Fixed random perceptron standing in for the injective set encoder;
  // injectivity is certified by exhaustive enumeration at test scale.
  bank.sigma_mlp.clear();
  for (int l = 0; l < L; ++l) {
    const int d = bank.dims.at(l + 1);
    bank.sigma_mlp.push_back(make_perceptron(d, bank.sigma_hidden(l), d, InitScheme::normal_scaled, rng));
  }
  return bank;
}

Vector flatten_params(const ExpertBank& bank, bool include_router) {
  Vector out;
  out.reserve(param_vector_size(bank, include_router));
  for (const auto* t : tensor_list(bank, include_router)) out.insert(out.end(), t->begin(), t->end());
  return out;
}

void unflatten_params(ExpertBank& bank, const Vector& theta, bool include_router) {
  if (theta.size() != param_vector_size(bank, include_router))
    throw std::invalid_argument("unflatten_params: length mismatch");
  std::size_t pos = 0;
  for (auto* t : tensor_list(bank, include_router)) {
    std::copy(theta.begin() + static_cast<std::ptrdiff_t>(pos),
              theta.begin() + static_cast<std::ptrdiff_t>(pos + t->size()), t->begin());
    pos += t->size();
  }
}

std::size_t param_vector_size(const ExpertBank& bank, bool include_router) {
  std::size_t n = 0;
  for (const auto* t : tensor_list(bank, include_router)) n += t->size();
  return n;
}

void bank_axpy(ExpertBank& dst, double alpha, const ExpertBank& src) {
  check_same_shapes(dst, src);
  auto td = tensor_list(dst, true);
  auto ts = tensor_list(src, true);
  for (std::size_t i = 0; i < td.size(); ++i) {
    auto& d = *td[i];
    const auto& s = *ts[i];
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += alpha * s[j];
  }
}

double bank_norm2(const ExpertBank& bank) {
  double acc = 0.0;
  for (const auto* t : tensor_list(bank, true))
    for (double v : *t) acc += v * v;
  return std::sqrt(acc);
}

void save_bank(const ExpertBank& bank, const std::string& prefix) {
  const Vector flat = flatten_params(bank, true);
  nlohmann::json manifest;
  manifest["format"] = "smore-bank-v1";
  manifest["spec"] = nlohmann::json::parse(spec_to_json_text(bank.spec));
  manifest["count"] = flat.size();
  manifest["data_file"] = prefix + ".bin";
  std::ofstream mf(prefix + ".json");
  if (!mf) throw std::runtime_error("save_bank: cannot write " + prefix + ".json");
  mf << manifest.dump(2) << "\n";
  std::ofstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("save_bank: cannot write " + prefix + ".bin");
  bf.write(reinterpret_cast<const char*>(flat.data()),
           static_cast<std::streamsize>(flat.size() * sizeof(double)));
}

ExpertBank load_bank(const std::string& prefix) {
  std::ifstream mf(prefix + ".json");
  if (!mf) throw std::runtime_error("load_bank: cannot open " + prefix + ".json");
  nlohmann::json manifest = nlohmann::json::parse(mf);
  if (manifest.value("format", "") != "smore-bank-v1")
    throw std::runtime_error("load_bank: unknown manifest format");
  const ArchitectureSpec spec = spec_from_json_text(manifest.at("spec").dump());
  RngState rng(0);
  ExpertBank bank = init_bank(spec, rng);
  const std::size_t count = manifest.at("count").get<std::size_t>();
  if (count != param_vector_size(bank, true))
    throw std::runtime_error("load_bank: parameter count mismatch");
  Vector flat(count, 0.0);
  std::ifstream bf(manifest.at("data_file").get<std::string>(), std::ios::binary);
  if (!bf) throw std::runtime_error("load_bank: cannot open data file");
  bf.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (bf.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
    throw std::runtime_error("load_bank: truncated data file");
  unflatten_params(bank, flat, true);
  return bank;
}

}  // namespace smore
