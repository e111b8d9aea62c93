#include "smore/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace smore {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::smore: return "smore";
    case Variant::smore_star: return "smore-star";
    case Variant::smore_shared: return "smore-shared";
    case Variant::molre: return "molre";
    case Variant::momor: return "momor";
  }
  return "?";
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::mlp: return "mlp";
  }
  return "?";
}

std::string to_string(GateType g) {
  switch (g) {
    case GateType::dense: return "dense";
    case GateType::noisy_topk: return "noisy-topk";
    case GateType::switch_gate: return "switch";
  }
  return "?";
}

DimensionSchedule dimension_schedule(const ArchitectureSpec& spec) {
  DimensionSchedule sched;
  sched.dims.resize(static_cast<std::size_t>(spec.depth) + 1);
  sched.dims[0] = 0;
  if (spec.variant == Variant::smore_shared) {
    const int d = spec.expert_counts[0] * spec.ranks[0];
    for (int l = 1; l <= spec.depth; ++l) sched.dims[static_cast<std::size_t>(l)] = d;
  } else {
    for (int l = 0; l < spec.depth; ++l) {
      sched.dims[static_cast<std::size_t>(l) + 1] =
          sched.dims[static_cast<std::size_t>(l)] + spec.expert_counts[static_cast<std::size_t>(l)] * spec.ranks[static_cast<std::size_t>(l)];
    }
  }
  return sched;
}

long long total_fanout(const ArchitectureSpec& spec, int layer) {
  if (layer < 0 || layer > spec.depth) throw std::out_of_range("total_fanout: layer out of range");
  long long f = 1;
  for (int i = layer; i < spec.depth; ++i) f *= spec.effective_fanout(i);
  return f;
}

std::vector<std::string> validate(const ArchitectureSpec& spec) {
  std::vector<std::string> errors;
  const std::size_t depth = static_cast<std::size_t>(spec.depth);
  if (spec.depth < 1) errors.push_back("depth must be at least 1");
  if (spec.expert_counts.size() != depth) errors.push_back("expert_counts must have depth entries");
  if (spec.ranks.size() != depth) errors.push_back("ranks must have depth entries");
  if (spec.fanouts.size() != depth) errors.push_back("fanouts must have depth entries");
  if (!errors.empty()) return errors;  // sizes are broken; per-layer checks would be UB

  for (int l = 0; l < spec.depth; ++l) {
    const std::size_t i = static_cast<std::size_t>(l);
    if (spec.expert_counts[i] < 1)
      errors.push_back("expert_counts[" + std::to_string(l) + "] must be at least 1");
    if (spec.ranks[i] < 1) errors.push_back("ranks[" + std::to_string(l) + "] must be at least 1");
    if (spec.fanouts[i] < 1)
      errors.push_back("fanouts[" + std::to_string(l) + "] must be at least 1");
    else if (spec.fanouts[i] > spec.expert_counts[i])
      errors.push_back("fanouts[" + std::to_string(l) + "]: fanout exceeds expert count");
  }
  if (spec.base_dim < 1) errors.push_back("base_dim must be at least 1");
  if (spec.output_dim < 1) errors.push_back("output_dim must be at least 1");
  if (spec.router_down_dim < 0) errors.push_back("router_down_dim must be nonnegative");
  if (spec.router_key_dim < 0) errors.push_back("router_key_dim must be nonnegative");
  if (spec.balance_coeff < 0.0) errors.push_back("balance_coeff must be nonnegative");
  if (spec.mlp_hidden < 0) errors.push_back("mlp_hidden must be nonnegative");
  if (spec.mlp_hidden > 0 && spec.activation != Activation::mlp)
    errors.push_back("mlp_hidden requires activation=mlp");

  if (spec.variant == Variant::smore_shared) {
    for (int l = 1; l < spec.depth; ++l) {
      const std::size_t i = static_cast<std::size_t>(l);
      if (spec.ranks[i] != spec.ranks[0]) {
        errors.push_back("ranks: shared variant requires uniform ranks");
        break;
      }
    }
    for (int l = 1; l < spec.depth; ++l) {
      const std::size_t i = static_cast<std::size_t>(l);
      if (spec.expert_counts[i] != spec.expert_counts[0]) {
        errors.push_back("expert_counts: shared variant requires uniform expert counts");
        break;
      }
    }
  }
  if (spec.variant == Variant::molre && spec.depth != 1)
    errors.push_back("depth: molre variant requires depth 1");
  if (spec.bottom_up && spec.gate == GateType::dense)
    errors.push_back("gate: bottom-up routing is unsupported with the dense gate");
  return errors;
}

void validate_or_throw(const ArchitectureSpec& spec) {
  const auto errors = validate(spec);
  if (errors.empty()) return;
  std::string msg = "invalid architecture spec:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw ConfigError(msg);
}

namespace {

Variant variant_from(const std::string& s) {
  if (s == "smore") return Variant::smore;
  if (s == "smore-star") return Variant::smore_star;
  if (s == "smore-shared") return Variant::smore_shared;
  if (s == "molre") return Variant::molre;
  if (s == "momor") return Variant::momor;
  throw ConfigError("unknown variant '" + s + "'");
}

Activation activation_from(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "mlp") return Activation::mlp;
  throw ConfigError("unknown activation '" + s + "'");
}

GateType gate_from(const std::string& s) {
  if (s == "dense") return GateType::dense;
  if (s == "noisy-topk") return GateType::noisy_topk;
  if (s == "switch") return GateType::switch_gate;
  throw ConfigError("unknown gate '" + s + "'");
}

const std::set<std::string> kKnownKeys = {
    "depth",         "expert_counts", "ranks",          "fanouts",       "base_dim",
    "output_dim",    "variant",       "activation",     "mlp_hidden",    "gate",
    "router_down_dim", "router_key_dim", "balance_coeff", "bias_enabled", "bottom_up"};

}  // namespace

ArchitectureSpec spec_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!kKnownKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }

  ArchitectureSpec spec;
  try {
    spec.depth = j.at("depth").get<int>();
    spec.expert_counts = j.at("expert_counts").get<std::vector<int>>();
    spec.ranks = j.at("ranks").get<std::vector<int>>();
    spec.base_dim = j.at("base_dim").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is missing or mistypes a required key "
                                  "(depth, expert_counts, ranks, base_dim): ") +
                      e.what());
  }
  try {
    spec.fanouts = j.value("fanouts", spec.expert_counts);
    spec.output_dim = j.value("output_dim", spec.base_dim);
    spec.variant = variant_from(j.value("variant", "smore"));
    spec.activation = activation_from(j.value("activation", "relu"));
    spec.mlp_hidden = j.value("mlp_hidden", 0);
    spec.gate = gate_from(j.value("gate", "dense"));
    spec.router_down_dim = j.value("router_down_dim", 24);
    spec.router_key_dim = j.value("router_key_dim", 16);
    spec.balance_coeff = j.value("balance_coeff", 0.01);
    spec.bias_enabled = j.value("bias_enabled", false);
    spec.bottom_up = j.value("bottom_up", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a mistyped optional key: ") + e.what());
  }
  validate_or_throw(spec);
  return spec;
}

ArchitectureSpec spec_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return spec_from_json_text(ss.str());
}

std::string spec_to_json_text(const ArchitectureSpec& spec) {
  json j;
  j["depth"] = spec.depth;
  j["expert_counts"] = spec.expert_counts;
  j["ranks"] = spec.ranks;
  j["fanouts"] = spec.fanouts;
  j["base_dim"] = spec.base_dim;
  j["output_dim"] = spec.output_dim;
  j["variant"] = to_string(spec.variant);
  j["activation"] = to_string(spec.activation);
  j["mlp_hidden"] = spec.mlp_hidden;
  j["gate"] = to_string(spec.gate);
  j["router_down_dim"] = spec.router_down_dim;
  j["router_key_dim"] = spec.router_key_dim;
  j["balance_coeff"] = spec.balance_coeff;
  j["bias_enabled"] = spec.bias_enabled;
  j["bottom_up"] = spec.bottom_up;
  return j.dump(2);
}

std::uint64_t config_hash(const ArchitectureSpec& spec) {
  const std::string text = spec_to_json_text(spec);
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace smore
