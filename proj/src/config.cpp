#include "safempc/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "safempc/errors.hpp"

namespace safempc {

using nlohmann::json;
using nlohmann::ordered_json;

dynamics::ObservationEncoding encoding_from_string(const std::string& name) {
  if (name == "sincos") return dynamics::ObservationEncoding::kSinCos;
  if (name == "raw") return dynamics::ObservationEncoding::kRaw;
  throw ConfigError("unknown observation encoding '" + name + "'");
}

const char* to_string(dynamics::ObservationEncoding encoding) {
  return encoding == dynamics::ObservationEncoding::kSinCos ? "sincos" : "raw";
}

namespace {

ordered_json optional_number(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return *v;
}

ordered_json vector_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["format"] = c.format == TraceFormat::kCsv ? "csv" : "json";
  j["plant"] = {{"cart_mass", c.plant.cart_mass},     {"pole_mass", c.plant.pole_mass},
                {"half_length", c.plant.half_length}, {"gravity", c.plant.gravity},
                {"force_limit", c.plant.force_limit}, {"dt", c.plant.dt}};
  j["observation"] = {{"encoding", to_string(c.encoding)}};
  j["cost"] = {{"w_x", c.mpc.cost.w_x},         {"w_xdot", c.mpc.cost.w_xdot},
               {"w_theta", c.mpc.cost.w_theta}, {"w_thetadot", c.mpc.cost.w_thetadot},
               {"w_u", c.mpc.cost.w_u},         {"k_term", c.mpc.cost.k_term}};
  j["mpc"] = {{"horizon", c.mpc.horizon},
              {"iterations", c.mpc.iterations},
              {"alpha", c.mpc.alpha},
              {"lambda_init", c.mpc.lambda_init},
              {"fresh_plan_control", c.mpc.fresh_plan_control}};
  j["network"] = {{"hidden", c.network.hidden},
                  {"activation", bayesnet::to_string(c.network.activation)},
                  {"mc_samples", c.mc_samples}};
  j["collect"] = {{"episodes", c.collect.episodes},
                  {"steps", c.collect.steps},
                  {"explore_noise", c.collect.explore_noise},
                  {"explore_correlation", c.collect.explore_correlation}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"length_scale", c.train.length_scale},
                {"temperature", c.train.temperature},
                {"initial_drop_probability", c.train.initial_drop_probability},
                {"target_scale", c.train.target_scale}};
  j["eval"] = {{"episodes", c.eval_episodes}, {"horizon", c.eval_horizon}};
  j["gate"] = {{"expert_tracks_plant", c.expert_tracks_plant},
               {"always_check", c.always_check}};
  j["cem"] = {{"episodes", c.cem.episodes},
              {"rollouts", c.cem.rollouts},
              {"elites", c.cem.elites},
              {"min_successes", c.cem.min_successes},
              {"max_retries", c.cem.max_retries},
              {"horizon", c.cem.horizon},
              {"initial_mu", optional_number(c.cem_initial_mu)},
              {"initial_sigma", optional_number(c.cem_initial_sigma)}};
  j["disturbance"] = {{"kind", gate::to_string(c.disturbance.kind)},
                      {"cart_mass", c.disturbance.cart_mass},
                      {"offset", vector_json(c.disturbance.offset)},
                      {"scale", vector_json(c.disturbance.scale)},
                      {"trigger_step", c.disturbance.trigger_step}};
  j["demo"] = {{"threshold", optional_number(c.demo_threshold)},
               {"episode", c.demo_episode}};
  return j;
}

namespace {

// Overlays `patch` onto `base`, refusing keys `base` does not have.
void merge_strict(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) {
    throw ConfigError((where.empty() ? std::string("config") : where) +
                      " must be a JSON object");
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& at(const std::string& section, const std::string& key) const {
    return section.empty() ? root_.at(key) : root_.at(section).at(key);
  }

  template <typename T>
  T get(const std::string& section, const std::string& key) const {
    const json& v = at(section, key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw json::type_error::create(302, "expected a number", &v);
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) {
          throw json::type_error::create(302, "expected an integer", &v);
        }
      }
      return v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name(section, key) + "' has the wrong type");
    }
  }

  std::optional<double> optional_real(const std::string& section,
                                      const std::string& key) const {
    const json& v = at(section, key);
    if (v.is_null()) return std::nullopt;
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf") return std::numeric_limits<double>::infinity();
      throw ConfigError("config key '" + name(section, key) +
                        "' must be a number, \"inf\" or null");
    }
    return get<double>(section, key);
  }

  Eigen::VectorXd vector(const std::string& section, const std::string& key) const {
    const auto values = get<std::vector<double>>(section, key);
    return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                             static_cast<Eigen::Index>(values.size()));
  }

 private:
  static std::string name(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
  }
  const json& root_;
};

}  // namespace

RunConfig config_from_json(const json& patch) {
  json tree = to_json(RunConfig{});
  merge_strict(tree, patch, "");
  const Reader r(tree);

  RunConfig c;
  c.seed = r.get<std::uint64_t>("", "seed");
  c.output_dir = r.get<std::string>("", "output_dir");
  c.threads = r.get<int>("", "threads");
  c.format = trace_format_from_string(r.get<std::string>("", "format"));

  c.plant.cart_mass = r.get<double>("plant", "cart_mass");
  c.plant.pole_mass = r.get<double>("plant", "pole_mass");
  c.plant.half_length = r.get<double>("plant", "half_length");
  c.plant.gravity = r.get<double>("plant", "gravity");
  c.plant.force_limit = r.get<double>("plant", "force_limit");
  c.plant.dt = r.get<double>("plant", "dt");
  c.encoding = encoding_from_string(r.get<std::string>("observation", "encoding"));

  c.mpc.cost.w_x = r.get<double>("cost", "w_x");
  c.mpc.cost.w_xdot = r.get<double>("cost", "w_xdot");
  c.mpc.cost.w_theta = r.get<double>("cost", "w_theta");
  c.mpc.cost.w_thetadot = r.get<double>("cost", "w_thetadot");
  c.mpc.cost.w_u = r.get<double>("cost", "w_u");
  c.mpc.cost.k_term = r.get<double>("cost", "k_term");
  c.mpc.horizon = r.get<int>("mpc", "horizon");
  c.mpc.iterations = r.get<int>("mpc", "iterations");
  c.mpc.alpha = r.get<double>("mpc", "alpha");
  c.mpc.lambda_init = r.get<double>("mpc", "lambda_init");
  c.mpc.fresh_plan_control = r.get<double>("mpc", "fresh_plan_control");

  c.network.hidden = r.get<std::vector<int>>("network", "hidden");
  c.network.activation =
      bayesnet::activation_from_string(r.get<std::string>("network", "activation"));
  c.network.input_dim = dynamics::observation_size(c.encoding);
  c.mc_samples = r.get<int>("network", "mc_samples");

  c.collect.episodes = r.get<int>("collect", "episodes");
  c.collect.steps = r.get<int>("collect", "steps");
  c.collect.explore_noise = r.get<double>("collect", "explore_noise");
  c.collect.explore_correlation = r.get<double>("collect", "explore_correlation");

  c.train.epochs = r.get<int>("train", "epochs");
  c.train.batch_size = r.get<int>("train", "batch_size");
  c.train.learning_rate = r.get<double>("train", "learning_rate");
  c.train.length_scale = r.get<double>("train", "length_scale");
  c.train.temperature = r.get<double>("train", "temperature");
  c.train.initial_drop_probability = r.get<double>("train", "initial_drop_probability");
  c.train.target_scale = r.get<double>("train", "target_scale");

  c.eval_episodes = r.get<int>("eval", "episodes");
  c.eval_horizon = r.get<int>("eval", "horizon");

  c.expert_tracks_plant = r.get<bool>("gate", "expert_tracks_plant");
  c.always_check = r.get<bool>("gate", "always_check");

  c.cem.episodes = r.get<int>("cem", "episodes");
  c.cem.rollouts = r.get<int>("cem", "rollouts");
  c.cem.elites = r.get<int>("cem", "elites");
  c.cem.min_successes = r.get<int>("cem", "min_successes");
  c.cem.max_retries = r.get<int>("cem", "max_retries");
  c.cem.horizon = r.get<int>("cem", "horizon");
  c.cem_initial_mu = r.optional_real("cem", "initial_mu");
  c.cem_initial_sigma = r.optional_real("cem", "initial_sigma");

  c.disturbance.kind = gate::disturbance_kind_from_string(
      r.get<std::string>("disturbance", "kind"));
  c.disturbance.cart_mass = r.get<double>("disturbance", "cart_mass");
  c.disturbance.offset = r.vector("disturbance", "offset");
  c.disturbance.scale = r.vector("disturbance", "scale");
  c.disturbance.trigger_step = r.get<int>("disturbance", "trigger_step");

  c.demo_threshold = r.optional_real("demo", "threshold");
  c.demo_episode = r.get<int>("demo", "episode");

  c.validate();
  return c;
}

void RunConfig::validate() const {
  try {
    validate_sections();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void RunConfig::validate_sections() const {
  plant.validate();
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  mpc.validate();
  network.validate();
  if (network.input_dim != dynamics::observation_size(encoding)) {
    throw ConfigError("network input size does not match the observation encoding");
  }
  if (mc_samples < 2) throw ConfigError("network.mc_samples must be >= 2");
  collect.validate();
  train.validate();
  if (eval_episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (eval_horizon < 1) throw ConfigError("eval.horizon must be >= 1");
  cem.validate();
  if (cem_initial_mu && !(std::isfinite(*cem_initial_mu) && *cem_initial_mu >= 0)) {
    throw ConfigError("cem.initial_mu must be finite and >= 0");
  }
  if (cem_initial_sigma && !(std::isfinite(*cem_initial_sigma) && *cem_initial_sigma > 0)) {
    throw ConfigError("cem.initial_sigma must be finite and > 0");
  }
  disturbance.validate();
  const int obs = dynamics::observation_size(encoding);
  if ((disturbance.offset.size() && disturbance.offset.size() != obs) ||
      (disturbance.scale.size() && disturbance.scale.size() != obs)) {
    throw ConfigError("disturbance.offset/scale must have one entry per observation");
  }
  if (disturbance.trigger_step >= cem.horizon) {
    throw ConfigError("disturbance.trigger_step must be < cem.horizon");
  }
  if (demo_threshold && !(*demo_threshold >= 0)) {
    throw ConfigError("demo.threshold must be >= 0");
  }
  if (demo_episode < 0) throw ConfigError("demo.episode must be >= 0");
}

std::filesystem::path RunConfig::output_path() const { return output_dir; }

json apply_overrides(json patch, const std::vector<std::string>& overrides) {
  if (patch.is_null()) patch = json::object();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + o + "' is not key=value");
    }
    const std::string path = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &patch;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot - start);
      if (key.empty()) throw ConfigError("override '" + o + "' has an empty key");
      if (dot == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      json& child = (*node)[key];
      if (child.is_null()) child = json::object();
      if (!child.is_object()) throw ConfigError("override '" + o + "' descends into a value");
      node = &child;
      start = dot + 1;
    }
  }
  return patch;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  json patch = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    patch = json::parse(in, nullptr, false);
    if (patch.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  }
  patch = apply_overrides(std::move(patch), overrides);
  if (const char* dir = std::getenv("SAFEMPC_OUTPUT_DIR"); dir && *dir) {
    patch["output_dir"] = dir;
  }
  return config_from_json(patch);
}

}  // namespace safempc
