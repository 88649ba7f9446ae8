#include "safempc/imitation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "safempc/errors.hpp"
#include "safempc/parallel.hpp"
#include "safempc/table.hpp"

namespace safempc::imitation {

using bayesnet::NetParams;
using dynamics::CartPoleState;

int Dataset::observation_dim() const {
  return observations.empty() ? 0 : static_cast<int>(observations.front().size());
}

Eigen::MatrixXd Dataset::observation_matrix() const {
  Eigen::MatrixXd m(observation_dim(), static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) {
    m.col(static_cast<Eigen::Index>(i)) = observations[i];
  }
  return m;
}

Eigen::VectorXd Dataset::control_vector() const {
  return Eigen::Map<const Eigen::VectorXd>(controls.data(),
                                           static_cast<Eigen::Index>(size()));
}

void Dataset::refresh_normalization() {
  normalization = bayesnet::Standardizer::fit(observation_matrix());
}

void CollectConfig::validate() const {
  if (episodes < 1) throw ConfigError("collect.episodes must be >= 1");
  if (steps < 1) throw ConfigError("collect.steps must be >= 1");
  if (!(explore_noise >= 0)) throw ConfigError("collect.explore_noise must be >= 0");
  if (!(explore_correlation >= 0 && explore_correlation < 1)) {
    throw ConfigError("collect.explore_correlation must be in [0, 1)");
  }
}

CollectionResult collect_dataset(const EnvConfig& env, const mpc::MpcConfig& expert,
                                 const CollectConfig& config, std::uint64_t seed,
                                 int threads) {
  config.validate();
  expert.validate();
  env.plant.validate();

  struct Episode {
    std::vector<Eigen::VectorXd> obs;
    std::vector<double> labels;
    bool failed = false;
  };
  std::vector<Episode> episodes(static_cast<std::size_t>(config.episodes));

  parallel_for(config.episodes, threads, [&](int e) {
    Rng rng = make_rng(seed, "collect", {static_cast<std::uint64_t>(e)});
    Episode& out = episodes[static_cast<std::size_t>(e)];
    mpc::MpcController controller(expert, env.plant);
    CartPoleState s = dynamics::sample_hanging_start(rng);
    const double a = config.explore_correlation;
    const double innovation = std::sqrt(1.0 - a * a) * config.explore_noise;
    double noise = 0.0;
    for (int t = 0; t < config.steps; ++t) {
      const double label = controller.act(s);
      out.obs.push_back(dynamics::observe(s, env.encoding));
      out.labels.push_back(label);
      if (config.explore_noise > 0) {
        noise = t == 0 ? gaussian(rng, 0.0, config.explore_noise)
                       : a * noise + gaussian(rng, 0.0, innovation);
      }
      s = dynamics::step(s, label + noise, env.plant);
      if (std::abs(s.x) >= dynamics::kTrackLimit) {
        out.failed = true;
        break;
      }
    }
  });

  CollectionResult result;
  for (Episode& e : episodes) {
    if (e.failed) {
      ++result.discarded_episodes;
      continue;
    }
    for (std::size_t i = 0; i < e.labels.size(); ++i) {
      result.dataset.observations.push_back(std::move(e.obs[i]));
      result.dataset.controls.push_back(e.labels[i]);
    }
  }
  if (result.dataset.size() > 0) result.dataset.refresh_normalization();
  return result;
}

namespace {

std::vector<Column> dataset_columns(int dim) {
  std::vector<Column> cols;
  for (int i = 0; i < dim; ++i) cols.push_back({"obs_" + std::to_string(i), ColumnType::kReal});
  cols.push_back({"control", ColumnType::kReal});
  return cols;
}

}  // namespace

void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path) {
  const int dim = dataset.observation_dim();
  Table table;
  table.columns = dataset_columns(dim);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::vector<Cell> row;
    for (int k = 0; k < dim; ++k) row.emplace_back(dataset.observations[i][k]);
    row.emplace_back(dataset.controls[i]);
    table.add_row(std::move(row));
  }
  write_trace(table, path);
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream probe(path);
  if (!probe) throw IoError("cannot open dataset " + path.string());
  std::string header;
  std::getline(probe, header);
  const auto commas = std::count(header.begin(), header.end(), ',');
  if (commas < 1) throw IoError("dataset header needs obs_* and control columns");
  const int dim = static_cast<int>(commas);

  const Table table = read_trace_csv(path, dataset_columns(dim));
  Dataset d;
  for (const auto& row : table.rows) {
    Eigen::VectorXd obs(dim);
    for (int k = 0; k < dim; ++k) {
      const double* v = std::get_if<double>(&row[static_cast<std::size_t>(k)]);
      if (!v) throw IoError("dataset has an empty observation field");
      obs[k] = *v;
    }
    const double* u = std::get_if<double>(&row.back());
    if (!u) throw IoError("dataset has an empty control field");
    d.observations.push_back(std::move(obs));
    d.controls.push_back(*u);
  }
  if (d.size() > 0) d.refresh_normalization();
  return d;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate >= 0)) throw ConfigError("train.learning_rate must be >= 0");
  if (!(length_scale > 0)) throw ConfigError("train.length_scale must be > 0");
  if (!(temperature > 0)) throw ConfigError("train.temperature must be > 0");
  if (!(initial_drop_probability >= 0 && initial_drop_probability < 1)) {
    throw ConfigError("train.initial_drop_probability must be in [0, 1)");
  }
  if (!(target_scale > 0 && std::isfinite(target_scale))) {
    throw ConfigError("train.target_scale must be finite and > 0");
  }
}

void scale_outputs(NetParams& params, double factor) {
  params.weights.back().row(0) *= factor;
  params.biases.back()[0] *= factor;
  params.biases.back()[1] += 2.0 * std::log(factor);
}

TrainResult train(const Dataset& dataset, const bayesnet::Architecture& arch,
                  const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  arch.validate();
  if (dataset.size() == 0) throw ConfigError("cannot train on an empty dataset");
  if (dataset.observation_dim() != arch.input_dim) {
    throw ShapeMismatch("dataset observation size does not match network input_dim");
  }

  Rng init_rng = make_rng(seed, "init");
  Rng shuffle_rng = make_rng(seed, "shuffle");
  Rng mask_rng = make_rng(seed, "masks");

  TrainResult result;
  result.params = bayesnet::initialize(arch, init_rng, config.initial_drop_probability);
  result.params.input_norm = dataset.normalization;
  if (result.params.input_norm.mean.size() != arch.input_dim) {
    result.params.input_norm = bayesnet::Standardizer::fit(dataset.observation_matrix());
  }

  if (config.epochs == 0) return result;

  const Eigen::MatrixXd inputs = dataset.observation_matrix();
  const Eigen::VectorXd targets = dataset.control_vector() / config.target_scale;
  const int n = static_cast<int>(dataset.size());

  bayesnet::ObjectiveConfig objective;
  objective.dataset_size = n;
  objective.length_scale = config.length_scale;
  objective.temperature = config.temperature;
  bayesnet::AdamState adam(bayesnet::parameter_count(arch),
                           {config.learning_rate, 0.9, 0.999, 1e-8});

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Eigen::MatrixXd batch_x;
  Eigen::VectorXd batch_y;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int count = std::min(config.batch_size, n - start);
      batch_x.resize(arch.input_dim, count);
      batch_y.resize(count);
      for (int k = 0; k < count; ++k) {
        const int idx = order[static_cast<std::size_t>(start + k)];
        batch_x.col(k) = inputs.col(idx);
        batch_y[k] = targets[idx];
      }
      total += bayesnet::train_step(result.params, batch_x, batch_y, adam, mask_rng,
                                    objective);
      ++batches;
    }
    result.epoch_loss.push_back(total / batches);
  }
  scale_outputs(result.params, config.target_scale);
  return result;
}

LearnerController::LearnerController(const NetParams& params,
                                     dynamics::ObservationEncoding encoding,
                                     int samples, Rng rng)
    : params_(params), encoding_(encoding), samples_(samples), rng_(rng) {
  if (dynamics::observation_size(encoding) != params.arch.input_dim) {
    throw ShapeMismatch("observation encoding does not match network input_dim");
  }
}

bayesnet::PredictiveOutput LearnerController::predict(const Eigen::VectorXd& observation) {
  last_ = bayesnet::mc_predict(params_, observation, samples_, rng_);
  return last_;
}

double LearnerController::act(const CartPoleState& state) {
  return predict(dynamics::observe(state, encoding_)).mean;
}

EvalResult evaluate_controller(const ControllerFactory& make_controller,
                               const EnvConfig& env, int episodes, int horizon,
                               std::uint64_t seed, int threads) {
  if (episodes < 1) throw ConfigError("evaluation needs episodes >= 1");
  if (horizon < 1) throw ConfigError("evaluation needs horizon >= 1");
  EvalResult result;
  result.episodes.resize(static_cast<std::size_t>(episodes));
  parallel_for(episodes, threads, [&](int e) {
    Rng rng = make_rng(seed, "eval-start", {static_cast<std::uint64_t>(e)});
    EpisodeLog& log = result.episodes[static_cast<std::size_t>(e)];
    log.episode = e;
    log.start = dynamics::sample_hanging_start(rng);
    std::unique_ptr<Controller> controller = make_controller(e);
    CartPoleState s = log.start;
    for (int t = 0; t < horizon; ++t) {
      s = dynamics::step(s, controller->act(s), env.plant);
      if (log.first_success_step < 0 && dynamics::is_success(s)) log.first_success_step = t + 1;
    }
    log.final_state = s;
    log.success = dynamics::is_success(s);
  });
  const auto wins = std::count_if(result.episodes.begin(), result.episodes.end(),
                                  [](const EpisodeLog& l) { return l.success; });
  result.success_rate = static_cast<double>(wins) / episodes;
  return result;
}

EvalResult evaluate_policy(const NetParams& params, const EnvConfig& env,
                           int episodes, int horizon, int mc_samples,
                           std::uint64_t seed, int threads) {
  return evaluate_controller(
      [&](int e) -> std::unique_ptr<Controller> {
        return std::make_unique<LearnerController>(
            params, env.encoding, mc_samples,
            make_rng(seed, "eval-mc", {static_cast<std::uint64_t>(e)}));
      },
      env, episodes, horizon, seed, threads);
}

Table training_curve_table(const TrainResult& result) {
  Table t;
  t.columns = {{"epoch", ColumnType::kInteger}, {"loss", ColumnType::kReal}};
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    t.add_row({static_cast<std::int64_t>(e), result.epoch_loss[e]});
  }
  return t;
}

Table episode_table(const EvalResult& result) {
  Table t;
  t.columns = {{"episode", ColumnType::kInteger},   {"success", ColumnType::kInteger},
               {"start_x", ColumnType::kReal},      {"start_x_dot", ColumnType::kReal},
               {"start_theta", ColumnType::kReal},  {"start_theta_dot", ColumnType::kReal},
               {"final_x", ColumnType::kReal},      {"final_x_dot", ColumnType::kReal},
               {"final_theta", ColumnType::kReal},  {"final_theta_dot", ColumnType::kReal},
               {"first_success_step", ColumnType::kInteger}};
  for (const auto& e : result.episodes) {
    Cell first = std::monostate{};
    if (e.first_success_step >= 0) first = static_cast<std::int64_t>(e.first_success_step);
    t.add_row({static_cast<std::int64_t>(e.episode), static_cast<std::int64_t>(e.success),
               e.start.x, e.start.x_dot, e.start.theta, e.start.theta_dot,
               e.final_state.x, e.final_state.x_dot, e.final_state.theta,
               e.final_state.theta_dot, first});
  }
  return t;
}

}  // namespace safempc::imitation
