#include "safempc/bayesnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "safempc/errors.hpp"
#include "safempc/table.hpp"

namespace safempc::bayesnet {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

void activate(const Activation a, MatrixXd& m) {
  if (a == Activation::kRelu) {
    m = m.cwiseMax(0.0);
  } else {
    m = m.array().tanh().matrix();
  }
}

// Derivative of the activation expressed through pre- and post-activation.
MatrixXd activation_slope(const Activation a, const MatrixXd& pre,
                          const MatrixXd& post) {
  if (a == Activation::kRelu) {
    return (pre.array() > 0.0).cast<double>().matrix();
  }
  return (1.0 - post.array().square()).matrix();
}

void check_masks(const Architecture& arch, const std::vector<MatrixXd>& masks,
                 Eigen::Index batch) {
  if (static_cast<int>(masks.size()) != arch.num_layers()) {
    throw ShapeMismatch("expected one mask per weight layer");
  }
  for (int i = 0; i < arch.num_layers(); ++i) {
    if (masks[i].rows() != arch.fan_in(i) || masks[i].cols() != batch) {
      throw ShapeMismatch("mask " + std::to_string(i) + " has wrong shape");
    }
  }
}

// Forward activations retained for the backward pass.
struct Tape {
  std::vector<MatrixXd> inputs;  // H_i: input of layer i (unmasked)
  std::vector<MatrixXd> pre;     // A_i for hidden layers
  MatrixXd output;               // 2 x batch
};

void run_forward(const NetParams& params, const MatrixXd& normalized,
                 const std::vector<MatrixXd>& masks, Tape& tape) {
  const int layers = params.arch.num_layers();
  tape.inputs.resize(layers);
  tape.pre.resize(layers - 1);
  tape.inputs[0] = normalized;
  for (int i = 0; i < layers; ++i) {
    MatrixXd z = params.weights[i] * tape.inputs[i].cwiseProduct(masks[i]);
    z.colwise() += params.biases[i];
    if (i + 1 < layers) {
      tape.pre[i] = z;
      activate(params.arch.activation, z);
      tape.inputs[i + 1] = std::move(z);
    } else {
      tape.output = std::move(z);
    }
  }
}

double mean_loss(const MatrixXd& output, const VectorXd& targets) {
  const auto mu = output.row(0).transpose().array();
  const auto s = output.row(1).transpose().array();
  const auto r2 = (targets.array() - mu).square();
  return ((-s).exp() * r2 + s).sum() / static_cast<double>(targets.size());
}

void check_batch(const NetParams& params, const MatrixXd& inputs,
                 const VectorXd& targets, const ConcreteNoise& noise) {
  if (inputs.rows() != params.arch.input_dim) {
    throw ShapeMismatch("batch input dimension does not match the network");
  }
  if (inputs.cols() != targets.size() || targets.size() == 0) {
    throw ShapeMismatch("batch inputs and targets disagree or are empty");
  }
  check_masks(params.arch, noise, inputs.cols());
}

}  // namespace

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'");
}

int Architecture::fan_in(int layer) const {
  return layer == 0 ? input_dim : hidden[layer - 1];
}

int Architecture::fan_out(int layer) const {
  return layer + 1 == num_layers() ? kOutputDim : hidden[layer];
}

void Architecture::validate() const {
  if (input_dim < 1) throw ConfigError("network input_dim must be >= 1");
  if (hidden.empty()) throw ConfigError("network needs at least one hidden layer");
  for (int w : hidden) {
    if (w < 1) throw ConfigError("hidden widths must be >= 1");
  }
}

Standardizer Standardizer::identity(int dim) {
  return {VectorXd::Zero(dim), VectorXd::Ones(dim)};
}

Standardizer Standardizer::fit(const MatrixXd& samples) {
  if (samples.cols() == 0) throw ConfigError("cannot standardize an empty set");
  Standardizer s;
  s.mean = samples.rowwise().mean();
  const MatrixXd centered = samples.colwise() - s.mean;
  s.stddev = (centered.array().square().rowwise().sum() /
              static_cast<double>(samples.cols()))
                 .sqrt()
                 .matrix();
  for (Eigen::Index i = 0; i < s.stddev.size(); ++i) {
    if (!(s.stddev[i] > 0)) s.stddev[i] = 1.0;
  }
  return s;
}

VectorXd Standardizer::normalize(const VectorXd& x) const {
  return ((x - mean).array() / stddev.array()).matrix();
}

VectorXd Standardizer::denormalize(const VectorXd& z) const {
  return (z.array() * stddev.array()).matrix() + mean;
}

MatrixXd Standardizer::normalize_columns(const MatrixXd& x) const {
  return ((x.colwise() - mean).array().colwise() / stddev.array()).matrix();
}

NetParams NetParams::zeros(const Architecture& arch, double drop_probability) {
  arch.validate();
  NetParams p;
  p.arch = arch;
  p.input_norm = Standardizer::identity(arch.input_dim);
  for (int i = 0; i < arch.num_layers(); ++i) {
    p.weights.push_back(MatrixXd::Zero(arch.fan_out(i), arch.fan_in(i)));
    p.biases.push_back(VectorXd::Zero(arch.fan_out(i)));
  }
  const double logit = drop_probability <= 0.0
                           ? -std::numeric_limits<double>::infinity()
                           : std::log(drop_probability) - std::log1p(-drop_probability);
  p.dropout_logits = VectorXd::Constant(arch.num_layers(), logit);
  return p;
}

double NetParams::drop_probability(int layer) const {
  return sigmoid(dropout_logits[layer]);
}

void NetParams::disable_dropout() {
  dropout_logits.setConstant(-std::numeric_limits<double>::infinity());
}

void NetParams::validate() const {
  arch.validate();
  const int layers = arch.num_layers();
  if (static_cast<int>(weights.size()) != layers ||
      static_cast<int>(biases.size()) != layers ||
      dropout_logits.size() != layers) {
    throw ShapeMismatch("parameter layer count does not match architecture");
  }
  for (int i = 0; i < layers; ++i) {
    if (weights[i].rows() != arch.fan_out(i) || weights[i].cols() != arch.fan_in(i) ||
        biases[i].size() != arch.fan_out(i)) {
      throw ShapeMismatch("layer " + std::to_string(i) + " has wrong shape");
    }
  }
  if (input_norm.mean.size() != arch.input_dim ||
      input_norm.stddev.size() != arch.input_dim) {
    throw ShapeMismatch("standardizer dimension does not match input_dim");
  }
}

NetParams initialize(const Architecture& arch, Rng& rng, double drop_probability) {
  NetParams p = NetParams::zeros(arch, drop_probability);
  for (int i = 0; i < arch.num_layers(); ++i) {
    const double limit = std::sqrt(6.0 / (arch.fan_in(i) + arch.fan_out(i)));
    MatrixXd& w = p.weights[i];
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = uniform(rng, -limit, limit);
    }
  }
  return p;
}

int parameter_count(const Architecture& arch) {
  int n = 0;
  for (int i = 0; i < arch.num_layers(); ++i) {
    n += arch.fan_out(i) * (arch.fan_in(i) + 1);
  }
  return n + arch.num_layers();
}

VectorXd pack(const NetParams& params) {
  VectorXd flat(parameter_count(params.arch));
  Eigen::Index k = 0;
  for (int i = 0; i < params.arch.num_layers(); ++i) {
    const auto& w = params.weights[i];
    flat.segment(k, w.size()) = w.reshaped();
    k += w.size();
    flat.segment(k, params.biases[i].size()) = params.biases[i];
    k += params.biases[i].size();
  }
  flat.tail(params.dropout_logits.size()) = params.dropout_logits;
  return flat;
}

void unpack(const VectorXd& flat, NetParams& params) {
  if (flat.size() != parameter_count(params.arch)) {
    throw ShapeMismatch("flat parameter vector has wrong length");
  }
  Eigen::Index k = 0;
  for (int i = 0; i < params.arch.num_layers(); ++i) {
    auto& w = params.weights[i];
    w.reshaped() = flat.segment(k, w.size());
    k += w.size();
    params.biases[i] = flat.segment(k, params.biases[i].size());
    k += params.biases[i].size();
  }
  params.dropout_logits = flat.tail(params.dropout_logits.size());
}

Masks ones_masks(const Architecture& arch) {
  Masks m;
  for (int i = 0; i < arch.num_layers(); ++i) m.push_back(VectorXd::Ones(arch.fan_in(i)));
  return m;
}

Prediction forward(const NetParams& params, const VectorXd& input,
                   const Masks& masks) {
  if (input.size() != params.arch.input_dim) {
    throw ShapeMismatch("input dimension does not match the network");
  }
  std::vector<MatrixXd> columns;
  columns.reserve(masks.size());
  for (const VectorXd& m : masks) columns.emplace_back(m);
  const BatchOutput out =
      forward_batch(params, params.input_norm.normalize(input), columns);
  return {out.mean[0], out.log_variance[0]};
}

BatchOutput forward_batch(const NetParams& params, const MatrixXd& normalized,
                          const std::vector<MatrixXd>& masks) {
  if (normalized.rows() != params.arch.input_dim) {
    throw ShapeMismatch("batch input dimension does not match the network");
  }
  check_masks(params.arch, masks, normalized.cols());
  Tape tape;
  run_forward(params, normalized, masks, tape);
  return {tape.output.row(0), tape.output.row(1)};
}

double heteroscedastic_loss(std::span<const Prediction> predictions,
                            std::span<const double> targets) {
  if (predictions.size() != targets.size() || targets.empty()) {
    throw ShapeMismatch("heteroscedastic loss needs equal, non-empty inputs");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double r = targets[i] - predictions[i].mean;
    const double s = predictions[i].log_variance;
    loss += std::exp(-s) * r * r + s;
  }
  return loss;
}

double concrete_regularizer(const NetParams& params, double dataset_size,
                            double length_scale) {
  if (!(dataset_size >= 1)) throw ConfigError("dataset size must be >= 1");
  if (!(length_scale > 0)) throw ConfigError("length scale must be > 0");
  const double l2 = length_scale * length_scale;
  double reg = 0.0;
  for (int i = 0; i < params.arch.num_layers(); ++i) {
    const double rho = params.dropout_logits[i];
    const double p = sigmoid(rho);
    const double norm2 =
        params.weights[i].squaredNorm() + params.biases[i].squaredNorm();
    // 1 / (1 - p) = 1 + exp(rho)
    reg += l2 * norm2 * (1.0 + std::exp(rho)) / dataset_size;
    if (p > 0.0 && p < 1.0) {
      const double log_p = -softplus(-rho);
      const double log_q = -softplus(rho);
      reg += params.arch.fan_in(i) / dataset_size * (p * log_p + (1.0 - p) * log_q);
    }
  }
  return reg;
}

ConcreteNoise sample_concrete_noise(const Architecture& arch, int batch, Rng& rng) {
  ConcreteNoise noise;
  for (int i = 0; i < arch.num_layers(); ++i) {
    MatrixXd u(arch.fan_in(i), batch);
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
      for (Eigen::Index r = 0; r < u.rows(); ++r) u(r, c) = uniform_open(rng);
    }
    noise.push_back(std::move(u));
  }
  return noise;
}

std::vector<MatrixXd> relaxed_masks(const NetParams& params,
                                    const ConcreteNoise& noise,
                                    double temperature) {
  std::vector<MatrixXd> masks;
  masks.reserve(noise.size());
  for (std::size_t i = 0; i < noise.size(); ++i) {
    const double rho = params.dropout_logits[static_cast<Eigen::Index>(i)];
    masks.push_back(noise[i].unaryExpr([&](double u) {
      const double logit_u = std::log(u) - std::log1p(-u);
      return 1.0 - sigmoid((rho + logit_u) / temperature);
    }));
  }
  return masks;
}

double objective(const NetParams& params, const MatrixXd& inputs,
                 const VectorXd& targets, const ConcreteNoise& noise,
                 const ObjectiveConfig& config) {
  check_batch(params, inputs, targets, noise);
  Tape tape;
  run_forward(params, params.input_norm.normalize_columns(inputs),
              relaxed_masks(params, noise, config.temperature), tape);
  return mean_loss(tape.output, targets) +
         concrete_regularizer(params, config.dataset_size, config.length_scale);
}

double objective_and_gradient(const NetParams& params, const MatrixXd& inputs,
                              const VectorXd& targets, const ConcreteNoise& noise,
                              const ObjectiveConfig& config, VectorXd& gradient) {
  check_batch(params, inputs, targets, noise);
  const Architecture& arch = params.arch;
  const int layers = arch.num_layers();
  const double batch = static_cast<double>(targets.size());
  const double n = config.dataset_size;
  const double l2 = config.length_scale * config.length_scale;
  const double tau = config.temperature;

  const std::vector<MatrixXd> masks = relaxed_masks(params, noise, tau);
  Tape tape;
  run_forward(params, params.input_norm.normalize_columns(inputs), masks, tape);
  const double value = mean_loss(tape.output, targets) +
                       concrete_regularizer(params, n, config.length_scale);

  // dO/d(output) for the mean and log-variance heads.
  MatrixXd g(2, tape.output.cols());
  {
    const auto mu = tape.output.row(0).array();
    const auto s = tape.output.row(1).array();
    const auto r = targets.transpose().array() - mu;
    const auto inv_var = (-s).exp();
    g.row(0) = (-2.0 * inv_var * r / batch).matrix();
    g.row(1) = ((1.0 - inv_var * r.square()) / batch).matrix();
  }

  gradient.resize(parameter_count(arch));
  std::vector<Eigen::Index> offsets(layers);
  {
    Eigen::Index k = 0;
    for (int i = 0; i < layers; ++i) {
      offsets[i] = k;
      k += arch.fan_out(i) * (arch.fan_in(i) + 1);
    }
  }
  const Eigen::Index rho_offset = gradient.size() - layers;

  for (int i = layers - 1; i >= 0; --i) {
    const MatrixXd& h = tape.inputs[i];
    const MatrixXd& z = masks[i];
    const double rho = params.dropout_logits[i];
    const double inv_keep = 1.0 + std::exp(rho);  // 1 / (1 - p)

    const MatrixXd masked = h.cwiseProduct(z);
    MatrixXd dw = g * masked.transpose() + (2.0 * l2 * inv_keep / n) * params.weights[i];
    VectorXd db = g.rowwise().sum() + (2.0 * l2 * inv_keep / n) * params.biases[i];
    const MatrixXd d_masked = params.weights[i].transpose() * g;

    // keep = 1 - d with d = sigmoid((rho + logit u) / tau):
    // d keep / d rho = -d (1 - d) / tau = -keep (1 - keep) / tau.
    double d_rho = -(d_masked.cwiseProduct(h).cwiseProduct(
                         z.cwiseProduct((1.0 - z.array()).matrix())))
                        .sum() /
                   tau;
    if (std::isfinite(rho)) {
      const double p = sigmoid(rho);
      const double norm2 = params.weights[i].squaredNorm() + params.biases[i].squaredNorm();
      d_rho += l2 * norm2 * std::exp(rho) / n + arch.fan_in(i) / n * p * (1.0 - p) * rho;
    }

    gradient.segment(offsets[i], dw.size()) = dw.reshaped();
    gradient.segment(offsets[i] + dw.size(), db.size()) = db;
    gradient[rho_offset + i] = d_rho;

    if (i > 0) {
      const MatrixXd dh = d_masked.cwiseProduct(z);
      g = dh.cwiseProduct(activation_slope(arch.activation, tape.pre[i - 1], h));
    }
  }
  return value;
}

AdamState::AdamState(int parameter_count, AdamConfig config)
    : config_(config),
      m_(VectorXd::Zero(parameter_count)),
      v_(VectorXd::Zero(parameter_count)) {}

void AdamState::apply(VectorXd& theta, const VectorXd& gradient) {
  if (theta.size() != m_.size() || gradient.size() != m_.size()) {
    throw ShapeMismatch("Adam state size does not match parameters");
  }
  ++steps_;
  beta1_power_ *= config_.beta1;
  beta2_power_ *= config_.beta2;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * gradient;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - beta1_power_;
  const double c2 = 1.0 - beta2_power_;
  theta.array() -= config_.learning_rate * (m_.array() / c1) /
                   ((v_.array() / c2).sqrt() + config_.epsilon);
}

double train_step(NetParams& params, const MatrixXd& inputs,
                  const VectorXd& targets, AdamState& optimizer, Rng& rng,
                  const ObjectiveConfig& config) {
  const ConcreteNoise noise =
      sample_concrete_noise(params.arch, static_cast<int>(inputs.cols()), rng);
  VectorXd grad;
  const double loss =
      objective_and_gradient(params, inputs, targets, noise, config, grad);
  if (!std::isfinite(loss) || !grad.allFinite()) {
    throw NonFiniteLoss("non-finite loss or gradient during training");
  }
  VectorXd theta = pack(params);
  optimizer.apply(theta, grad);
  unpack(theta, params);
  return loss;
}

std::vector<MatrixXd> sample_bernoulli_masks(const NetParams& params,
                                             int samples, Rng& rng) {
  std::vector<MatrixXd> masks;
  for (int i = 0; i < params.arch.num_layers(); ++i) {
    const double p = params.drop_probability(i);
    MatrixXd z(params.arch.fan_in(i), samples);
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        z(r, c) = uniform_open(rng) < p ? 0.0 : 1.0;
      }
    }
    masks.push_back(std::move(z));
  }
  return masks;
}

PredictiveOutput mc_predict(const NetParams& params, const VectorXd& input,
                            int samples, Rng& rng) {
  if (samples < 2) throw ConfigError("mc_predict needs at least 2 samples");
  if (input.size() != params.arch.input_dim) {
    throw ShapeMismatch("input dimension does not match the network");
  }
  const std::vector<MatrixXd> masks = sample_bernoulli_masks(params, samples, rng);
  const bool identical = std::all_of(masks.begin(), masks.end(), [](const MatrixXd& m) {
    return (m.colwise() - m.col(0)).isZero(0.0);
  });
  if (identical) {
    Masks single;
    for (const MatrixXd& m : masks) single.emplace_back(m.col(0));
    const Prediction p = forward(params, input, single);
    PredictiveOutput pred;
    pred.mean = p.mean;
    pred.aleatoric = std::exp(p.log_variance);
    pred.epistemic = 0.0;
    pred.total = pred.aleatoric;
    return pred;
  }
  const MatrixXd x =
      params.input_norm.normalize(input).replicate(1, samples);
  const BatchOutput out = forward_batch(params, x, masks);

  double mean = 0.0;
  double m2 = 0.0;
  double aleatoric = 0.0;
  for (int k = 0; k < samples; ++k) {
    const double mu = out.mean[k];
    const double delta = mu - mean;
    mean += delta / (k + 1);
    m2 += delta * (mu - mean);
    aleatoric += std::exp(out.log_variance[k]);
  }
  PredictiveOutput pred;
  pred.mean = mean;
  pred.epistemic = std::max(0.0, m2 / samples);
  pred.aleatoric = aleatoric / samples;  // stays +inf on overflow
  pred.total = pred.aleatoric + pred.epistemic;
  return pred;
}

// --- checkpoint -----------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "safempc-bayesnet";
constexpr int kCheckpointVersion = 1;

void write_reals(std::ostream& os, const double* data, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) {
    os << (i ? " " : "") << format_double(data[i]);
  }
  os << '\n';
}

class Reader {
 public:
  explicit Reader(const std::string& text) : in_(text) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw IoError("checkpoint truncated");
    return w;
  }
  void expect(const std::string& keyword) {
    const std::string w = word();
    if (w != keyword) {
      throw IoError("checkpoint: expected '" + keyword + "', got '" + w + "'");
    }
  }
  long integer() {
    const std::string w = word();
    try {
      std::size_t used = 0;
      const long v = std::stol(w, &used);
      if (used != w.size()) throw std::invalid_argument(w);
      return v;
    } catch (const std::exception&) {
      throw IoError("checkpoint: bad integer '" + w + "'");
    }
  }
  double real() {
    const std::string w = word();
    const auto v = parse_double(w);
    if (!v) throw IoError("checkpoint: bad real '" + w + "'");
    return *v;
  }
  void reals(double* data, Eigen::Index count) {
    for (Eigen::Index i = 0; i < count; ++i) data[i] = real();
  }
  bool at_end() {
    std::string w;
    return !(in_ >> w);
  }

 private:
  std::istringstream in_;
};

}  // namespace

std::string checkpoint_to_string(const NetParams& params) {
  params.validate();
  std::ostringstream os;
  const Architecture& a = params.arch;
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "activation " << to_string(a.activation) << '\n';
  os << "input_dim " << a.input_dim << '\n';
  os << "hidden " << a.hidden.size();
  for (int w : a.hidden) os << ' ' << w;
  os << '\n';
  os << "input_mean ";
  write_reals(os, params.input_norm.mean.data(), a.input_dim);
  os << "input_std ";
  write_reals(os, params.input_norm.stddev.data(), a.input_dim);
  for (int i = 0; i < a.num_layers(); ++i) {
    const MatrixXd& w = params.weights[i];
    os << "layer " << i << '\n';
    os << "dropout_logit " << format_double(params.dropout_logits[i]) << '\n';
    os << "weights " << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const Eigen::RowVectorXd row = w.row(r);
      write_reals(os, row.data(), row.size());
    }
    os << "bias " << params.biases[i].size() << '\n';
    write_reals(os, params.biases[i].data(), params.biases[i].size());
  }
  os << "end\n";
  return os.str();
}

NetParams checkpoint_from_string(const std::string& text) {
  Reader in(text);
  in.expect(kCheckpointMagic);
  if (in.integer() != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  Architecture a;
  in.expect("activation");
  try {
    a.activation = activation_from_string(in.word());
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  in.expect("input_dim");
  a.input_dim = static_cast<int>(in.integer());
  in.expect("hidden");
  const long n_hidden = in.integer();
  if (n_hidden < 1 || n_hidden > 1024) throw IoError("checkpoint: bad hidden count");
  a.hidden.resize(static_cast<std::size_t>(n_hidden));
  for (int& w : a.hidden) w = static_cast<int>(in.integer());
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }

  NetParams p = NetParams::zeros(a);
  in.expect("input_mean");
  in.reals(p.input_norm.mean.data(), a.input_dim);
  in.expect("input_std");
  in.reals(p.input_norm.stddev.data(), a.input_dim);
  for (int i = 0; i < a.num_layers(); ++i) {
    in.expect("layer");
    if (in.integer() != i) throw IoError("checkpoint: layers out of order");
    in.expect("dropout_logit");
    p.dropout_logits[i] = in.real();
    in.expect("weights");
    const long rows = in.integer();
    const long cols = in.integer();
    if (rows != a.fan_out(i) || cols != a.fan_in(i)) {
      throw IoError("checkpoint: weight shape does not match architecture");
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w(rows, cols);
    in.reals(w.data(), w.size());
    p.weights[i] = w;
    in.expect("bias");
    if (in.integer() != a.fan_out(i)) throw IoError("checkpoint: bias length mismatch");
    in.reals(p.biases[i].data(), a.fan_out(i));
  }
  in.expect("end");
  if (!in.at_end()) throw IoError("checkpoint: trailing data after 'end'");
  return p;
}

void save_checkpoint(const NetParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(params);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

NetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace safempc::bayesnet
