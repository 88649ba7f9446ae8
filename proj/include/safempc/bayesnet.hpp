#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "safempc/random.hpp"

namespace safempc::bayesnet {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { kRelu, kTanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// input_dim -> hidden... -> 2, where the final layer is split into a mean
/// head (row 0) and a log-variance head (row 1).
struct Architecture {
  int input_dim = 5;
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::kRelu;

  static constexpr int kOutputDim = 2;

  int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
  int fan_in(int layer) const;
  int fan_out(int layer) const;
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

/// Per-dimension affine standardization of network inputs.
struct Standardizer {
  VectorXd mean;
  VectorXd stddev;

  static Standardizer identity(int dim);
  /// Population statistics of `samples` (one sample per column); dimensions
  /// with zero spread get stddev 1.
  static Standardizer fit(const MatrixXd& samples);

  VectorXd normalize(const VectorXd& x) const;
  VectorXd denormalize(const VectorXd& z) const;
  MatrixXd normalize_columns(const MatrixXd& x) const;
};

/// Weights, biases and one dropout logit per weight layer. The drop
/// probability of layer i is sigmoid(dropout_logits[i]); -inf disables it.
struct NetParams {
  Architecture arch;
  Standardizer input_norm;
  std::vector<MatrixXd> weights;  // fan_out x fan_in
  std::vector<VectorXd> biases;
  VectorXd dropout_logits;

  /// All-zero weights and biases, identity standardization, drop
  /// probability `drop_probability` in every layer.
  static NetParams zeros(const Architecture& arch, double drop_probability = 0.1);

  double drop_probability(int layer) const;
  void disable_dropout();
  void validate() const;
};

/// Glorot-uniform weights, zero biases.
NetParams initialize(const Architecture& arch, Rng& rng,
                     double drop_probability = 0.1);

// Flat parameter vector: for each layer W (column-major) then b, followed by
// every dropout logit.
int parameter_count(const Architecture& arch);
VectorXd pack(const NetParams& params);
void unpack(const VectorXd& flat, NetParams& params);

/// Per-layer keep masks, one entry per input of the layer.
using Masks = std::vector<VectorXd>;

Masks ones_masks(const Architecture& arch);

struct Prediction {
  double mean = 0.0;
  double log_variance = 0.0;
};

/// Single masked forward pass on a raw (unstandardized) input. Throws
/// ShapeMismatch when the input or masks disagree with the architecture.
Prediction forward(const NetParams& params, const VectorXd& input,
                   const Masks& masks);

struct BatchOutput {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd log_variance;
};

/// Batched forward pass on standardized inputs (one column per sample) with
/// per-sample masks (layer i mask is fan_in(i) x batch).
BatchOutput forward_batch(const NetParams& params, const MatrixXd& normalized,
                          const std::vector<MatrixXd>& masks);

/// sum_i exp(-s_i) (y_i - mu_i)^2 + s_i with s = log sigma^2.
double heteroscedastic_loss(std::span<const Prediction> predictions,
                            std::span<const double> targets);

/// Concrete-dropout prior term
///   sum_i l^2 / (N (1 - p_i)) (|W_i|^2 + |b_i|^2)
///         + K_i / N (p_i log p_i + (1 - p_i) log(1 - p_i)),
/// with K_i the fan-in of layer i.
double concrete_regularizer(const NetParams& params, double dataset_size,
                            double length_scale);

struct ObjectiveConfig {
  double dataset_size = 1.0;
  double length_scale = 1e-2;
  double temperature = 0.1;
};

/// Uniform draws behind one relaxed mask set, layer i is fan_in(i) x batch.
using ConcreteNoise = std::vector<MatrixXd>;

ConcreteNoise sample_concrete_noise(const Architecture& arch, int batch, Rng& rng);

/// keep = 1 - sigmoid((logit p + log u - log(1 - u)) / temperature).
std::vector<MatrixXd> relaxed_masks(const NetParams& params,
                                    const ConcreteNoise& noise,
                                    double temperature);

/// Training objective for one minibatch: the heteroscedastic loss averaged
/// over the batch plus the concrete regularizer. Inputs are raw.
double objective(const NetParams& params, const MatrixXd& inputs,
                 const VectorXd& targets, const ConcreteNoise& noise,
                 const ObjectiveConfig& config);

/// Same value as objective(); fills `gradient` (packed layout) by reverse-mode
/// differentiation through the relaxed masks.
double objective_and_gradient(const NetParams& params, const MatrixXd& inputs,
                              const VectorXd& targets, const ConcreteNoise& noise,
                              const ObjectiveConfig& config, VectorXd& gradient);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(int parameter_count, AdamConfig config);

  /// In-place bias-corrected Adam update of `theta`.
  void apply(VectorXd& theta, const VectorXd& gradient);
  const AdamConfig& config() const { return config_; }
  long steps() const { return steps_; }

 private:
  AdamConfig config_;
  VectorXd m_;
  VectorXd v_;
  long steps_ = 0;
  double beta1_power_ = 1.0;
  double beta2_power_ = 1.0;
};

/// Samples relaxed masks, differentiates objective(), applies Adam. Returns
/// the objective value before the update. Throws NonFiniteLoss.
double train_step(NetParams& params, const MatrixXd& inputs,
                  const VectorXd& targets, AdamState& optimizer, Rng& rng,
                  const ObjectiveConfig& config);

struct PredictiveOutput {
  double mean = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
  double total = 0.0;
};

/// Hard Bernoulli keep masks with the learned probabilities, one column per
/// sample.
std::vector<MatrixXd> sample_bernoulli_masks(const NetParams& params,
                                             int samples, Rng& rng);

/// Monte-Carlo dropout prediction from `samples` >= 2 stochastic passes.
PredictiveOutput mc_predict(const NetParams& params, const VectorXd& input,
                            int samples, Rng& rng);

// Plain-text checkpoint ("safempc-bayesnet 1"), every real printed with 17
// significant digits so a save/load round trip is bit-exact. Layout in
// docs/file_formats.md.
void save_checkpoint(const NetParams& params, const std::filesystem::path& path);
NetParams load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const NetParams& params);
NetParams checkpoint_from_string(const std::string& text);

}  // namespace safempc::bayesnet
