#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "wordspot/geometry.hpp"
#include "wordspot/image.hpp"
#include "wordspot/losses.hpp"
#include "wordspot/text_embeddings.hpp"

namespace wordspot {

/// Rows are samples, columns are features.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kPatchWidth = 20;
inline constexpr int kPatchHeight = 8;

/// Region descriptor input: the box resampled to 8 x 20, scaled to [0, 1],
/// mean-centred, flattened row-major.
std::vector<double> extract_features(const GrayImage& img, const Box& box);

struct EmbedNetConfig {
  int input_dim = kPatchWidth * kPatchHeight;
  std::vector<int> hidden_dims{256, 256};
  int out_dim = 108;
  std::uint64_t seed = 0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  /// Descriptor is normalize(sigmoid(z)) instead of normalize(z); set for
  /// the BCE loss, which treats z as per-attribute logits.
  bool sigmoid_output = false;

  void validate() const;
  nlohmann::json to_json() const;
  static EmbedNetConfig from_json(const nlohmann::json& j);
};

enum class NetMode { train, eval };

enum class EmbeddingLoss { cosine, cosine_embedding, bce };

std::string_view to_string(EmbeddingLoss loss);
EmbeddingLoss embedding_loss_from_string(std::string_view name);

struct NetOutput {
  Matrix embeddings;    // unit-norm rows
  Vector score_logits;  // wordness logits
};

/// Per hidden layer values kept from a forward pass.
struct LayerTrace {
  Matrix input;
  Matrix pre_norm;    // affine output
  Matrix normalized;  // batch-norm output before scale and shift
  Vector mean;
  Vector var;         // biased batch variance (train) or running variance (eval)
  Matrix activation;  // tanh output
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  Matrix logits;  // output layer pre-activation
  Matrix raw;     // logits, or sigmoid(logits) for sigmoid_output
  Vector norms;   // row norms of raw
  NetOutput out;
};

struct BatchTargets {
  Matrix embedding;           // one target row per sample; read only for words
  std::vector<char> is_word;  // wordness label per sample
  /// For the cosine embedding loss: index of a sample whose target is a
  /// non-matching word, or -1.
  std::vector<int> mismatch;
};

struct LossSpec {
  EmbeddingLoss loss = EmbeddingLoss::cosine;
  LossWeights weights;
  MarginConfig margin;
};

struct StepLosses {
  double score = 0.0;
  double emb = 0.0;
  double total = 0.0;  // w_head * score + w_emb * emb
};

/// Fully-connected embedding network: hidden layers of affine + batch-norm +
/// tanh, a linear output layer followed by L2 normalisation, and an affine
/// wordness head on the last hidden activation.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(const EmbedNetConfig& cfg);

  const EmbedNetConfig& config() const noexcept { return cfg_; }
  NetMode mode() const noexcept { return mode_; }
  void set_mode(NetMode mode) noexcept { mode_ = mode; }

  /// In train mode, normalises with batch statistics and folds them into the
  /// running statistics; in eval mode uses the running statistics.
  NetOutput forward(const Matrix& batch);
  /// Eval-mode forward; never touches state.
  NetOutput infer(const Matrix& batch) const;
  ForwardTrace trace(const Matrix& batch, NetMode mode) const;

  /// Train-mode losses and their gradients for every trainable parameter,
  /// without updating running statistics.
  StepLosses loss_and_gradients(const Matrix& batch, const BatchTargets& targets,
                                const LossSpec& spec, std::vector<Matrix>* grads) const;

  /// Trainable tensors in declaration order: per hidden layer weight, bias,
  /// bn scale, bn shift; then output weight, bias; then score weight, bias.
  std::vector<Matrix>& parameters() noexcept { return params_; }
  const std::vector<Matrix>& parameters() const noexcept { return params_; }
  /// Running mean and variance per hidden layer.
  std::vector<Matrix>& buffers() noexcept { return buffers_; }
  const std::vector<Matrix>& buffers() const noexcept { return buffers_; }

  void update_running_stats(const ForwardTrace& trace);
  /// Rounds every stored value to float precision so a checkpoint written
  /// as 32-bit floats reloads to an identical network.
  void round_to_float();

 private:
  const Matrix& weight(std::size_t layer) const { return params_[4 * layer]; }
  const Matrix& bias(std::size_t layer) const { return params_[4 * layer + 1]; }
  const Matrix& bn_scale(std::size_t layer) const { return params_[4 * layer + 2]; }
  const Matrix& bn_shift(std::size_t layer) const { return params_[4 * layer + 3]; }
  std::size_t out_index() const { return 4 * cfg_.hidden_dims.size(); }

  EmbedNetConfig cfg_;
  NetMode mode_ = NetMode::eval;
  std::vector<Matrix> params_;
  std::vector<Matrix> buffers_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long decay_every = 10000;
  double decay_factor = 0.1;
};

/// ADAM with a step-decay schedule: the rate is multiplied by decay_factor
/// after every decay_every steps.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads);
  double current_lr() const;
  long steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  long steps_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

struct RegionDescription {
  std::vector<float> descriptor;  // unit norm
  double wordness = 0.0;          // sigmoid of the score logit
};

/// A trained region embedder together with the text embedding it was fitted
/// to, so queries and regions land in the same space.
struct TrainedModel {
  static constexpr std::uint32_t kFormatVersion = 1;

  DenseNet net;
  TextEmbedder text;
  EmbeddingLoss loss = EmbeddingLoss::cosine;
  std::string version = "wordspot-model-1";

  std::vector<RegionDescription> describe(const GrayImage& img, std::span<const Box> boxes) const;
  nlohmann::json config_json() const;
};

std::vector<std::uint8_t> serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace wordspot
