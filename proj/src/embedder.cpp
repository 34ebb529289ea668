#include "wordspot/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "binary_io.hpp"
#include "wordspot/errors.hpp"

namespace wordspot {

std::vector<double> extract_features(const GrayImage& img, const Box& box) {
  auto patch = bilinear_roi_resize(img, box, kPatchWidth, kPatchHeight);
  double mean = 0.0;
  for (double v : patch.values) mean += v;
  mean /= static_cast<double>(patch.values.size());
  for (double& v : patch.values) v -= mean;
  return std::move(patch.values);
}

void EmbedNetConfig::validate() const {
  if (input_dim <= 0 || out_dim <= 0) {
    throw Error(ErrorCode::InvalidConfig, "network dimensions must be positive");
  }
  for (int h : hidden_dims) {
    if (h <= 0) throw Error(ErrorCode::InvalidConfig, "hidden layer sizes must be positive");
  }
  if (!(bn_eps > 0.0) || !(bn_momentum >= 0.0 && bn_momentum <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "invalid batch-norm settings");
  }
}

nlohmann::json EmbedNetConfig::to_json() const {
  return {{"input_dim", input_dim},     {"hidden_dims", hidden_dims},
          {"out_dim", out_dim},         {"seed", seed},
          {"bn_eps", bn_eps},           {"bn_momentum", bn_momentum},
          {"sigmoid_output", sigmoid_output}};
}

EmbedNetConfig EmbedNetConfig::from_json(const nlohmann::json& j) {
  EmbedNetConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  c.out_dim = j.at("out_dim").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.bn_eps = j.at("bn_eps").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.sigmoid_output = j.at("sigmoid_output").get<bool>();
  c.validate();
  return c;
}

std::string_view to_string(EmbeddingLoss loss) {
  switch (loss) {
    case EmbeddingLoss::cosine: return "cosine";
    case EmbeddingLoss::cosine_embedding: return "cosemb";
    case EmbeddingLoss::bce: return "bce";
  }
  return "cosine";
}

EmbeddingLoss embedding_loss_from_string(std::string_view name) {
  if (name == "cosine") return EmbeddingLoss::cosine;
  if (name == "cosemb") return EmbeddingLoss::cosine_embedding;
  if (name == "bce") return EmbeddingLoss::bce;
  throw Error(ErrorCode::InvalidConfig, "unknown loss '" + std::string(name) + "'");
}

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  // Fill row-major so the draw order matches the serialized order.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

Matrix sigmoid_of(const Matrix& z) {
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace

DenseNet::DenseNet(const EmbedNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  int fan_in = cfg_.input_dim;
  for (int width : cfg_.hidden_dims) {
    params_.push_back(gaussian(rng, width, fan_in, std::sqrt(2.0 / fan_in)));
    params_.push_back(Matrix::Zero(width, 1));
    params_.push_back(Matrix::Ones(width, 1));
    params_.push_back(Matrix::Zero(width, 1));
    buffers_.push_back(Matrix::Zero(width, 1));
    buffers_.push_back(Matrix::Ones(width, 1));
    fan_in = width;
  }
  params_.push_back(gaussian(rng, cfg_.out_dim, fan_in, 0.01));
  params_.push_back(Matrix::Zero(cfg_.out_dim, 1));
  params_.push_back(gaussian(rng, 1, fan_in, 0.01));
  params_.push_back(Matrix::Zero(1, 1));
}

ForwardTrace DenseNet::trace(const Matrix& batch, NetMode mode) const {
  if (batch.cols() != cfg_.input_dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                    std::to_string(cfg_.input_dim));
  }
  ForwardTrace tr;
  Matrix x = batch;
  for (std::size_t l = 0; l < cfg_.hidden_dims.size(); ++l) {
    LayerTrace lt;
    lt.input = x;
    lt.pre_norm = x * weight(l).transpose();
    lt.pre_norm.rowwise() += bias(l).col(0).transpose();
    if (mode == NetMode::train) {
      lt.mean = lt.pre_norm.colwise().mean().transpose();
      lt.var = (lt.pre_norm.rowwise() - lt.mean.transpose())
                   .array()
                   .square()
                   .colwise()
                   .mean()
                   .transpose();
    } else {
      lt.mean = buffers_[2 * l].col(0);
      lt.var = buffers_[2 * l + 1].col(0);
    }
    const Vector inv_std = (lt.var.array() + cfg_.bn_eps).rsqrt().matrix();
    lt.normalized = ((lt.pre_norm.rowwise() - lt.mean.transpose()).array().rowwise() *
                     inv_std.transpose().array())
                        .matrix();
    Matrix y = (lt.normalized.array().rowwise() * bn_scale(l).col(0).transpose().array()).matrix();
    y.rowwise() += bn_shift(l).col(0).transpose();
    lt.activation = y.array().tanh().matrix();
    x = lt.activation;
    tr.layers.push_back(std::move(lt));
  }
  const auto o = out_index();
  tr.logits = x * params_[o].transpose();
  tr.logits.rowwise() += params_[o + 1].col(0).transpose();
  tr.raw = cfg_.sigmoid_output ? sigmoid_of(tr.logits) : tr.logits;
  tr.norms = tr.raw.rowwise().norm();
  tr.out.embeddings = tr.raw;
  for (Eigen::Index i = 0; i < tr.raw.rows(); ++i) {
    if (tr.norms(i) > 0.0) tr.out.embeddings.row(i) /= tr.norms(i);
  }
  tr.out.score_logits = (x * params_[o + 2].transpose()).col(0);
  tr.out.score_logits.array() += params_[o + 3](0, 0);
  return tr;
}

NetOutput DenseNet::infer(const Matrix& batch) const { return trace(batch, NetMode::eval).out; }

NetOutput DenseNet::forward(const Matrix& batch) {
  if (mode_ == NetMode::eval) return infer(batch);
  auto tr = trace(batch, NetMode::train);
  update_running_stats(tr);
  return std::move(tr.out);
}

void DenseNet::update_running_stats(const ForwardTrace& tr) {
  const double m = cfg_.bn_momentum;
  for (std::size_t l = 0; l < tr.layers.size(); ++l) {
    const auto& lt = tr.layers[l];
    const double n = static_cast<double>(lt.input.rows());
    // Running variance tracks the unbiased estimate.
    const double correction = n > 1.0 ? n / (n - 1.0) : 1.0;
    buffers_[2 * l] = (1.0 - m) * buffers_[2 * l] + m * Matrix(lt.mean);
    buffers_[2 * l + 1] = (1.0 - m) * buffers_[2 * l + 1] + (m * correction) * Matrix(lt.var);
  }
}

StepLosses DenseNet::loss_and_gradients(const Matrix& batch, const BatchTargets& targets,
                                        const LossSpec& spec, std::vector<Matrix>* grads) const {
  const auto tr = trace(batch, NetMode::train);
  const Eigen::Index n = batch.rows();
  const Eigen::Index d = cfg_.out_dim;
  if (static_cast<Eigen::Index>(targets.is_word.size()) != n ||
      (targets.embedding.rows() != n) || targets.embedding.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "targets do not match the batch");
  }
  if (spec.loss == EmbeddingLoss::bce && !cfg_.sigmoid_output) {
    throw Error(ErrorCode::InvalidConfig, "bce loss needs a sigmoid-output network");
  }

  StepLosses losses;
  Vector d_score = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = logistic_score_loss(tr.out.score_logits(i), targets.is_word[i] != 0);
    losses.score += s.loss / static_cast<double>(n);
    d_score(i) = spec.weights.w_head * s.grad / static_cast<double>(n);
  }

  Matrix d_embed = Matrix::Zero(n, d);   // w.r.t. unit embeddings
  Matrix d_logits = Matrix::Zero(n, d);  // w.r.t. output pre-activation
  const auto n_words = std::count(targets.is_word.begin(), targets.is_word.end(), char{1});
  if (n_words > 0) {
    const double share = 1.0 / static_cast<double>(n_words);
    auto row_of = [](const Matrix& m, Eigen::Index i) {
      Vector r = m.row(i).transpose();
      return r;
    };
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!targets.is_word[i]) continue;
      const Vector v = row_of(tr.out.embeddings, i);
      const Vector u = row_of(targets.embedding, i);
      const std::span<const double> vs(v.data(), v.size());
      const std::span<const double> us(u.data(), u.size());
      auto accumulate = [&](const VectorLoss& r, Matrix& into) {
        losses.emb += share * r.loss;
        for (Eigen::Index k = 0; k < d; ++k) into(i, k) += spec.weights.w_emb * share * r.grad[k];
      };
      switch (spec.loss) {
        case EmbeddingLoss::cosine:
          accumulate(cosine_loss(vs, us), d_embed);
          break;
        case EmbeddingLoss::cosine_embedding: {
          accumulate(cosine_embedding_loss(vs, us, true, spec.margin), d_embed);
          const int other = targets.mismatch.empty() ? -1 : targets.mismatch[i];
          if (other >= 0) {
            const Vector w = row_of(targets.embedding, other);
            accumulate(cosine_embedding_loss(vs, {w.data(), static_cast<std::size_t>(w.size())},
                                             false, spec.margin),
                       d_embed);
          }
          break;
        }
        case EmbeddingLoss::bce: {
          const Vector z = row_of(tr.logits, i);
          accumulate(bce_embedding_loss({z.data(), static_cast<std::size_t>(z.size())}, us),
                     d_logits);
          break;
        }
      }
    }
  }
  losses.total = spec.weights.w_head * losses.score + spec.weights.w_emb * losses.emb;
  if (grads == nullptr) return losses;

  // Through L2 normalisation: d raw = (d v - v (v . d v)) / |raw|.
  Matrix d_raw = Matrix::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (tr.norms(i) <= 0.0) continue;
    const auto v = tr.out.embeddings.row(i);
    const double proj = v.dot(d_embed.row(i));
    d_raw.row(i) = (d_embed.row(i) - proj * v) / tr.norms(i);
  }
  if (cfg_.sigmoid_output) {
    d_logits += (d_raw.array() * tr.raw.array() * (1.0 - tr.raw.array())).matrix();
  } else {
    d_logits += d_raw;
  }

  grads->assign(params_.size(), Matrix());
  const auto o = out_index();
  const Matrix& last = tr.layers.empty() ? batch : tr.layers.back().activation;
  (*grads)[o] = d_logits.transpose() * last;
  (*grads)[o + 1] = d_logits.colwise().sum().transpose();
  (*grads)[o + 2] = d_score.transpose() * last;
  (*grads)[o + 3] = Matrix::Constant(1, 1, d_score.sum());
  Matrix d_x = d_logits * params_[o] + d_score * params_[o + 2];

  const double nd = static_cast<double>(n);
  for (std::size_t l = tr.layers.size(); l-- > 0;) {
    const auto& lt = tr.layers[l];
    const Matrix d_y = (d_x.array() * (1.0 - lt.activation.array().square())).matrix();
    (*grads)[4 * l + 2] = (d_y.array() * lt.normalized.array()).colwise().sum().transpose();
    (*grads)[4 * l + 3] = d_y.colwise().sum().transpose();
    const Matrix d_hat =
        (d_y.array().rowwise() * bn_scale(l).col(0).transpose().array()).matrix();
    const Vector inv_std = (lt.var.array() + cfg_.bn_eps).rsqrt().matrix();
    const Eigen::RowVectorXd sum_dhat = d_hat.colwise().sum();
    const Eigen::RowVectorXd sum_dhat_xhat =
        (d_hat.array() * lt.normalized.array()).colwise().sum().matrix();
    Matrix d_pre = nd * d_hat;
    d_pre.rowwise() -= sum_dhat;
    d_pre -= (lt.normalized.array().rowwise() * sum_dhat_xhat.array()).matrix();
    d_pre = (d_pre.array().rowwise() * (inv_std.transpose().array() / nd)).matrix();
    (*grads)[4 * l] = d_pre.transpose() * lt.input;
    (*grads)[4 * l + 1] = d_pre.colwise().sum().transpose();
    d_x = d_pre * weight(l);
  }
  return losses;
}

void DenseNet::round_to_float() {
  auto round = [](Matrix& m) {
    m = m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  };
  for (auto& p : params_) round(p);
  for (auto& b : buffers_) round(b);
}

double Adam::current_lr() const {
  double lr = cfg_.lr;
  if (cfg_.decay_every > 0) {
    // Repeated multiplication keeps 1e-3 -> 1e-4 -> 1e-5 exact in binary64.
    for (long k = steps_ / cfg_.decay_every; k > 0; --k) lr *= cfg_.decay_factor;
  }
  return lr;
}

void Adam::step(std::vector<Matrix>& params, const std::vector<Matrix>& grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::DimensionMismatch, "adam: gradient count differs from parameters");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.rows(), p.cols()));
      v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  const double lr = current_lr();
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
    params[i].array() -=
        lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
  }
}

std::vector<RegionDescription> TrainedModel::describe(const GrayImage& img,
                                                      std::span<const Box> boxes) const {
  constexpr std::size_t kChunk = 512;
  std::vector<RegionDescription> out;
  out.reserve(boxes.size());
  const int in_dim = net.config().input_dim;
  for (std::size_t start = 0; start < boxes.size(); start += kChunk) {
    const auto count = std::min(kChunk, boxes.size() - start);
    Matrix batch(static_cast<Eigen::Index>(count), in_dim);
    for (std::size_t i = 0; i < count; ++i) {
      const auto f = extract_features(img, boxes[start + i]);
      if (static_cast<int>(f.size()) != in_dim) {
        throw Error(ErrorCode::DimensionMismatch, "feature size does not match the network");
      }
      for (int k = 0; k < in_dim; ++k) batch(static_cast<Eigen::Index>(i), k) = f[static_cast<std::size_t>(k)];
    }
    const auto res = net.infer(batch);
    for (std::size_t i = 0; i < count; ++i) {
      RegionDescription rd;
      const auto row = res.embeddings.row(static_cast<Eigen::Index>(i));
      rd.descriptor.resize(static_cast<std::size_t>(row.size()));
      for (Eigen::Index k = 0; k < row.size(); ++k) rd.descriptor[static_cast<std::size_t>(k)] = static_cast<float>(row(k));
      rd.wordness = sigmoid(res.score_logits(static_cast<Eigen::Index>(i)));
      out.push_back(std::move(rd));
    }
  }
  return out;
}

nlohmann::json TrainedModel::config_json() const {
  return {{"version", version},
          {"loss", std::string(to_string(loss))},
          {"net", net.config().to_json()},
          {"text", text.to_json()}};
}

namespace {

constexpr char kModelMagic[] = "WSPT";

void write_matrix(detail::ByteWriter& w, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(static_cast<float>(m(r, c)));
}

void read_matrix(detail::ByteReader& rd, Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rd.f32();
}

// Declaration order: per hidden layer weight, bias, bn scale, bn shift,
// running mean, running variance; then output and score heads.
template <typename Net, typename Fn>
void for_each_tensor(Net& net, Fn&& fn) {
  auto& params = net.parameters();
  auto& buffers = net.buffers();
  const auto layers = net.config().hidden_dims.size();
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t k = 0; k < 4; ++k) fn(params[4 * l + k]);
    fn(buffers[2 * l]);
    fn(buffers[2 * l + 1]);
  }
  for (std::size_t k = 4 * layers; k < params.size(); ++k) fn(params[k]);
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const TrainedModel& model) {
  detail::ByteWriter w;
  w.raw(std::string_view(kModelMagic, 4));
  w.u32(TrainedModel::kFormatVersion);
  w.str(model.config_json().dump());
  for_each_tensor(model.net, [&](const Matrix& m) { write_matrix(w, m); });
  w.crc_trailer();
  return std::move(w.data());
}

TrainedModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) !=
                              std::string_view(kModelMagic, 4)) {
    throw Error(ErrorCode::CorruptModel, "not a model checkpoint (bad magic)");
  }
  detail::ByteReader head(bytes.subspan(4, 4), ErrorCode::CorruptModel);
  const auto version = head.u32();
  if (version != TrainedModel::kFormatVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "model format version " + std::to_string(version) + " is not supported");
  }
  const auto body = detail::verify_crc_trailer(bytes, ErrorCode::CorruptModel);
  detail::ByteReader rd(body.subspan(8), ErrorCode::CorruptModel);

  TrainedModel model;
  try {
    const auto cfg = nlohmann::json::parse(rd.str());
    model.version = cfg.at("version").get<std::string>();
    model.loss = embedding_loss_from_string(cfg.at("loss").get<std::string>());
    model.text = TextEmbedder::from_json(cfg.at("text"));
    model.net = DenseNet(EmbedNetConfig::from_json(cfg.at("net")));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptModel, std::string("bad model config: ") + e.what());
  }
  for_each_tensor(model.net, [&](Matrix& m) { read_matrix(rd, m); });
  if (rd.remaining() != 0) throw Error(ErrorCode::CorruptModel, "trailing bytes in checkpoint");
  return model;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_model(model));
}

TrainedModel load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file_bytes(path));
}

}  // namespace wordspot
