#pragma once
// Finite-difference gradient checks shared by the unit tests and the
// acceptance run.

#include <map>
#include <random>
#include <string>

#include "oracles.hpp"
#include "wordspot/embedder.hpp"
#include "wordspot/losses.hpp"

namespace gradcheck {

using namespace wordspot;

inline std::vector<double> randn(std::mt19937_64& rng, std::size_t n, double s = 1.0) {
  std::normal_distribution<double> d(0.0, s);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline std::vector<double> random_bits(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng() % 2);
  return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

/// Worst relative error per loss over `trials` random inputs.
inline std::map<std::string, double> loss_errors(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::map<std::string, double> worst;
  auto track = [&](const std::string& name, const std::vector<double>& ana,
                   const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x) {
    worst[name] = std::max(worst[name], oracle::relative_error(ana, oracle::numeric_gradient(f, x)));
  };
  for (int trial = 0; trial < trials; ++trial) {
    const auto x = randn(rng, 6, 2.0), t = randn(rng, 6, 2.0);
    track("smooth_l1", smooth_l1(x, t).grad, [&](const auto& p) { return smooth_l1(p, t).loss; }, x);

    const std::vector<double> z{std::uniform_real_distribution<double>(-8.0, 8.0)(rng)};
    const bool y = trial % 2 == 0;
    track("logistic", {logistic_score_loss(z[0], y).grad},
          [&](const auto& p) { return logistic_score_loss(p[0], y).loss; }, z);

    const auto v = randn(rng, 10), u = randn(rng, 10);
    track("cosine", cosine_loss(v, u).grad, [&](const auto& p) { return cosine_loss(p, u).loss; }, v);
    MarginConfig m;
    m.gamma = -0.5;  // keeps the hinge active for most random pairs
    for (bool match : {true, false}) {
      track("cosine_embedding", cosine_embedding_loss(v, u, match, m).grad,
            [&](const auto& p) { return cosine_embedding_loss(p, u, match, m).loss; }, v);
    }

    const auto logits = randn(rng, 20, 3.0);
    const auto bits = random_bits(rng, 20);
    track("bce", bce_embedding_loss(logits, bits).grad,
          [&](const auto& p) { return bce_embedding_loss(p, bits).loss; }, logits);
  }
  return worst;
}

inline EmbedNetConfig tiny_net(bool sigmoid = false) {
  EmbedNetConfig c;
  c.input_dim = 6;
  c.hidden_dims = {8};
  c.out_dim = 4;
  c.seed = 3;
  c.sigmoid_output = sigmoid;
  return c;
}

inline BatchTargets random_targets(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d, bool binary) {
  BatchTargets t;
  t.embedding = random_matrix(rng, n, d);
  if (binary) t.embedding = t.embedding.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  for (Eigen::Index i = 0; i < n; ++i) t.is_word.push_back(i % 3 != 2 ? 1 : 0);
  for (Eigen::Index i = 0; i < n; ++i) t.mismatch.push_back(i == 0 ? 1 : (i == 1 ? 0 : -1));
  return t;
}

/// Worst relative error between analytic and numeric parameter gradients.
inline double network_error(DenseNet& net, const Matrix& batch, const BatchTargets& t, const LossSpec& spec) {
  std::vector<Matrix> grads;
  net.loss_and_gradients(batch, t, spec, &grads);
  double worst = 0.0;
  auto& params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    std::vector<double> flat(params[p].data(), params[p].data() + params[p].size());
    auto f = [&](const std::vector<double>& x) {
      const Matrix keep = params[p];
      std::copy(x.begin(), x.end(), params[p].data());
      const double l = net.loss_and_gradients(batch, t, spec, nullptr).total;
      params[p] = keep;
      return l;
    };
    const auto num = oracle::numeric_gradient(f, flat);
    std::vector<double> ana(grads[p].data(), grads[p].data() + grads[p].size());
    worst = std::max(worst, oracle::relative_error(ana, num));
  }
  return worst;
}

/// Whole-network check cycling through the three embedding losses.
inline double network_errors(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const auto loss = static_cast<EmbeddingLoss>(trial % 3);
    DenseNet net(tiny_net(loss == EmbeddingLoss::bce));
    // Move batch-norm scales and the heads away from their initial values.
    for (auto& p : net.parameters()) p += 0.3 * random_matrix(rng, p.rows(), p.cols());
    const auto x = random_matrix(rng, 3, 6);
    const auto t = random_targets(rng, 3, 4, loss == EmbeddingLoss::bce);
    LossSpec spec;
    spec.loss = loss;
    spec.margin.gamma = -0.9;
    worst = std::max(worst, network_error(net, x, t, spec));
  }
  return worst;
}

}  // namespace gradcheck
