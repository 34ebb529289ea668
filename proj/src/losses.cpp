#include "wordspot/losses.hpp"

#include <algorithm>
#include <cmath>

#include "wordspot/errors.hpp"

namespace wordspot {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

VectorLoss smooth_l1(std::span<const double> x, std::span<const double> t) {
  if (x.size() != t.size()) throw Error(ErrorCode::DimensionMismatch, "smooth_l1: size mismatch");
  VectorLoss out{0.0, std::vector<double>(x.size())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - t[i];
    const double a = std::abs(d);
    out.loss += a < 1.0 ? 0.5 * d * d : a - 0.5;
    out.grad[i] = std::clamp(d, -1.0, 1.0);
  }
  return out;
}

ScalarLoss logistic_score_loss(double logit, bool is_word) {
  // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z).
  return {is_word ? softplus(-logit) : softplus(logit), sigmoid(logit) - (is_word ? 1.0 : 0.0)};
}

namespace {

struct CosineParts {
  double cos = 0.0;
  double norm_u = 0.0;
  double norm_v = 0.0;
};

CosineParts cosine_parts(std::span<const double> v, std::span<const double> u) {
  if (v.size() != u.size()) throw Error(ErrorCode::DimensionMismatch, "cosine: size mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu <= 0.0 || vv <= 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  const double nu = std::sqrt(uu);
  const double nv = std::sqrt(vv);
  return {dot / (nu * nv), nu, nv};
}

// d cos(u, v) / dv = u / (|u||v|) - cos * v / |v|^2, scaled by `sign`.
std::vector<double> cosine_gradient(std::span<const double> v, std::span<const double> u,
                                    const CosineParts& p, double sign) {
  std::vector<double> g(v.size());
  const double a = 1.0 / (p.norm_u * p.norm_v);
  const double b = p.cos / (p.norm_v * p.norm_v);
  for (std::size_t i = 0; i < v.size(); ++i) g[i] = sign * (u[i] * a - v[i] * b);
  return g;
}

}  // namespace

VectorLoss cosine_embedding_loss(std::span<const double> v, std::span<const double> u, bool match,
                                 const MarginConfig& margin) {
  const auto p = cosine_parts(v, u);
  if (match) return {1.0 - p.cos, cosine_gradient(v, u, p, -1.0)};
  if (p.cos > margin.gamma) return {p.cos - margin.gamma, cosine_gradient(v, u, p, 1.0)};
  return {0.0, std::vector<double>(v.size(), 0.0)};
}

VectorLoss cosine_loss(std::span<const double> v, std::span<const double> u) {
  const auto p = cosine_parts(v, u);
  return {1.0 - p.cos, cosine_gradient(v, u, p, -1.0)};
}

VectorLoss bce_embedding_loss(std::span<const double> logits, std::span<const double> target) {
  if (logits.size() != target.size()) {
    throw Error(ErrorCode::DimensionMismatch, "bce: size mismatch");
  }
  VectorLoss out{0.0, std::vector<double>(logits.size())};
  if (logits.empty()) return out;
  const double n = static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double t = target[i];
    if (t != 0.0 && t != 1.0) throw Error(ErrorCode::NonBinaryTarget, "bce target must be binary");
    const double z = logits[i];
    out.loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    out.grad[i] = (sigmoid(z) - t) / n;
  }
  out.loss /= n;
  return out;
}

double total_loss(const LossParts& parts, const LossWeights& w) {
  return w.w_rpn * (parts.rpn_reg + parts.rpn_score) + w.w_head * (parts.reg + parts.score) +
         w.w_emb * parts.emb;
}

}  // namespace wordspot
