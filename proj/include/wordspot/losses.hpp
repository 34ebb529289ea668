#pragma once

#include <span>
#include <vector>

namespace wordspot {

struct LossWeights {
  double w_rpn = 1e-2;
  double w_head = 1e-1;
  double w_emb = 3.0;
};

struct MarginConfig {
  double gamma = 0.2;
};

struct ScalarLoss {
  double loss = 0.0;
  double grad = 0.0;
};

struct VectorLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Summed smooth-L1 (Huber with unit transition). Gradient is w.r.t. x.
VectorLoss smooth_l1(std::span<const double> x, std::span<const double> t);

/// Binary logistic loss on a raw logit, evaluated in softplus form.
ScalarLoss logistic_score_loss(double logit, bool is_word);

/// y = 1: 1 - cos(u, v); y = 0: max(0, cos(u, v) - gamma). Gradient is w.r.t.
/// v; u is the fixed target. At the hinge kink the subgradient 0 is used.
VectorLoss cosine_embedding_loss(std::span<const double> v, std::span<const double> u, bool match,
                                 const MarginConfig& margin = {});

/// 1 - cos(u, v), gradient w.r.t. v.
VectorLoss cosine_loss(std::span<const double> v, std::span<const double> u);

/// Mean over dimensions of per-bit binary cross-entropy on sigmoid(logits).
/// Targets must be exactly 0 or 1.
VectorLoss bce_embedding_loss(std::span<const double> logits, std::span<const double> target);

struct LossParts {
  double rpn_reg = 0.0;
  double rpn_score = 0.0;
  double reg = 0.0;
  double score = 0.0;
  double emb = 0.0;
};

double total_loss(const LossParts& parts, const LossWeights& w = {});

double sigmoid(double x);
/// log(1 + exp(x)) without overflow.
double softplus(double x);

}  // namespace wordspot
