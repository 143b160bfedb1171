#pragma once

#include <vector>

#include <Eigen/Core>

#include "jsae/jacobian.hpp"
#include "jsae/mlp.hpp"
#include "jsae/sae.hpp"

namespace jsae {

// Batch-mean loss terms. jac_l1 is sum|J| / k^2 averaged over tokens, before
// the lambda multiplier, so total = mse_x + mse_y + lambda * jac_l1 and
// lambda = 0 collapses to plain twin-SAE training. MSEs are means over
// dimensions. The reconstruction target y is the MLP output at the true
// input; the Jacobian term lives at the reconstructed input.
struct LossBreakdown {
  double mse_x = 0.0;
  double mse_y = 0.0;
  double jac_l1 = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

struct SaeParamGrads {
  Eigen::MatrixXd w_enc;
  Eigen::VectorXd b_enc;
  Eigen::MatrixXd w_dec;
  Eigen::VectorXd b_dec;
};

struct SaeGradients {
  SaeParamGrads input_sae;
  SaeParamGrads output_sae;
};

SaeGradients zero_gradients(const SaePair& pair);

// Per-token TopK index sets, recorded so callers can track latent usage and
// finite-difference probes can verify the supports never flipped.
struct BatchSupports {
  std::vector<std::vector<Eigen::Index>> input;
  std::vector<std::vector<Eigen::Index>> output;
  std::vector<std::vector<Eigen::Index>> output_jac;

  bool operator==(const BatchSupports&) const = default;
};

struct BatchTerms {
  LossBreakdown loss;
  SaeGradients grads;
  BatchSupports supports;
};

// Losses and closed-form parameter gradients for one batch. TopK selections
// are held fixed for differentiation (straight-through); sign(0) = 0 inside
// the penalty gradient. Tokens are processed in fixed chunks and combined in
// chunk order, so results are bit-identical for any thread count.
BatchTerms forward_and_grads(const MlpParams& mlp, const SaePair& pair,
                             const std::vector<Eigen::VectorXd>& batch,
                             double lambda, int threads = 1);

LossBreakdown forward_losses(const MlpParams& mlp, const SaePair& pair,
                             const std::vector<Eigen::VectorXd>& batch,
                             double lambda, int threads = 1,
                             BatchSupports* supports = nullptr);

SaeGradients grads(const MlpParams& mlp, const SaePair& pair,
                   const std::vector<Eigen::VectorXd>& batch, double lambda,
                   int threads = 1);

// Central-difference audit of the analytic gradients on >= 200 sampled
// coordinates spanning all eight tensors. Returns the worst relative error,
// with |analytic - fd| normalized by max(1, |analytic|, |fd|). Throws
// DegenerateInput if any probe flips a TopK support.
double grad_check(const MlpParams& mlp, const SaePair& pair,
                  const std::vector<Eigen::VectorXd>& batch, double lambda,
                  double eps = 1e-5);

}  // namespace jsae
