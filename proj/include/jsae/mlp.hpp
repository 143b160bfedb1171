#pragma once

#include <Eigen/Core>

#include "jsae/activations.hpp"

namespace jsae {

enum class MlpKind { Standard, Glu };

// A single MLP block, either
//   Standard: y = w2 phi(w1 x + b1) + b2
//   Glu:      y = w2 ((w1 x + b1) .* phi(w_gate x + b_gate)) + b2
// with w1, w_gate d_mlp-by-m_in and w2 m_out-by-d_mlp. The gate tensors stay
// empty for Standard.
struct MlpParams {
  MlpKind kind = MlpKind::Standard;
  ActivationKind activation = ActivationKind::GeluTanh;
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
  Eigen::MatrixXd w_gate;
  Eigen::VectorXd b_gate;

  Eigen::Index m_in() const { return w1.cols(); }
  Eigen::Index d_mlp() const { return w1.rows(); }
  Eigen::Index m_out() const { return w2.rows(); }
};

// Intermediates saved during the forward pass so the Jacobian kernel can
// reuse them instead of recomputing.
struct MlpCache {
  // Standard: pre-activation w1 x + b1.
  Eigen::VectorXd hidden_pre;
  // Glu: gate pre-activation, phi of it, the up projection, and their product.
  Eigen::VectorXd gate_pre;
  Eigen::VectorXd gate;
  Eigen::VectorXd up;
  Eigen::VectorXd hidden;
};

struct MlpOutput {
  Eigen::VectorXd y;
  MlpCache cache;
};

void validate(const MlpParams& p);
MlpOutput mlp_forward(const MlpParams& p, const Eigen::VectorXd& x);

const char* to_string(MlpKind kind);
MlpKind mlp_kind_from_string(const std::string& name);

}  // namespace jsae
