#pragma once

#include <vector>

#include <Eigen/Core>

#include "jsae/mlp.hpp"
#include "jsae/sae.hpp"

namespace jsae {

// The nonzero block of the Jacobian of the latent-to-latent map
//   s_y = encode_y(mlp(decode_x(s_x)))
// taken at fixed TopK supports. values(r, c) is d s_y[row_indices[r]] /
// d s_x[col_indices[c]]; every entry outside the block is exactly zero.
struct ActiveJacobian {
  Eigen::MatrixXd values;
  std::vector<Eigen::Index> row_indices;
  std::vector<Eigen::Index> col_indices;
  Eigen::Index n_y = 0;
  Eigen::Index n_x = 0;
};

// Analytic kernel. The column support comes from s_x = encode_x(x); the row
// support is the output selection at mlp(decode_x(s_x)). Standard MLPs cost
// three rectangular matrix products, Glu four.
ActiveJacobian active_jacobian(const MlpParams& mlp, const SaePair& pair,
                               const Eigen::VectorXd& x);
ActiveJacobian active_jacobian_from_latents(const MlpParams& mlp,
                                            const SaePair& pair,
                                            const SparseActivation& s_x);

// Single entry d s_y[i] / d s_x[j] without forming the block.
double jacobian_element(const MlpParams& mlp, const SaePair& pair,
                        const SparseActivation& s_x, Eigen::Index i,
                        Eigen::Index j);

// Central finite differences with both supports frozen at their values at x.
// Throws DegenerateInput when either TopK selection margin is below 10*eps or
// a perturbed point flips the output selection.
Eigen::MatrixXd full_jacobian_fd(const MlpParams& mlp, const SaePair& pair,
                                 const Eigen::VectorXd& x, double eps = 1e-5);

// Dense n_y-by-n_x matrix with the active block placed at its indices.
Eigen::MatrixXd scatter_to_full(const ActiveJacobian& aj);

// Distance of the TopK selection over relu(pre) from a selection flip: the
// smallest selected clamped value minus the largest unselected one.
double selection_margin(const Eigen::VectorXd& pre, int k);

}  // namespace jsae
