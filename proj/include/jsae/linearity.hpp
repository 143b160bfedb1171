#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "jsae/mlp.hpp"
#include "jsae/sae.hpp"

namespace jsae {

// Dense copy of s with coordinate j overwritten by value (j need not be in
// the support).
Eigen::VectorXd psi(const SparseActivation& s, Eigen::Index j, double value);

// One scalar slice of the latent-to-latent map: output pre-activation i as a
// function of input latent j, with every other input latent pinned at its
// value in base. grid_x spans [0, domain_hi] with domain_hi =
// max(5, base_j + 1).
struct ScalarFunctionSample {
  Eigen::Index i = 0;
  Eigen::Index j = 0;
  SparseActivation base;
  double domain_hi = 5.0;
  Eigen::VectorXd grid_x;
  Eigen::VectorXd grid_y;
};

ScalarFunctionSample sample_scalar_function(const MlpParams& mlp,
                                            const SaePair& pair,
                                            const SparseActivation& s_x,
                                            Eigen::Index i, Eigen::Index j,
                                            int grid_points = 256);

// Evaluate the same scalar slice at one point.
double scalar_function_value(const MlpParams& mlp, const SaePair& pair,
                             const SparseActivation& s_x, Eigen::Index i,
                             Eigen::Index j, double value);

enum class FunctionTag { Linear, JumpRelu, Other };

// fit_params is (slope, intercept) for Linear and (a, b, c, d) for JumpRelu,
// meaning a * u for u = b x + c wherever u > d and 0 elsewhere. residual is
// the normalized RMSE of the accepted fit (of the best rejected fit for
// Other).
struct FunctionClass {
  FunctionTag tag = FunctionTag::Other;
  std::vector<double> fit_params;
  double residual = 0.0;
};

// Classify a sampled slice by least-squares fits whose RMSE is normalized by
// max|y| (plus a tiny guard); a fit is accepted below tol. Linear is tried
// first, then a JumpReLU family with the jump scanned over grid midpoints.
FunctionClass classify(const ScalarFunctionSample& sample, double tol = 0.01);

// Central second differences of the slice at interior grid points (clipped
// so x +- h stays inside the domain).
struct SecondDerivStats {
  double mean = 0.0;
  double mean_abs = 0.0;
  double max_abs = 0.0;
};
SecondDerivStats second_derivative_stats(const MlpParams& mlp,
                                         const SaePair& pair,
                                         const ScalarFunctionSample& sample,
                                         double h = 0.005);

// For each (i, j), nudge latent j down by 1, observe |delta| of output
// pre-activation i, and compare against |J_ij|; returns the fraction of pairs
// where they agree within 0.05 * max(|J_ij|, 0.01). Every probed latent needs
// a base value >= 1.
double delta_prediction_check(const MlpParams& mlp, const SaePair& pair,
                              const SparseActivation& s_x,
                              const std::vector<std::pair<Eigen::Index, Eigen::Index>>& pairs);

struct LinearityReport {
  std::int64_t samples = 0;
  double frac_linear = 0.0;
  double frac_jump_relu = 0.0;
  double frac_other = 0.0;
  double mean_abs_second_deriv = 0.0;
  double max_abs_second_deriv = 0.0;
  std::int64_t delta_pairs = 0;
  double delta_agreement = 0.0;
};

// Population study: draw tokens, pick random active (i, j) pairs, classify
// each scalar slice, pool second-derivative magnitudes, and run the
// delta-prediction probe on pairs whose base latent is >= 1.
LinearityReport linearity_analysis(const MlpParams& mlp, const SaePair& pair,
                                   const std::vector<Eigen::VectorXd>& tokens,
                                   std::int64_t n_samples, std::uint64_t seed,
                                   int grid_points = 256, double tol = 0.01,
                                   double d2_step = 0.005);

}  // namespace jsae
