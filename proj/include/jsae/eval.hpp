#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "jsae/jacobian.hpp"
#include "jsae/mlp.hpp"
#include "jsae/sae.hpp"

namespace jsae {

// 1 - MSE / Var with the variance taken around the per-dimension mean of the
// originals. Throws NumericDegeneracy when that variance is zero.
double explained_variance(const std::vector<Eigen::VectorXd>& originals,
                          const std::vector<Eigen::VectorXd>& reconstructions);

// Mean over pairs; a zero-norm vector on either side throws.
double mean_cosine_similarity(const std::vector<Eigen::VectorXd>& originals,
                              const std::vector<Eigen::VectorXd>& reconstructions);

double mean_mse(const std::vector<Eigen::VectorXd>& originals,
                const std::vector<Eigen::VectorXd>& reconstructions);

// Downstream-loss functional over a candidate list (one vector per token).
using TaskLoss = std::function<double(const std::vector<Eigen::VectorXd>&)>;

// (loss(zeros) - loss(reconstructions)) / (loss(zeros) - loss(originals)):
// 1 when reconstructions are exact, 0 when they carry no more task signal
// than zeros. Throws NumericDegeneracy when the denominator vanishes.
double ce_score_analog(const TaskLoss& task_loss,
                       const std::vector<Eigen::VectorXd>& originals,
                       const std::vector<Eigen::VectorXd>& reconstructions);

// Fraction of Jacobian entries above each threshold, averaged over tokens
// with a fixed k*k denominator regardless of how many latents were active.
std::map<double, double> jacobian_threshold_fractions(
    const std::vector<ActiveJacobian>& jacs,
    const std::vector<double>& thresholds, int k);

// Mean L_p norms of the flattened active block; use infinity for the max
// norm. Orders must be >= 1.
std::map<double, double> jacobian_lp_norms(const std::vector<ActiveJacobian>& jacs,
                                           const std::vector<double>& orders);

// Per-entry mean of |J| where each row i is averaged only over the tokens in
// which output latent i was active (rows that never fire stay zero).
// frac_above is measured against all n_y * n_x entries.
struct GlobalMeanJacobian {
  Eigen::MatrixXd mean;
  std::map<double, double> frac_above;
};
GlobalMeanJacobian global_mean_jacobian(const std::vector<ActiveJacobian>& jacs,
                                        const std::vector<double>& thresholds);

struct EvalOptions {
  std::vector<double> jac_thresholds{0.001, 0.01, 0.1};
  std::vector<double> lp_orders{1.0, 2.0, 4.0,
                                std::numeric_limits<double>::infinity()};
  // Optional downstream losses; when absent the report skips those scores.
  // task_loss_x consumes candidate MLP inputs, task_loss_y candidate outputs.
  TaskLoss task_loss_x;
  TaskLoss task_loss_y;
};

struct EvalReport {
  std::int64_t tokens = 0;
  double mse_x = 0.0;
  double mse_y = 0.0;
  double explained_variance_x = 0.0;
  double explained_variance_y = 0.0;
  // Cosine similarity averaged over tokens where both sides have nonzero
  // norm; zero-norm tokens are counted separately instead of erroring the
  // whole report.
  double cosine_x = 0.0;
  double cosine_y = 0.0;
  std::int64_t cosine_skipped_x = 0;
  std::int64_t cosine_skipped_y = 0;
  std::optional<double> ce_score_x;
  std::optional<double> ce_score_y;
  std::map<double, double> jac_frac_above;
  std::map<double, double> jac_lp_norms;
  std::map<double, double> global_jac_frac_above;
  Eigen::Index dead_x = 0;
  Eigen::Index dead_y = 0;
};

// Full pass over a token set: reconstructions on both sides, per-token active
// Jacobians, sparsity and norm summaries, and dead-latent counts (dead =
// never selected within this set).
EvalReport evaluate(const MlpParams& mlp, const SaePair& pair,
                    const std::vector<Eigen::VectorXd>& xs,
                    const EvalOptions& opts = {});

}  // namespace jsae
