#include "jsae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "jsae/errors.hpp"

namespace jsae {

namespace {

void check_pairs(const std::vector<Eigen::VectorXd>& a,
                 const std::vector<Eigen::VectorXd>& b, const char* who) {
  if (a.empty() || a.size() != b.size()) {
    throw std::invalid_argument(std::string(who) +
                                ": need equal-sized non-empty lists");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) {
      throw std::invalid_argument(std::string(who) + ": vector width mismatch");
    }
  }
}

}  // namespace

double mean_mse(const std::vector<Eigen::VectorXd>& originals,
                const std::vector<Eigen::VectorXd>& reconstructions) {
  check_pairs(originals, reconstructions, "mean_mse");
  double total = 0.0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    total += (reconstructions[i] - originals[i]).squaredNorm() /
             static_cast<double>(originals[i].size());
  }
  return total / static_cast<double>(originals.size());
}

double explained_variance(const std::vector<Eigen::VectorXd>& originals,
                          const std::vector<Eigen::VectorXd>& reconstructions) {
  check_pairs(originals, reconstructions, "explained_variance");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(originals[0].size());
  for (const auto& x : originals) mean += x;
  mean /= static_cast<double>(originals.size());

  double mse = 0.0, var = 0.0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    mse += (reconstructions[i] - originals[i]).squaredNorm();
    var += (originals[i] - mean).squaredNorm();
  }
  if (var == 0.0) {
    throw NumericDegeneracy("explained_variance: originals have zero variance");
  }
  return 1.0 - mse / var;
}

double mean_cosine_similarity(const std::vector<Eigen::VectorXd>& originals,
                              const std::vector<Eigen::VectorXd>& reconstructions) {
  check_pairs(originals, reconstructions, "mean_cosine_similarity");
  double total = 0.0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    double na = originals[i].norm();
    double nb = reconstructions[i].norm();
    if (na == 0.0 || nb == 0.0) {
      throw NumericDegeneracy(
          "mean_cosine_similarity: zero-norm vector at token " +
          std::to_string(i));
    }
    total += originals[i].dot(reconstructions[i]) / (na * nb);
  }
  return total / static_cast<double>(originals.size());
}

double ce_score_analog(const TaskLoss& task_loss,
                       const std::vector<Eigen::VectorXd>& originals,
                       const std::vector<Eigen::VectorXd>& reconstructions) {
  if (!task_loss) throw std::invalid_argument("ce_score_analog: empty task loss");
  check_pairs(originals, reconstructions, "ce_score_analog");
  std::vector<Eigen::VectorXd> zeros;
  zeros.reserve(originals.size());
  for (const auto& x : originals) zeros.push_back(Eigen::VectorXd::Zero(x.size()));
  double loss_zero = task_loss(zeros);
  double loss_orig = task_loss(originals);
  double loss_recon = task_loss(reconstructions);
  double denom = loss_zero - loss_orig;
  if (std::abs(denom) < 1e-12 * std::max(1.0, std::abs(loss_zero))) {
    throw NumericDegeneracy(
        "ce_score_analog: zero ablation does not change the task loss");
  }
  return (loss_zero - loss_recon) / denom;
}

std::map<double, double> jacobian_threshold_fractions(
    const std::vector<ActiveJacobian>& jacs,
    const std::vector<double>& thresholds, int k) {
  if (jacs.empty()) throw std::invalid_argument("jacobian_threshold_fractions: no tokens");
  if (k < 1) throw std::invalid_argument("jacobian_threshold_fractions: k must be positive");
  for (double t : thresholds) {
    if (!(t > 0.0)) {
      throw std::invalid_argument(
          "jacobian_threshold_fractions: thresholds must be positive");
    }
  }
  const double denom = static_cast<double>(jacs.size()) *
                       static_cast<double>(k) * static_cast<double>(k);
  std::map<double, double> out;
  for (double t : thresholds) {
    std::int64_t above = 0;
    for (const ActiveJacobian& aj : jacs) {
      above += (aj.values.cwiseAbs().array() > t).count();
    }
    out[t] = static_cast<double>(above) / denom;
  }
  return out;
}

std::map<double, double> jacobian_lp_norms(const std::vector<ActiveJacobian>& jacs,
                                           const std::vector<double>& orders) {
  if (jacs.empty()) throw std::invalid_argument("jacobian_lp_norms: no tokens");
  std::map<double, double> out;
  for (double p : orders) {
    if (!(p >= 1.0)) {
      throw std::invalid_argument("jacobian_lp_norms: orders must be >= 1");
    }
    double total = 0.0;
    for (const ActiveJacobian& aj : jacs) {
      if (aj.values.size() == 0) continue;
      if (std::isinf(p)) {
        total += aj.values.cwiseAbs().maxCoeff();
      } else {
        total += std::pow(aj.values.cwiseAbs().array().pow(p).sum(), 1.0 / p);
      }
    }
    out[p] = total / static_cast<double>(jacs.size());
  }
  return out;
}

GlobalMeanJacobian global_mean_jacobian(const std::vector<ActiveJacobian>& jacs,
                                        const std::vector<double>& thresholds) {
  if (jacs.empty()) throw std::invalid_argument("global_mean_jacobian: no tokens");
  const Eigen::Index n_y = jacs[0].n_y;
  const Eigen::Index n_x = jacs[0].n_x;
  for (const ActiveJacobian& aj : jacs) {
    if (aj.n_y != n_y || aj.n_x != n_x) {
      throw std::invalid_argument("global_mean_jacobian: shape mismatch");
    }
  }

  GlobalMeanJacobian out;
  out.mean = Eigen::MatrixXd::Zero(n_y, n_x);
  Eigen::VectorXd row_tokens = Eigen::VectorXd::Zero(n_y);
  for (const ActiveJacobian& aj : jacs) {
    for (Eigen::Index r = 0; r < aj.values.rows(); ++r) {
      Eigen::Index i = aj.row_indices[static_cast<std::size_t>(r)];
      row_tokens[i] += 1.0;
      for (Eigen::Index c = 0; c < aj.values.cols(); ++c) {
        out.mean(i, aj.col_indices[static_cast<std::size_t>(c)]) +=
            std::abs(aj.values(r, c));
      }
    }
  }
  for (Eigen::Index i = 0; i < n_y; ++i) {
    if (row_tokens[i] > 0.0) out.mean.row(i) /= row_tokens[i];
  }

  const double entries = static_cast<double>(n_y) * static_cast<double>(n_x);
  for (double t : thresholds) {
    if (!(t > 0.0)) {
      throw std::invalid_argument("global_mean_jacobian: thresholds must be positive");
    }
    out.frac_above[t] =
        static_cast<double>((out.mean.array() > t).count()) / entries;
  }
  return out;
}

EvalReport evaluate(const MlpParams& mlp, const SaePair& pair,
                    const std::vector<Eigen::VectorXd>& xs,
                    const EvalOptions& opts) {
  validate(mlp);
  if (xs.empty()) throw std::invalid_argument("evaluate: token set is empty");
  if (pair.input_sae.m() != mlp.m_in() || pair.output_sae.m() != mlp.m_out()) {
    throw std::invalid_argument("evaluate: SAE widths must match the MLP");
  }

  const std::size_t n_tokens = xs.size();
  std::vector<Eigen::VectorXd> xhats, ys, yhats;
  xhats.reserve(n_tokens);
  ys.reserve(n_tokens);
  yhats.reserve(n_tokens);
  std::vector<ActiveJacobian> jacs;
  jacs.reserve(n_tokens);

  DeadLatentTracker dead_x(pair.input_sae.n(), static_cast<std::int64_t>(n_tokens));
  DeadLatentTracker dead_y(pair.output_sae.n(), static_cast<std::int64_t>(n_tokens));

  for (const Eigen::VectorXd& x : xs) {
    SparseActivation s_x = encode(pair.input_sae, x);
    xhats.push_back(decode(pair.input_sae, s_x));
    Eigen::VectorXd y = mlp_forward(mlp, x).y;
    SparseActivation s_y = encode(pair.output_sae, y);
    yhats.push_back(decode(pair.output_sae, s_y));
    ys.push_back(std::move(y));
    jacs.push_back(active_jacobian_from_latents(mlp, pair, s_x));
    dead_x.observe(s_x);
    dead_y.observe(s_y);
  }

  EvalReport rep;
  rep.tokens = static_cast<std::int64_t>(n_tokens);
  rep.mse_x = mean_mse(xs, xhats);
  rep.mse_y = mean_mse(ys, yhats);
  rep.explained_variance_x = explained_variance(xs, xhats);
  rep.explained_variance_y = explained_variance(ys, yhats);

  auto masked_cosine = [](const std::vector<Eigen::VectorXd>& a,
                          const std::vector<Eigen::VectorXd>& b,
                          std::int64_t& skipped) {
    double total = 0.0;
    std::int64_t used = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      double na = a[i].norm(), nb = b[i].norm();
      if (na == 0.0 || nb == 0.0) {
        ++skipped;
        continue;
      }
      total += a[i].dot(b[i]) / (na * nb);
      ++used;
    }
    return used > 0 ? total / static_cast<double>(used) : 0.0;
  };
  rep.cosine_x = masked_cosine(xs, xhats, rep.cosine_skipped_x);
  rep.cosine_y = masked_cosine(ys, yhats, rep.cosine_skipped_y);

  if (opts.task_loss_x) {
    rep.ce_score_x = ce_score_analog(opts.task_loss_x, xs, xhats);
  }
  if (opts.task_loss_y) {
    rep.ce_score_y = ce_score_analog(opts.task_loss_y, ys, yhats);
  }

  rep.jac_frac_above =
      jacobian_threshold_fractions(jacs, opts.jac_thresholds, pair.input_sae.k);
  rep.jac_lp_norms = jacobian_lp_norms(jacs, opts.lp_orders);
  rep.global_jac_frac_above =
      global_mean_jacobian(jacs, opts.jac_thresholds).frac_above;
  rep.dead_x = dead_x.dead_count();
  rep.dead_y = dead_y.dead_count();
  return rep;
}

}  // namespace jsae
