#include "jsae/linearity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "jsae/errors.hpp"
#include "jsae/jacobian.hpp"

namespace jsae {

Eigen::VectorXd psi(const SparseActivation& s, Eigen::Index j, double value) {
  if (j < 0 || j >= s.n) throw std::invalid_argument("psi: index out of range");
  Eigen::VectorXd dense = s.to_dense();
  dense[j] = value;
  return dense;
}

namespace {

// Decode of base with latent j zeroed, plus the decoder direction of j; the
// scalar slice is then evaluated as rest + v * direction without touching
// the other latents again.
struct SliceBasis {
  Eigen::VectorXd rest;
  Eigen::VectorXd direction;
};

SliceBasis slice_basis(const SaeParams& in, const SparseActivation& s_x,
                       Eigen::Index j) {
  if (s_x.n != in.n()) {
    throw std::invalid_argument("linearity: latent size mismatch");
  }
  if (j < 0 || j >= in.n()) {
    throw std::invalid_argument("linearity: input latent out of range");
  }
  SliceBasis basis;
  basis.rest = in.b_dec;
  for (std::size_t c = 0; c < s_x.indices.size(); ++c) {
    if (s_x.indices[c] == j) continue;
    basis.rest += s_x.values[c] * in.w_dec.col(s_x.indices[c]);
  }
  basis.direction = in.w_dec.col(j);
  return basis;
}

double slice_value(const MlpParams& mlp, const SaeParams& out_sae,
                   const SliceBasis& basis, Eigen::Index i, double v) {
  Eigen::VectorXd y = mlp_forward(mlp, basis.rest + v * basis.direction).y;
  return out_sae.w_enc.row(i).dot(y) + out_sae.b_enc[i];
}

}  // namespace

double scalar_function_value(const MlpParams& mlp, const SaePair& pair,
                             const SparseActivation& s_x, Eigen::Index i,
                             Eigen::Index j, double value) {
  if (i < 0 || i >= pair.output_sae.n()) {
    throw std::invalid_argument("scalar_function_value: output latent out of range");
  }
  SliceBasis basis = slice_basis(pair.input_sae, s_x, j);
  return slice_value(mlp, pair.output_sae, basis, i, value);
}

ScalarFunctionSample sample_scalar_function(const MlpParams& mlp,
                                            const SaePair& pair,
                                            const SparseActivation& s_x,
                                            Eigen::Index i, Eigen::Index j,
                                            int grid_points) {
  if (grid_points < 2) {
    throw std::invalid_argument("sample_scalar_function: need >= 2 grid points");
  }
  if (i < 0 || i >= pair.output_sae.n()) {
    throw std::invalid_argument("sample_scalar_function: output latent out of range");
  }
  SliceBasis basis = slice_basis(pair.input_sae, s_x, j);

  ScalarFunctionSample sample;
  sample.i = i;
  sample.j = j;
  sample.base = s_x;
  sample.domain_hi = std::max(5.0, s_x.value_at(j) + 1.0);
  sample.grid_x.resize(grid_points);
  sample.grid_y.resize(grid_points);
  for (int t = 0; t < grid_points; ++t) {
    double x = sample.domain_hi * static_cast<double>(t) /
               static_cast<double>(grid_points - 1);
    sample.grid_x[t] = x;
    sample.grid_y[t] = slice_value(mlp, pair.output_sae, basis, i, x);
  }
  return sample;
}

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

LineFit fit_line(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys,
                 Eigen::Index begin, Eigen::Index end) {
  const double c = static_cast<double>(end - begin);
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (Eigen::Index t = begin; t < end; ++t) {
    sx += xs[t];
    sy += ys[t];
    sxx += xs[t] * xs[t];
    sxy += xs[t] * ys[t];
  }
  double det = c * sxx - sx * sx;
  LineFit fit;
  if (det == 0.0) {
    fit.slope = 0.0;
    fit.intercept = sy / c;
  } else {
    fit.slope = (c * sxy - sx * sy) / det;
    fit.intercept = (sy - fit.slope * sx) / c;
  }
  return fit;
}

// Exact residual pass, done once per candidate fit to dodge the cancellation
// noise of the running-sum shortcut.
double rmse_of_jump_fit(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys,
                        Eigen::Index split, const LineFit& fit) {
  double sse = 0.0;
  for (Eigen::Index t = 0; t < xs.size(); ++t) {
    double pred = t < split ? 0.0 : fit.slope * xs[t] + fit.intercept;
    double r = ys[t] - pred;
    sse += r * r;
  }
  return std::sqrt(sse / static_cast<double>(xs.size()));
}

}  // namespace

FunctionClass classify(const ScalarFunctionSample& sample, double tol) {
  const Eigen::VectorXd& xs = sample.grid_x;
  const Eigen::VectorXd& ys = sample.grid_y;
  const Eigen::Index n = xs.size();
  if (n < 4 || ys.size() != n) {
    throw std::invalid_argument("classify: need a sampled grid of >= 4 points");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("classify: tol must be positive");
  const double denom = ys.cwiseAbs().maxCoeff() + 1e-12;

  FunctionClass result;
  LineFit lin = fit_line(xs, ys, 0, n);
  double sse = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    double r = ys[t] - (lin.slope * xs[t] + lin.intercept);
    sse += r * r;
  }
  double lin_rmse = std::sqrt(sse / static_cast<double>(n));
  if (lin_rmse / denom < tol) {
    result.tag = FunctionTag::Linear;
    result.fit_params = {lin.slope, lin.intercept};
    result.residual = lin_rmse / denom;
    return result;
  }

  // Scan the jump over grid midpoints: zero to the left, affine to the right.
  double best_rmse = std::numeric_limits<double>::infinity();
  Eigen::Index best_split = -1;
  LineFit best_fit;
  for (Eigen::Index split = 1; split + 2 <= n; ++split) {
    LineFit fit = fit_line(xs, ys, split, n);
    double rmse = rmse_of_jump_fit(xs, ys, split, fit);
    if (rmse < best_rmse) {
      best_rmse = rmse;
      best_split = split;
      best_fit = fit;
    }
  }
  if (best_split >= 0 && best_rmse / denom < tol) {
    double jump_x = 0.5 * (xs[best_split - 1] + xs[best_split]);
    result.tag = FunctionTag::JumpRelu;
    // a * u over u > d with u = b x + c; the threshold d sits at the scanned
    // jump location.
    result.fit_params = {1.0, best_fit.slope, best_fit.intercept,
                         best_fit.slope * jump_x + best_fit.intercept};
    result.residual = best_rmse / denom;
    return result;
  }

  result.tag = FunctionTag::Other;
  result.residual = std::min(lin_rmse, best_rmse) / denom;
  return result;
}

SecondDerivStats second_derivative_stats(const MlpParams& mlp,
                                         const SaePair& pair,
                                         const ScalarFunctionSample& sample,
                                         double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("second_derivative_stats: h must be positive");
  }
  const Eigen::Index n = sample.grid_x.size();
  if (n < 3) {
    throw std::invalid_argument("second_derivative_stats: grid too small");
  }
  SliceBasis basis = slice_basis(pair.input_sae, sample.base, sample.j);

  SecondDerivStats stats;
  std::int64_t used = 0;
  double total = 0.0, total_abs = 0.0;
  for (Eigen::Index t = 1; t + 1 < n; ++t) {
    double x = sample.grid_x[t];
    if (x - h < 0.0 || x + h > sample.domain_hi) continue;
    double f0 = slice_value(mlp, pair.output_sae, basis, sample.i, x);
    double fp = slice_value(mlp, pair.output_sae, basis, sample.i, x + h);
    double fm = slice_value(mlp, pair.output_sae, basis, sample.i, x - h);
    double d2 = (fp - 2.0 * f0 + fm) / (h * h);
    total += d2;
    total_abs += std::abs(d2);
    stats.max_abs = std::max(stats.max_abs, std::abs(d2));
    ++used;
  }
  if (used == 0) {
    throw std::invalid_argument(
        "second_derivative_stats: no interior point admits the probe step");
  }
  stats.mean = total / static_cast<double>(used);
  stats.mean_abs = total_abs / static_cast<double>(used);
  return stats;
}

double delta_prediction_check(const MlpParams& mlp, const SaePair& pair,
                              const SparseActivation& s_x,
                              const std::vector<std::pair<Eigen::Index, Eigen::Index>>& pairs) {
  if (pairs.empty()) {
    throw std::invalid_argument("delta_prediction_check: no pairs given");
  }
  std::int64_t agree = 0;
  for (const auto& [i, j] : pairs) {
    double base_value = s_x.value_at(j);
    if (base_value < 1.0) {
      throw std::invalid_argument(
          "delta_prediction_check: latent " + std::to_string(j) +
          " has base value below 1");
    }
    SliceBasis basis = slice_basis(pair.input_sae, s_x, j);
    double f0 = slice_value(mlp, pair.output_sae, basis, i, base_value);
    double f1 = slice_value(mlp, pair.output_sae, basis, i, base_value - 1.0);
    double delta = f1 - f0;
    double jac = jacobian_element(mlp, pair, s_x, i, j);
    if (std::abs(std::abs(delta) - std::abs(jac)) <
        0.05 * std::max(std::abs(jac), 0.01)) {
      ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(pairs.size());
}

LinearityReport linearity_analysis(const MlpParams& mlp, const SaePair& pair,
                                   const std::vector<Eigen::VectorXd>& tokens,
                                   std::int64_t n_samples, std::uint64_t seed,
                                   int grid_points, double tol, double d2_step) {
  if (tokens.empty()) throw std::invalid_argument("linearity_analysis: no tokens");
  if (n_samples < 1) throw std::invalid_argument("linearity_analysis: n_samples < 1");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> token_dist(0, tokens.size() - 1);

  LinearityReport rep;
  std::int64_t linear = 0, jump = 0, other = 0;
  double d2_abs_total = 0.0;
  std::int64_t delta_agree_weighted = 0;

  const std::int64_t max_attempts = 50 * n_samples;
  std::int64_t attempts = 0;
  while (rep.samples < n_samples && attempts < max_attempts) {
    ++attempts;
    const Eigen::VectorXd& x = tokens[token_dist(rng)];
    SparseActivation s_x = encode(pair.input_sae, x);
    if (s_x.active_count() == 0) continue;
    Eigen::VectorXd y = mlp_forward(mlp, decode(pair.input_sae, s_x)).y;
    SparseActivation s_y = encode(pair.output_sae, y);
    if (s_y.active_count() == 0) continue;

    std::uniform_int_distribution<std::size_t> row_dist(0, s_y.indices.size() - 1);
    std::uniform_int_distribution<std::size_t> col_dist(0, s_x.indices.size() - 1);
    Eigen::Index i = s_y.indices[row_dist(rng)];
    Eigen::Index j = s_x.indices[col_dist(rng)];

    ScalarFunctionSample sample =
        sample_scalar_function(mlp, pair, s_x, i, j, grid_points);
    FunctionClass cls = classify(sample, tol);
    switch (cls.tag) {
      case FunctionTag::Linear: ++linear; break;
      case FunctionTag::JumpRelu: ++jump; break;
      case FunctionTag::Other: ++other; break;
    }

    SecondDerivStats d2 = second_derivative_stats(mlp, pair, sample, d2_step);
    d2_abs_total += d2.mean_abs;
    rep.max_abs_second_deriv = std::max(rep.max_abs_second_deriv, d2.max_abs);

    if (s_x.value_at(j) >= 1.0) {
      double agreement = delta_prediction_check(mlp, pair, s_x, {{i, j}});
      delta_agree_weighted += agreement > 0.5 ? 1 : 0;
      ++rep.delta_pairs;
    }
    ++rep.samples;
  }

  if (rep.samples == 0) {
    throw NumericDegeneracy(
        "linearity_analysis: no token produced active latents on both sides");
  }
  const double inv = 1.0 / static_cast<double>(rep.samples);
  rep.frac_linear = static_cast<double>(linear) * inv;
  rep.frac_jump_relu = static_cast<double>(jump) * inv;
  rep.frac_other = static_cast<double>(other) * inv;
  rep.mean_abs_second_deriv = d2_abs_total * inv;
  rep.delta_agreement =
      rep.delta_pairs > 0
          ? static_cast<double>(delta_agree_weighted) /
                static_cast<double>(rep.delta_pairs)
          : 0.0;
  return rep;
}

}  // namespace jsae
