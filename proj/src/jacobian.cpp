#include "jsae/jacobian.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include "jsae/errors.hpp"

namespace jsae {

namespace {

// Gather decoder columns (m-by-k1) for the active input latents.
Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& mat,
                            const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(mat.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out.col(static_cast<Eigen::Index>(a)) = mat.col(idx[a]);
  return out;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& mat,
                            const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), mat.cols());
  for (std::size_t a = 0; a < idx.size(); ++a) out.row(static_cast<Eigen::Index>(a)) = mat.row(idx[a]);
  return out;
}

}  // namespace

ActiveJacobian active_jacobian_from_latents(const MlpParams& mlp,
                                            const SaePair& pair,
                                            const SparseActivation& s_x) {
  const SaeParams& in = pair.input_sae;
  const SaeParams& out_sae = pair.output_sae;
  Eigen::VectorXd xhat = decode(in, s_x);
  MlpOutput fwd = mlp_forward(mlp, xhat);
  SparseActivation s_y = encode(out_sae, fwd.y);

  ActiveJacobian aj;
  aj.n_x = in.n();
  aj.n_y = out_sae.n();
  aj.col_indices = s_x.indices;
  aj.row_indices = s_y.indices;
  Eigen::Index k1 = s_x.active_count();
  Eigen::Index k2 = s_y.active_count();
  if (k1 == 0 || k2 == 0) {
    aj.values.resize(k2, k1);
    return aj;
  }

  // E = w_enc_y[rows] w2, shared by both MLP kinds.
  Eigen::MatrixXd enc_rows = gather_rows(out_sae.w_enc, aj.row_indices);
  Eigen::MatrixXd e = enc_rows * mlp.w2;
  Eigen::MatrixXd dec_cols = gather_cols(in.w_dec, aj.col_indices);

  if (mlp.kind == MlpKind::Standard) {
    Eigen::MatrixXd d = mlp.w1 * dec_cols;
    Eigen::VectorXd phi1 = act_d1(mlp.activation, fwd.cache.hidden_pre);
    aj.values = e * phi1.asDiagonal() * d;
  } else {
    Eigen::MatrixXd d = mlp.w1 * dec_cols;
    Eigen::MatrixXd g = mlp.w_gate * dec_cols;
    // d hidden / d input direction = diag(up .* phi'(gate_pre)) g + diag(gate) d
    Eigen::VectorXd gate_d1 =
        fwd.cache.up.cwiseProduct(act_d1(mlp.activation, fwd.cache.gate_pre));
    aj.values = e * (gate_d1.asDiagonal() * g +
                     fwd.cache.gate.asDiagonal() * d);
  }
  return aj;
}

ActiveJacobian active_jacobian(const MlpParams& mlp, const SaePair& pair,
                               const Eigen::VectorXd& x) {
  return active_jacobian_from_latents(mlp, pair, encode(pair.input_sae, x));
}

double jacobian_element(const MlpParams& mlp, const SaePair& pair,
                        const SparseActivation& s_x, Eigen::Index i,
                        Eigen::Index j) {
  const SaeParams& in = pair.input_sae;
  const SaeParams& out_sae = pair.output_sae;
  if (i < 0 || i >= out_sae.n()) {
    throw std::invalid_argument("jacobian_element: row index out of range");
  }
  if (j < 0 || j >= in.n()) {
    throw std::invalid_argument("jacobian_element: column index out of range");
  }
  Eigen::VectorXd xhat = decode(in, s_x);
  MlpOutput fwd = mlp_forward(mlp, xhat);
  Eigen::VectorXd e = mlp.w2.transpose() * out_sae.w_enc.row(i).transpose();
  Eigen::VectorXd u = mlp.w1 * in.w_dec.col(j);
  if (mlp.kind == MlpKind::Standard) {
    Eigen::VectorXd phi1 = act_d1(mlp.activation, fwd.cache.hidden_pre);
    return e.dot(phi1.cwiseProduct(u));
  }
  Eigen::VectorXd g = mlp.w_gate * in.w_dec.col(j);
  Eigen::VectorXd gate_d1 =
      fwd.cache.up.cwiseProduct(act_d1(mlp.activation, fwd.cache.gate_pre));
  return e.dot(gate_d1.cwiseProduct(g) + fwd.cache.gate.cwiseProduct(u));
}

double selection_margin(const Eigen::VectorXd& pre, int k) {
  if (k < 1 || k > pre.size()) {
    throw std::invalid_argument("selection_margin: k out of range");
  }
  std::vector<double> clamped(static_cast<std::size_t>(pre.size()));
  for (Eigen::Index i = 0; i < pre.size(); ++i)
    clamped[static_cast<std::size_t>(i)] = pre[i] > 0.0 ? pre[i] : 0.0;
  std::sort(clamped.begin(), clamped.end(), std::greater<double>());
  // Selected entries are the positive ones among the k largest.
  std::size_t selected = 0;
  while (selected < static_cast<std::size_t>(k) && clamped[selected] > 0.0)
    ++selected;
  if (selected == 0) return -std::numeric_limits<double>::infinity();
  double smallest_selected = clamped[selected - 1];
  double largest_unselected =
      selected < clamped.size() ? clamped[selected] : 0.0;
  return smallest_selected - largest_unselected;
}

Eigen::MatrixXd full_jacobian_fd(const MlpParams& mlp, const SaePair& pair,
                                 const Eigen::VectorXd& x, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("full_jacobian_fd: eps must be positive");
  const SaeParams& in = pair.input_sae;
  const SaeParams& out_sae = pair.output_sae;

  Eigen::VectorXd pre_x = in.w_enc * x + in.b_enc;
  double margin_x = selection_margin(pre_x, in.k);
  if (!(margin_x > 10.0 * eps)) {
    throw DegenerateInput("full_jacobian_fd: input selection margin " +
                          std::to_string(margin_x) + " too small for eps=" +
                          std::to_string(eps));
  }
  SparseActivation s_x = topk(pre_x, in.k);

  Eigen::VectorXd y0 = mlp_forward(mlp, decode(in, s_x)).y;
  Eigen::VectorXd pre_y0 = out_sae.w_enc * y0 + out_sae.b_enc;
  double margin_y = selection_margin(pre_y0, out_sae.k);
  if (!(margin_y > 10.0 * eps)) {
    throw DegenerateInput("full_jacobian_fd: output selection margin " +
                          std::to_string(margin_y) + " too small for eps=" +
                          std::to_string(eps));
  }
  SparseActivation s_y0 = topk(pre_y0, out_sae.k);

  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(out_sae.n(), in.n());
  Eigen::Index k2 = s_y0.active_count();

  // Both supports stay frozen: the input support because only coordinates in
  // it are nudged, the output support because the block is read off the raw
  // encoder pre-activations at the base selection (with a flip check).
  SparseActivation probe = s_x;
  auto selected_pre = [&](double delta, std::size_t slot) {
    probe.values[slot] = s_x.values[slot] + delta;
    Eigen::VectorXd y = mlp_forward(mlp, decode(in, probe)).y;
    probe.values[slot] = s_x.values[slot];
    Eigen::VectorXd pre_y = out_sae.w_enc * y + out_sae.b_enc;
    SparseActivation s_y = topk(pre_y, out_sae.k);
    if (s_y.indices != s_y0.indices) {
      throw DegenerateInput(
          "full_jacobian_fd: output selection flipped under perturbation");
    }
    Eigen::VectorXd got(k2);
    for (Eigen::Index r = 0; r < k2; ++r) got[r] = pre_y[s_y0.indices[r]];
    return got;
  };

  for (std::size_t slot = 0; slot < s_x.indices.size(); ++slot) {
    Eigen::VectorXd plus = selected_pre(eps, slot);
    Eigen::VectorXd minus = selected_pre(-eps, slot);
    Eigen::VectorXd col = (plus - minus) / (2.0 * eps);
    for (Eigen::Index r = 0; r < k2; ++r)
      jac(s_y0.indices[r], s_x.indices[slot]) = col[r];
  }
  return jac;
}

Eigen::MatrixXd scatter_to_full(const ActiveJacobian& aj) {
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(aj.n_y, aj.n_x);
  for (Eigen::Index r = 0; r < aj.values.rows(); ++r)
    for (Eigen::Index c = 0; c < aj.values.cols(); ++c)
      full(aj.row_indices[r], aj.col_indices[c]) = aj.values(r, c);
  return full;
}

}  // namespace jsae
