#include "jsae/loss.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "jsae/errors.hpp"

namespace jsae {

namespace {

// Tokens are accumulated in fixed-size chunks that are summed in chunk order,
// which keeps batch results bit-identical across thread counts.
constexpr std::size_t kChunkTokens = 32;

double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_batch(const MlpParams& mlp, const SaePair& pair,
                 const std::vector<Eigen::VectorXd>& batch) {
  validate(mlp);
  if (pair.input_sae.k != pair.output_sae.k) {
    throw std::invalid_argument("loss: both SAEs must share the same k");
  }
  if (pair.input_sae.m() != mlp.m_in()) {
    throw std::invalid_argument("loss: input SAE width must match MLP input");
  }
  if (pair.output_sae.m() != mlp.m_out()) {
    throw std::invalid_argument("loss: output SAE width must match MLP output");
  }
  if (batch.empty()) throw std::invalid_argument("loss: batch is empty");
  for (const auto& x : batch) {
    if (x.size() != mlp.m_in()) {
      throw std::invalid_argument("loss: token width mismatch");
    }
  }
}

Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& mat,
                            const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(mat.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a)
    out.col(static_cast<Eigen::Index>(a)) = mat.col(idx[a]);
  return out;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& mat,
                            const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), mat.cols());
  for (std::size_t a = 0; a < idx.size(); ++a)
    out.row(static_cast<Eigen::Index>(a)) = mat.row(idx[a]);
  return out;
}

struct ChunkAccum {
  double mse_x = 0.0;
  double mse_y = 0.0;
  double jac = 0.0;
  SaeGradients g;
};

// All loss terms and, when requested, their full parameter chain for one
// token, added into acc.
void accumulate_token(const MlpParams& mlp, const SaePair& pair,
                      const Eigen::VectorXd& x, double lambda, bool with_grads,
                      ChunkAccum& acc, BatchSupports* sup, std::size_t token) {
  const SaeParams& in = pair.input_sae;
  const SaeParams& out = pair.output_sae;
  const double inv_mx = 1.0 / static_cast<double>(in.m());
  const double inv_my = 1.0 / static_cast<double>(out.m());
  const double k_sq = static_cast<double>(in.k) * static_cast<double>(in.k);

  SparseActivation s_x = encode(in, x);
  Eigen::VectorXd xhat = decode(in, s_x);
  Eigen::VectorXd y = mlp_forward(mlp, x).y;
  SparseActivation s_y = encode(out, y);
  Eigen::VectorXd yhat = decode(out, s_y);

  Eigen::VectorXd rx = xhat - x;
  Eigen::VectorXd ry = yhat - y;
  acc.mse_x += inv_mx * rx.squaredNorm();
  acc.mse_y += inv_my * ry.squaredNorm();

  // The latent-to-latent map starts from the reconstruction, so its own
  // forward pass and output selection live at xhat, not x.
  MlpOutput fwd = mlp_forward(mlp, xhat);
  SparseActivation s_yj = encode(out, fwd.y);

  if (sup != nullptr) {
    sup->input[token] = s_x.indices;
    sup->output[token] = s_y.indices;
    sup->output_jac[token] = s_yj.indices;
  }

  if (with_grads) {
    SaeParamGrads& gi = acc.g.input_sae;
    SaeParamGrads& go = acc.g.output_sae;

    Eigen::VectorXd rx2 = (2.0 * inv_mx) * rx;
    gi.b_dec += rx2;
    for (std::size_t c = 0; c < s_x.indices.size(); ++c) {
      Eigen::Index j = s_x.indices[c];
      gi.w_dec.col(j) += s_x.values[c] * rx2;
      double q = in.w_dec.col(j).dot(rx2);
      gi.w_enc.row(j) += q * x.transpose();
      gi.b_enc[j] += q;
    }

    Eigen::VectorXd ry2 = (2.0 * inv_my) * ry;
    go.b_dec += ry2;
    for (std::size_t r = 0; r < s_y.indices.size(); ++r) {
      Eigen::Index i = s_y.indices[r];
      go.w_dec.col(i) += s_y.values[r] * ry2;
      double p = out.w_dec.col(i).dot(ry2);
      go.w_enc.row(i) += p * y.transpose();
      go.b_enc[i] += p;
    }
  }

  const Eigen::Index k1 = s_x.active_count();
  const Eigen::Index k2 = s_yj.active_count();
  if (k1 == 0 || k2 == 0) return;

  Eigen::MatrixXd e = gather_rows(out.w_enc, s_yj.indices) * mlp.w2;
  Eigen::MatrixXd dec_cols = gather_cols(in.w_dec, s_x.indices);
  Eigen::MatrixXd dmat = mlp.w1 * dec_cols;

  Eigen::MatrixXd jac;
  Eigen::VectorXd phi1, gmat_d1;
  Eigen::MatrixXd gmat;
  if (mlp.kind == MlpKind::Standard) {
    phi1 = act_d1(mlp.activation, fwd.cache.hidden_pre);
    jac = e * phi1.asDiagonal() * dmat;
  } else {
    gmat = mlp.w_gate * dec_cols;
    phi1 = act_d1(mlp.activation, fwd.cache.gate_pre);
    gmat_d1 = fwd.cache.up.cwiseProduct(phi1);
    jac = e * (gmat_d1.asDiagonal() * gmat + fwd.cache.gate.asDiagonal() * dmat);
  }
  acc.jac += jac.cwiseAbs().sum() / k_sq;

  if (!with_grads || lambda == 0.0) return;

  SaeParamGrads& gi = acc.g.input_sae;
  SaeParamGrads& go = acc.g.output_sae;
  const double scale = lambda / k_sq;
  Eigen::MatrixXd sgn = (scale * jac.unaryExpr(&sign_or_zero)).eval();

  // Shared pieces: dP/dE = sgn M^T with M the hidden-to-latent slice, and
  // t = E^T sgn carrying the sensitivity back to the hidden layer.
  Eigen::MatrixXd mmat;
  if (mlp.kind == MlpKind::Standard) {
    mmat = phi1.asDiagonal() * dmat;
  } else {
    mmat = gmat_d1.asDiagonal() * gmat + fwd.cache.gate.asDiagonal() * dmat;
  }
  Eigen::MatrixXd d_enc_rows = (sgn * mmat.transpose()) * mlp.w2.transpose();
  for (Eigen::Index r = 0; r < k2; ++r)
    go.w_enc.row(s_yj.indices[r]) += d_enc_rows.row(r);

  Eigen::MatrixXd t = e.transpose() * sgn;

  Eigen::VectorXd dp_dxhat;
  if (mlp.kind == MlpKind::Standard) {
    Eigen::MatrixXd dp_dd = phi1.asDiagonal() * t;
    Eigen::MatrixXd d_dec_cols = mlp.w1.transpose() * dp_dd;
    for (Eigen::Index c = 0; c < k1; ++c)
      gi.w_dec.col(s_x.indices[c]) += d_dec_cols.col(c);

    Eigen::VectorXd phi2 = act_d2(mlp.activation, fwd.cache.hidden_pre);
    Eigen::VectorXd t_row = t.cwiseProduct(dmat).rowwise().sum();
    Eigen::VectorXd dp_dz = phi2.cwiseProduct(t_row);
    dp_dxhat = mlp.w1.transpose() * dp_dz;
  } else {
    Eigen::MatrixXd dp_dg_mat = gmat_d1.asDiagonal() * t;
    Eigen::MatrixXd dp_dd_mat = fwd.cache.gate.asDiagonal() * t;
    Eigen::MatrixXd d_dec_cols = mlp.w_gate.transpose() * dp_dg_mat +
                                 mlp.w1.transpose() * dp_dd_mat;
    for (Eigen::Index c = 0; c < k1; ++c)
      gi.w_dec.col(s_x.indices[c]) += d_dec_cols.col(c);

    Eigen::VectorXd dp_da = t.cwiseProduct(gmat).rowwise().sum();
    Eigen::VectorXd dp_ds = t.cwiseProduct(dmat).rowwise().sum();
    Eigen::VectorXd phi2 = act_d2(mlp.activation, fwd.cache.gate_pre);
    Eigen::VectorXd dp_dh = phi1.cwiseProduct(dp_da);
    Eigen::VectorXd dp_dgate_pre = fwd.cache.up.cwiseProduct(phi2).cwiseProduct(dp_da) +
                                   phi1.cwiseProduct(dp_ds);
    dp_dxhat = mlp.w1.transpose() * dp_dh + mlp.w_gate.transpose() * dp_dgate_pre;
  }

  gi.b_dec += dp_dxhat;
  for (std::size_t c = 0; c < s_x.indices.size(); ++c) {
    Eigen::Index j = s_x.indices[c];
    gi.w_dec.col(j) += s_x.values[c] * dp_dxhat;
    double q = in.w_dec.col(j).dot(dp_dxhat);
    gi.w_enc.row(j) += q * x.transpose();
    gi.b_enc[j] += q;
  }
}

void add_grads(SaeGradients& into, const SaeGradients& from) {
  into.input_sae.w_enc += from.input_sae.w_enc;
  into.input_sae.b_enc += from.input_sae.b_enc;
  into.input_sae.w_dec += from.input_sae.w_dec;
  into.input_sae.b_dec += from.input_sae.b_dec;
  into.output_sae.w_enc += from.output_sae.w_enc;
  into.output_sae.b_enc += from.output_sae.b_enc;
  into.output_sae.w_dec += from.output_sae.w_dec;
  into.output_sae.b_dec += from.output_sae.b_dec;
}

void scale_grads(SaeGradients& g, double s) {
  g.input_sae.w_enc *= s;
  g.input_sae.b_enc *= s;
  g.input_sae.w_dec *= s;
  g.input_sae.b_dec *= s;
  g.output_sae.w_enc *= s;
  g.output_sae.b_enc *= s;
  g.output_sae.w_dec *= s;
  g.output_sae.b_dec *= s;
}

BatchTerms run_batch(const MlpParams& mlp, const SaePair& pair,
                     const std::vector<Eigen::VectorXd>& batch, double lambda,
                     int threads, bool with_grads, bool want_supports) {
  check_batch(mlp, pair, batch);
  if (!(lambda >= 0.0)) {
    throw std::invalid_argument("loss: lambda must be non-negative");
  }
  if (threads < 1) {
    throw std::invalid_argument("loss: threads must be positive");
  }
  const std::size_t n_tokens = batch.size();
  const std::size_t n_chunks = (n_tokens + kChunkTokens - 1) / kChunkTokens;

  BatchTerms result;
  if (want_supports) {
    result.supports.input.resize(n_tokens);
    result.supports.output.resize(n_tokens);
    result.supports.output_jac.resize(n_tokens);
  }
  BatchSupports* sup = want_supports ? &result.supports : nullptr;

  std::vector<ChunkAccum> accums(n_chunks);
  if (with_grads) {
    for (auto& a : accums) a.g = zero_gradients(pair);
  }

  auto run_chunk = [&](std::size_t ci) {
    std::size_t begin = ci * kChunkTokens;
    std::size_t end = std::min(begin + kChunkTokens, n_tokens);
    for (std::size_t t = begin; t < end; ++t) {
      accumulate_token(mlp, pair, batch[t], lambda, with_grads, accums[ci], sup, t);
    }
  };

  int use_threads = std::clamp(threads, 1, static_cast<int>(n_chunks));
  if (use_threads <= 1) {
    for (std::size_t ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(use_threads));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(use_threads));
    for (int w = 0; w < use_threads; ++w) {
      pool.emplace_back([&, w]() {
        try {
          for (std::size_t ci = next.fetch_add(1); ci < n_chunks;
               ci = next.fetch_add(1)) {
            run_chunk(ci);
          }
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }

  double mse_x = 0.0, mse_y = 0.0, jac = 0.0;
  if (with_grads) result.grads = zero_gradients(pair);
  for (std::size_t ci = 0; ci < n_chunks; ++ci) {
    mse_x += accums[ci].mse_x;
    mse_y += accums[ci].mse_y;
    jac += accums[ci].jac;
    if (with_grads) add_grads(result.grads, accums[ci].g);
  }

  const double inv_tokens = 1.0 / static_cast<double>(n_tokens);
  result.loss.mse_x = mse_x * inv_tokens;
  result.loss.mse_y = mse_y * inv_tokens;
  result.loss.jac_l1 = jac * inv_tokens;
  result.loss.lambda = lambda;
  result.loss.total =
      result.loss.mse_x + result.loss.mse_y + lambda * result.loss.jac_l1;
  if (with_grads) scale_grads(result.grads, inv_tokens);
  return result;
}

}  // namespace

SaeGradients zero_gradients(const SaePair& pair) {
  auto zeros_like = [](const SaeParams& p) {
    SaeParamGrads g;
    g.w_enc = Eigen::MatrixXd::Zero(p.w_enc.rows(), p.w_enc.cols());
    g.b_enc = Eigen::VectorXd::Zero(p.b_enc.size());
    g.w_dec = Eigen::MatrixXd::Zero(p.w_dec.rows(), p.w_dec.cols());
    g.b_dec = Eigen::VectorXd::Zero(p.b_dec.size());
    return g;
  };
  return SaeGradients{zeros_like(pair.input_sae), zeros_like(pair.output_sae)};
}

BatchTerms forward_and_grads(const MlpParams& mlp, const SaePair& pair,
                             const std::vector<Eigen::VectorXd>& batch,
                             double lambda, int threads) {
  return run_batch(mlp, pair, batch, lambda, threads, true, true);
}

LossBreakdown forward_losses(const MlpParams& mlp, const SaePair& pair,
                             const std::vector<Eigen::VectorXd>& batch,
                             double lambda, int threads,
                             BatchSupports* supports) {
  BatchTerms terms =
      run_batch(mlp, pair, batch, lambda, threads, false, supports != nullptr);
  if (supports != nullptr) *supports = std::move(terms.supports);
  return terms.loss;
}

SaeGradients grads(const MlpParams& mlp, const SaePair& pair,
                   const std::vector<Eigen::VectorXd>& batch, double lambda,
                   int threads) {
  return run_batch(mlp, pair, batch, lambda, threads, true, false).grads;
}

namespace {

// Flat views over the eight SAE tensors, in a fixed order shared by the
// parameter pair and its gradients.
double* tensor_data(SaePair& p, int t) {
  switch (t) {
    case 0: return p.input_sae.w_enc.data();
    case 1: return p.input_sae.b_enc.data();
    case 2: return p.input_sae.w_dec.data();
    case 3: return p.input_sae.b_dec.data();
    case 4: return p.output_sae.w_enc.data();
    case 5: return p.output_sae.b_enc.data();
    case 6: return p.output_sae.w_dec.data();
    case 7: return p.output_sae.b_dec.data();
  }
  throw std::logic_error("tensor_data: bad tensor id");
}

const double* grad_data(const SaeGradients& g, int t) {
  switch (t) {
    case 0: return g.input_sae.w_enc.data();
    case 1: return g.input_sae.b_enc.data();
    case 2: return g.input_sae.w_dec.data();
    case 3: return g.input_sae.b_dec.data();
    case 4: return g.output_sae.w_enc.data();
    case 5: return g.output_sae.b_enc.data();
    case 6: return g.output_sae.w_dec.data();
    case 7: return g.output_sae.b_dec.data();
  }
  throw std::logic_error("grad_data: bad tensor id");
}

Eigen::Index tensor_size(const SaePair& p, int t) {
  switch (t) {
    case 0: return p.input_sae.w_enc.size();
    case 1: return p.input_sae.b_enc.size();
    case 2: return p.input_sae.w_dec.size();
    case 3: return p.input_sae.b_dec.size();
    case 4: return p.output_sae.w_enc.size();
    case 5: return p.output_sae.b_enc.size();
    case 6: return p.output_sae.w_dec.size();
    case 7: return p.output_sae.b_dec.size();
  }
  throw std::logic_error("tensor_size: bad tensor id");
}

}  // namespace

double grad_check(const MlpParams& mlp, const SaePair& pair,
                  const std::vector<Eigen::VectorXd>& batch, double lambda,
                  double eps) {
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");
  check_batch(mlp, pair, batch);

  SaePair work = pair;
  BatchTerms base = forward_and_grads(mlp, work, batch, lambda, 1);

  constexpr int kTensors = 8;
  std::array<Eigen::Index, kTensors> sizes{};
  Eigen::Index total_size = 0;
  for (int t = 0; t < kTensors; ++t) {
    sizes[static_cast<std::size_t>(t)] = tensor_size(work, t);
    total_size += sizes[static_cast<std::size_t>(t)];
  }

  // At least 200 probes when the pair has that many parameters, spread over
  // every tensor.
  std::array<Eigen::Index, kTensors> take{};
  Eigen::Index planned = 0;
  for (int t = 0; t < kTensors; ++t) {
    take[static_cast<std::size_t>(t)] =
        std::min<Eigen::Index>(sizes[static_cast<std::size_t>(t)], 32);
    planned += take[static_cast<std::size_t>(t)];
  }
  Eigen::Index target = std::min<Eigen::Index>(200, total_size);
  while (planned < target) {
    int best = -1;
    Eigen::Index best_room = 0;
    for (int t = 0; t < kTensors; ++t) {
      Eigen::Index room = sizes[static_cast<std::size_t>(t)] -
                          take[static_cast<std::size_t>(t)];
      if (room > best_room) {
        best_room = room;
        best = t;
      }
    }
    ++take[static_cast<std::size_t>(best)];
    ++planned;
  }

  std::mt19937_64 rng(0x6a5c3e1d2b4f9701ull);
  double worst = 0.0;
  for (int t = 0; t < kTensors; ++t) {
    Eigen::Index sz = sizes[static_cast<std::size_t>(t)];
    std::vector<Eigen::Index> all(static_cast<std::size_t>(sz));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    std::vector<Eigen::Index> picked;
    std::sample(all.begin(), all.end(), std::back_inserter(picked),
                take[static_cast<std::size_t>(t)], rng);

    for (Eigen::Index idx : picked) {
      double* slot = tensor_data(work, t) + idx;
      const double orig = *slot;

      BatchSupports sup_plus, sup_minus;
      *slot = orig + eps;
      LossBreakdown up = forward_losses(mlp, work, batch, lambda, 1, &sup_plus);
      *slot = orig - eps;
      LossBreakdown down = forward_losses(mlp, work, batch, lambda, 1, &sup_minus);
      *slot = orig;

      if (!(sup_plus == base.supports) || !(sup_minus == base.supports)) {
        throw DegenerateInput(
            "grad_check: a TopK support flipped under perturbation; "
            "the finite-difference probe is not valid here");
      }

      double fd = (up.total - down.total) / (2.0 * eps);
      double analytic = grad_data(base.grads, t)[idx];
      double denom = std::max({1.0, std::abs(fd), std::abs(analytic)});
      worst = std::max(worst, std::abs(fd - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace jsae
