#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace jsae {

// A k-sparse latent vector: active indices in ascending order with their
// (strictly positive) values. n is the full latent dimension. Fewer than k
// entries survive when the pre-activations have fewer than k positive values.
struct SparseActivation {
  std::vector<Eigen::Index> indices;
  std::vector<double> values;
  Eigen::Index n = 0;
  int k = 0;

  Eigen::Index active_count() const {
    return static_cast<Eigen::Index>(indices.size());
  }
  Eigen::VectorXd to_dense() const;
  // Value at latent i, zero when inactive.
  double value_at(Eigen::Index i) const;
};

// TopK sparse autoencoder parameters.
//   encode: s = topk(relu(w_enc x + b_enc), k)   with w_enc n-by-m
//   decode: xhat = w_dec s + b_dec               with w_dec m-by-n
struct SaeParams {
  Eigen::MatrixXd w_enc;
  Eigen::VectorXd b_enc;
  Eigen::MatrixXd w_dec;
  Eigen::VectorXd b_dec;
  int k = 0;

  Eigen::Index m() const { return w_enc.cols(); }
  Eigen::Index n() const { return w_enc.rows(); }
};

// The two autoencoders straddling an MLP: input_sae on the MLP input side,
// output_sae on its output side.
struct SaePair {
  SaeParams input_sae;
  SaeParams output_sae;
};

// Keep the k largest entries of relu(v); entries clamped to zero are never
// selected, so fewer than k may survive. Ties break toward the lower index.
SparseActivation topk(const Eigen::VectorXd& v, int k);

SparseActivation encode(const SaeParams& sae, const Eigen::VectorXd& x);
Eigen::VectorXd decode(const SaeParams& sae, const SparseActivation& s);

// Seeded init: w_enc uniform in [-1/sqrt(m), 1/sqrt(m)] (row by row), biases
// zero, w_dec = w_enc transposed with columns rescaled to unit norm.
SaeParams init_sae(Eigen::Index m, Eigen::Index n, int k, std::uint64_t seed);

// Rescale every decoder column to unit Euclidean norm, in place.
void renormalize_decoder(SaeParams& sae);

// Tracks how long each latent has gone unselected, in tokens. A latent is
// counted dead once its gap reaches the window.
class DeadLatentTracker {
 public:
  DeadLatentTracker(Eigen::Index n, std::int64_t window_tokens);

  void observe(const SparseActivation& s);
  void observe(const std::vector<Eigen::Index>& selected);
  // Tokens since latent i last fired; equals tokens_seen() if it never has.
  std::int64_t gap(Eigen::Index i) const;
  Eigen::Index dead_count() const;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(last_fired_at_.size());
  }
  std::int64_t window() const { return window_; }
  std::int64_t tokens_seen() const { return seen_; }

 private:
  std::vector<std::int64_t> last_fired_at_;
  std::int64_t window_ = 0;
  std::int64_t seen_ = 0;
};

}  // namespace jsae
