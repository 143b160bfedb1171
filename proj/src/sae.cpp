#include "jsae/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "jsae/errors.hpp"

namespace jsae {

Eigen::VectorXd SparseActivation::to_dense() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (std::size_t a = 0; a < indices.size(); ++a) out[indices[a]] = values[a];
  return out;
}

double SparseActivation::value_at(Eigen::Index i) const {
  auto it = std::lower_bound(indices.begin(), indices.end(), i);
  if (it == indices.end() || *it != i) return 0.0;
  return values[static_cast<std::size_t>(it - indices.begin())];
}

SparseActivation topk(const Eigen::VectorXd& v, int k) {
  if (k < 1 || k > v.size()) {
    throw std::invalid_argument("topk: k must be in [1, n], got k=" +
                                std::to_string(k) + " for n=" +
                                std::to_string(v.size()));
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto clamped = [&v](Eigen::Index i) { return v[i] > 0.0 ? v[i] : 0.0; };
  auto mid = order.begin() + k;
  std::partial_sort(order.begin(), mid, order.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      double ca = clamped(a), cb = clamped(b);
                      if (ca != cb) return ca > cb;
                      return a < b;
                    });

  SparseActivation s;
  s.n = v.size();
  s.k = k;
  order.erase(mid, order.end());
  // Clamped-to-zero entries never make the cut.
  std::erase_if(order, [&](Eigen::Index i) { return clamped(i) == 0.0; });
  std::sort(order.begin(), order.end());
  s.indices = std::move(order);
  s.values.reserve(s.indices.size());
  for (Eigen::Index i : s.indices) s.values.push_back(v[i]);
  return s;
}

SparseActivation encode(const SaeParams& sae, const Eigen::VectorXd& x) {
  if (x.size() != sae.m()) {
    throw std::invalid_argument("encode: input has size " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(sae.m()));
  }
  Eigen::VectorXd pre = sae.w_enc * x + sae.b_enc;
  return topk(pre, sae.k);
}

Eigen::VectorXd decode(const SaeParams& sae, const SparseActivation& s) {
  if (s.n != sae.n()) {
    throw std::invalid_argument("decode: latent has n=" + std::to_string(s.n) +
                                ", expected " + std::to_string(sae.n()));
  }
  Eigen::VectorXd out = sae.b_dec;
  for (std::size_t a = 0; a < s.indices.size(); ++a) {
    Eigen::Index i = s.indices[a];
    if (i < 0 || i >= sae.n()) {
      throw std::invalid_argument("decode: latent index " + std::to_string(i) +
                                  " out of range");
    }
    out += s.values[a] * sae.w_dec.col(i);
  }
  return out;
}

SaeParams init_sae(Eigen::Index m, Eigen::Index n, int k, std::uint64_t seed) {
  if (m < 1 || n < 1) throw std::invalid_argument("init_sae: dims must be positive");
  if (k < 1 || k > n) throw std::invalid_argument("init_sae: need 1 <= k <= n");
  SaeParams sae;
  sae.k = k;
  std::mt19937_64 rng(seed);
  double bound = 1.0 / std::sqrt(static_cast<double>(m));
  std::uniform_real_distribution<double> dist(-bound, bound);
  sae.w_enc.resize(n, m);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < m; ++c) sae.w_enc(r, c) = dist(rng);
  sae.b_enc = Eigen::VectorXd::Zero(n);
  sae.w_dec = sae.w_enc.transpose();
  sae.b_dec = Eigen::VectorXd::Zero(m);
  renormalize_decoder(sae);
  return sae;
}

void renormalize_decoder(SaeParams& sae) {
  for (Eigen::Index j = 0; j < sae.w_dec.cols(); ++j) {
    double norm = sae.w_dec.col(j).norm();
    if (norm == 0.0) {
      throw NumericDegeneracy("renormalize_decoder: decoder column " +
                              std::to_string(j) + " has zero norm");
    }
    sae.w_dec.col(j) /= norm;
  }
}

namespace {

std::size_t checked_latent_count(Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("DeadLatentTracker: n must be positive");
  return static_cast<std::size_t>(n);
}

}  // namespace

DeadLatentTracker::DeadLatentTracker(Eigen::Index n, std::int64_t window_tokens)
    : last_fired_at_(checked_latent_count(n), 0), window_(window_tokens) {
  if (window_tokens < 1)
    throw std::invalid_argument("DeadLatentTracker: window must be positive");
}

void DeadLatentTracker::observe(const SparseActivation& s) {
  if (s.n != size()) {
    throw std::invalid_argument("DeadLatentTracker: latent size mismatch");
  }
  observe(s.indices);
}

void DeadLatentTracker::observe(const std::vector<Eigen::Index>& selected) {
  ++seen_;
  for (Eigen::Index i : selected) {
    if (i < 0 || i >= size()) {
      throw std::invalid_argument("DeadLatentTracker: index out of range");
    }
    last_fired_at_[static_cast<std::size_t>(i)] = seen_;
  }
}

std::int64_t DeadLatentTracker::gap(Eigen::Index i) const {
  if (i < 0 || i >= size()) {
    throw std::invalid_argument("DeadLatentTracker: index out of range");
  }
  return seen_ - last_fired_at_[static_cast<std::size_t>(i)];
}

Eigen::Index DeadLatentTracker::dead_count() const {
  Eigen::Index dead = 0;
  for (std::size_t i = 0; i < last_fired_at_.size(); ++i) {
    if (seen_ - last_fired_at_[i] >= window_) ++dead;
  }
  return dead;
}

}  // namespace jsae
