#include "jsae/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "jsae/errors.hpp"
#include "jsae/seeding.hpp"

namespace jsae {

namespace {

Eigen::MatrixXd unit_gaussian_columns(Eigen::Index rows, Eigen::Index cols,
                                      std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd mat(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) mat(r, c) = normal(rng);
    double norm = mat.col(c).norm();
    if (norm == 0.0) throw NumericDegeneracy("zero-norm feature column drawn");
    mat.col(c) /= norm;
  }
  return mat;
}

CodedSample draw_sample(const GroundTruthDictionary& dict, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> value(dict.value_lo, dict.value_hi);
  const double p = dict.sparsity / static_cast<double>(dict.n_true());
  CodedSample s;
  s.code = Eigen::VectorXd::Zero(dict.n_true());
  for (Eigen::Index f = 0; f < dict.n_true(); ++f) {
    if (unit(rng) < p) s.code[f] = value(rng);
  }
  s.x = dict.features * s.code;
  return s;
}

}  // namespace

GroundTruthDictionary make_dictionary(Eigen::Index m, Eigen::Index n_true,
                                      double sparsity, std::uint64_t seed) {
  if (m < 1 || n_true < 1) {
    throw std::invalid_argument("make_dictionary: dims must be positive");
  }
  if (!(sparsity > 0.0) || sparsity > static_cast<double>(n_true)) {
    throw std::invalid_argument("make_dictionary: need 0 < sparsity <= n_true");
  }
  GroundTruthDictionary dict;
  dict.sparsity = sparsity;
  std::mt19937_64 rng(seed);
  dict.features = unit_gaussian_columns(m, n_true, rng);
  return dict;
}

std::vector<Eigen::VectorXd> sample_activations(const GroundTruthDictionary& dict,
                                                std::int64_t count,
                                                std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("sample_activations: count < 0");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) out.push_back(draw_sample(dict, rng).x);
  return out;
}

std::vector<CodedSample> sample_with_codes(const GroundTruthDictionary& dict,
                                           std::int64_t count,
                                           std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("sample_with_codes: count < 0");
  std::mt19937_64 rng(seed);
  std::vector<CodedSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) out.push_back(draw_sample(dict, rng));
  return out;
}

SyntheticSource::SyntheticSource(GroundTruthDictionary dict, std::uint64_t seed)
    : dict_(std::move(dict)), rng_(seed) {}

bool SyntheticSource::next(Eigen::VectorXd& out) {
  out = draw_sample(dict_, rng_).x;
  return true;
}

MlpParams make_random_mlp(const MlpDims& dims, MlpKind kind,
                          ActivationKind activation, std::uint64_t seed) {
  if (dims.m_in < 1 || dims.d_mlp < 1 || dims.m_out < 1) {
    throw std::invalid_argument("make_random_mlp: dims must be positive");
  }
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Eigen::Index rows, Eigen::Index cols) {
    double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd mat(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) mat(r, c) = dist(rng);
    return mat;
  };
  MlpParams p;
  p.kind = kind;
  p.activation = activation;
  p.w1 = fill(dims.d_mlp, dims.m_in);
  p.b1 = Eigen::VectorXd::Zero(dims.d_mlp);
  p.w2 = fill(dims.m_out, dims.d_mlp);
  p.b2 = Eigen::VectorXd::Zero(dims.m_out);
  if (kind == MlpKind::Glu) {
    p.w_gate = fill(dims.d_mlp, dims.m_in);
    p.b_gate = Eigen::VectorXd::Zero(dims.d_mlp);
  }
  return p;
}

namespace {

Eigen::MatrixXd matrix_act(ActivationKind kind, const Eigen::MatrixXd& z) {
  return z.unaryExpr([kind](double v) { return act(kind, v); });
}

Eigen::MatrixXd matrix_act_d1(ActivationKind kind, const Eigen::MatrixXd& z) {
  return z.unaryExpr([kind](double v) { return act_d1(kind, v); });
}

double fit_loss(const Eigen::MatrixXd& y, const Eigen::MatrixXd& target) {
  return (y - target).squaredNorm() /
         static_cast<double>(y.rows() * y.cols());
}

// Adam moments for one fit tensor. Plain gradient descent needs tens of
// thousands of steps on these targets; Adam gets below 1e-3 in a few hundred.
struct FitAdam {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
  explicit FitAdam(const Eigen::MatrixXd& shape)
      : m(Eigen::MatrixXd::Zero(shape.rows(), shape.cols())),
        v(Eigen::MatrixXd::Zero(shape.rows(), shape.cols())) {}

  template <typename Param, typename Grad>
  void update(Param&& param, const Grad& grad, double lr, std::int64_t step) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Eigen::MatrixXd g = grad;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

}  // namespace

TrainedMlp make_trained_mlp(const GroundTruthDictionary& dict,
                            Eigen::Index d_mlp, Eigen::Index m_out,
                            MlpKind kind, ActivationKind activation,
                            std::uint64_t seed, const TrainedMlpOptions& opts) {
  if (opts.max_terms < 1) {
    throw std::invalid_argument("make_trained_mlp: max_terms must be positive");
  }
  if (opts.fit_samples < 1 || opts.fit_steps < 0 || !(opts.fit_lr > 0.0)) {
    throw std::invalid_argument("make_trained_mlp: bad fit options");
  }
  const Eigen::Index n_in = dict.n_true();
  const Eigen::Index n_out = opts.n_true_out > 0 ? opts.n_true_out : n_in;

  TrainedMlp tm;

  // Sparse routing of input features to output features.
  std::mt19937_64 map_rng(derive_seed(seed, 1));
  std::uniform_int_distribution<int> terms_dist(1, opts.max_terms);
  std::uniform_real_distribution<double> weight_dist(0.3, 0.9);
  tm.feature_map = Eigen::MatrixXd::Zero(n_out, n_in);
  std::vector<Eigen::Index> all_in(static_cast<std::size_t>(n_in));
  std::iota(all_in.begin(), all_in.end(), Eigen::Index{0});
  for (Eigen::Index r = 0; r < n_out; ++r) {
    int terms = std::min<int>(terms_dist(map_rng), static_cast<int>(n_in));
    std::vector<Eigen::Index> picked;
    std::sample(all_in.begin(), all_in.end(), std::back_inserter(picked),
                terms, map_rng);
    for (Eigen::Index f : picked) tm.feature_map(r, f) = weight_dist(map_rng);
  }

  std::mt19937_64 out_rng(derive_seed(seed, 2));
  tm.out_features = unit_gaussian_columns(m_out, n_out, out_rng);

  MlpDims dims{dict.m(), d_mlp, m_out};
  tm.mlp = make_random_mlp(dims, kind, activation, derive_seed(seed, 3));

  auto samples = sample_with_codes(dict, opts.fit_samples, derive_seed(seed, 4));
  const Eigen::Index t_count = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd xs(dict.m(), t_count);
  Eigen::MatrixXd targets(m_out, t_count);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    xs.col(t) = samples[static_cast<std::size_t>(t)].x;
    targets.col(t) =
        tm.out_features *
        (tm.feature_map * samples[static_cast<std::size_t>(t)].code);
  }

  MlpParams& p = tm.mlp;
  const double grad_scale =
      2.0 / static_cast<double>(m_out * t_count);
  FitAdam a_w1(p.w1), a_b1(p.b1), a_w2(p.w2), a_b2(p.b2);
  FitAdam a_wg(p.w_gate), a_bg(p.b_gate);
  for (std::int64_t it = 0; it < opts.fit_steps; ++it) {
    const std::int64_t step = it + 1;
    if (kind == MlpKind::Standard) {
      Eigen::MatrixXd z = (p.w1 * xs).colwise() + p.b1;
      Eigen::MatrixXd h = matrix_act(activation, z);
      Eigen::MatrixXd y = (p.w2 * h).colwise() + p.b2;
      tm.final_loss = fit_loss(y, targets);
      if (tm.final_loss < opts.target_loss) break;
      Eigen::MatrixXd r = grad_scale * (y - targets);
      Eigen::MatrixXd dh = p.w2.transpose() * r;
      Eigen::MatrixXd dz = matrix_act_d1(activation, z).cwiseProduct(dh);
      a_w2.update(p.w2, r * h.transpose(), opts.fit_lr, step);
      a_b2.update(p.b2, r.rowwise().sum(), opts.fit_lr, step);
      a_w1.update(p.w1, dz * xs.transpose(), opts.fit_lr, step);
      a_b1.update(p.b1, dz.rowwise().sum(), opts.fit_lr, step);
    } else {
      Eigen::MatrixXd g = (p.w_gate * xs).colwise() + p.b_gate;
      Eigen::MatrixXd s = matrix_act(activation, g);
      Eigen::MatrixXd h = (p.w1 * xs).colwise() + p.b1;
      Eigen::MatrixXd z = h.cwiseProduct(s);
      Eigen::MatrixXd y = (p.w2 * z).colwise() + p.b2;
      tm.final_loss = fit_loss(y, targets);
      if (tm.final_loss < opts.target_loss) break;
      Eigen::MatrixXd r = grad_scale * (y - targets);
      Eigen::MatrixXd dz = p.w2.transpose() * r;
      Eigen::MatrixXd dh = dz.cwiseProduct(s);
      Eigen::MatrixXd dg = matrix_act_d1(activation, g).cwiseProduct(dz.cwiseProduct(h));
      a_w2.update(p.w2, r * z.transpose(), opts.fit_lr, step);
      a_b2.update(p.b2, r.rowwise().sum(), opts.fit_lr, step);
      a_w1.update(p.w1, dh * xs.transpose(), opts.fit_lr, step);
      a_b1.update(p.b1, dh.rowwise().sum(), opts.fit_lr, step);
      a_wg.update(p.w_gate, dg * xs.transpose(), opts.fit_lr, step);
      a_bg.update(p.b_gate, dg.rowwise().sum(), opts.fit_lr, step);
    }
  }
  tm.converged = tm.final_loss < opts.target_loss;
  return tm;
}

Eigen::VectorXd mlp_target(const TrainedMlp& tm, const Eigen::VectorXd& code) {
  return tm.out_features * (tm.feature_map * code);
}

ReadoutTask fit_readout(const TrainedMlp& tm, const GroundTruthDictionary& dict,
                        Eigen::Index r, std::int64_t samples,
                        std::uint64_t seed) {
  if (r < 1) throw std::invalid_argument("fit_readout: r must be positive");
  if (samples < 2) throw std::invalid_argument("fit_readout: need >= 2 samples");
  const Eigen::Index n_out = tm.feature_map.rows();
  const Eigen::Index m_out = tm.mlp.m_out();

  ReadoutTask task;
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  task.label_map.resize(r, n_out);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_out));
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < n_out; ++j)
      task.label_map(i, j) = scale * normal(rng);

  auto coded = sample_with_codes(dict, samples, derive_seed(seed, 2));
  const Eigen::Index t_count = static_cast<Eigen::Index>(coded.size());

  // Ridge regression of labels on true MLP outputs, bias absorbed into an
  // augmented coordinate.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m_out + 1, m_out + 1);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m_out + 1, r);
  Eigen::VectorXd aug(m_out + 1);
  for (const CodedSample& cs : coded) {
    Eigen::VectorXd y = mlp_forward(tm.mlp, cs.x).y;
    Eigen::VectorXd label = task.label_map * (tm.feature_map * cs.code);
    aug.head(m_out) = y;
    aug[m_out] = 1.0;
    gram += aug * aug.transpose();
    rhs += aug * label.transpose();
  }
  gram += 1e-6 * static_cast<double>(t_count) *
          Eigen::MatrixXd::Identity(m_out + 1, m_out + 1);
  Eigen::MatrixXd beta = gram.ldlt().solve(rhs);
  task.w = beta.topRows(m_out).transpose();
  task.b = beta.row(m_out).transpose();
  return task;
}

std::vector<Eigen::VectorXd> readout_labels(const TrainedMlp& tm,
                                            const ReadoutTask& task,
                                            const std::vector<CodedSample>& samples) {
  std::vector<Eigen::VectorXd> labels;
  labels.reserve(samples.size());
  for (const CodedSample& cs : samples)
    labels.push_back(task.label_map * (tm.feature_map * cs.code));
  return labels;
}

double readout_loss(const ReadoutTask& task,
                    const std::vector<Eigen::VectorXd>& ys,
                    const std::vector<Eigen::VectorXd>& labels) {
  if (ys.empty() || ys.size() != labels.size()) {
    throw std::invalid_argument("readout_loss: size mismatch");
  }
  const double inv_r = 1.0 / static_cast<double>(task.w.rows());
  double total = 0.0;
  for (std::size_t t = 0; t < ys.size(); ++t) {
    Eigen::VectorXd pred = task.w * ys[t] + task.b;
    total += inv_r * (pred - labels[t]).squaredNorm();
  }
  return total / static_cast<double>(ys.size());
}

}  // namespace jsae
