#include "jsae/eval.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "jsae/errors.hpp"
#include "jsae/synthetic.hpp"

namespace jsae {
namespace {

std::vector<Eigen::VectorXd> random_vectors(int count, Eigen::Index dim,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  for (int t = 0; t < count; ++t) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = dist(rng);
    out.push_back(v);
  }
  return out;
}

TEST(ExplainedVariance, PerfectAndMeanBaselines) {
  auto xs = random_vectors(50, 6, 1);
  EXPECT_DOUBLE_EQ(explained_variance(xs, xs), 1.0);

  // Predicting the per-dimension mean explains exactly nothing.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(6);
  for (const auto& x : xs) mean += x;
  mean /= 50.0;
  std::vector<Eigen::VectorXd> means(50, mean);
  EXPECT_NEAR(explained_variance(xs, means), 0.0, 1e-12);
}

TEST(ExplainedVariance, MatchesScalarFormula) {
  auto xs = random_vectors(40, 5, 3);
  auto rs = random_vectors(40, 5, 4);
  double got = explained_variance(xs, rs);

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(5);
  for (const auto& x : xs) mean += x;
  mean /= 40.0;
  double sse = 0.0, var = 0.0;
  for (int t = 0; t < 40; ++t) {
    sse += (xs[t] - rs[t]).squaredNorm();
    var += (xs[t] - mean).squaredNorm();
  }
  EXPECT_NEAR(got, 1.0 - sse / var, 1e-12);
}

TEST(ExplainedVariance, ZeroVarianceThrows) {
  std::vector<Eigen::VectorXd> constant(10, Eigen::VectorXd::Ones(3));
  EXPECT_THROW(explained_variance(constant, constant), NumericDegeneracy);
  EXPECT_THROW(explained_variance({}, {}), std::invalid_argument);
  auto xs = random_vectors(4, 3, 9);
  auto rs = random_vectors(5, 3, 9);
  EXPECT_THROW(explained_variance(xs, rs), std::invalid_argument);
}

TEST(Cosine, KnownAnglesAndZeroRejection) {
  Eigen::VectorXd a(2), b(2), c(2);
  a << 1, 0;
  b << 0, 1;
  c << 1, 1;
  EXPECT_NEAR(mean_cosine_similarity({a}, {a}), 1.0, 1e-15);
  EXPECT_NEAR(mean_cosine_similarity({a}, {b}), 0.0, 1e-15);
  EXPECT_NEAR(mean_cosine_similarity({a, a}, {c, a}),
              0.5 * (1.0 / std::sqrt(2.0) + 1.0), 1e-15);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(mean_cosine_similarity({a}, {z}), NumericDegeneracy);
  EXPECT_THROW(mean_cosine_similarity({z}, {a}), NumericDegeneracy);
}

TEST(CeScoreAnalog, PerfectAndUselessReconstructions) {
  // Task loss: mean squared distance of the candidates to a fixed target.
  Eigen::VectorXd target(2);
  target << 2.0, -1.0;
  TaskLoss loss = [target](const std::vector<Eigen::VectorXd>& vs) {
    double acc = 0.0;
    for (const auto& v : vs) acc += (v - target).squaredNorm();
    return acc / static_cast<double>(vs.size());
  };
  auto originals = random_vectors(30, 2, 11);
  EXPECT_NEAR(ce_score_analog(loss, originals, originals), 1.0, 1e-12);

  std::vector<Eigen::VectorXd> zeros(30, Eigen::VectorXd::Zero(2));
  EXPECT_NEAR(ce_score_analog(loss, originals, zeros), 0.0, 1e-12);

  // Degenerate: originals are no better than zeros.
  EXPECT_THROW(ce_score_analog(loss, zeros, zeros), NumericDegeneracy);
}

ActiveJacobian block_of(const Eigen::MatrixXd& values, Eigen::Index n_y,
                        Eigen::Index n_x) {
  ActiveJacobian aj;
  aj.values = values;
  aj.n_y = n_y;
  aj.n_x = n_x;
  for (Eigen::Index r = 0; r < values.rows(); ++r) aj.row_indices.push_back(r);
  for (Eigen::Index c = 0; c < values.cols(); ++c) aj.col_indices.push_back(c);
  return aj;
}

TEST(JacobianStats, ThresholdFractionsUseKSquaredDenominator) {
  Eigen::MatrixXd v(2, 2);
  v << 0.5, 0.02,
       0.005, 0.0;
  // k = 3: denominator is 9 per token even though only 4 entries exist.
  auto fracs = jacobian_threshold_fractions({block_of(v, 8, 8)}, {0.001, 0.01, 0.1}, 3);
  EXPECT_NEAR(fracs.at(0.1), 1.0 / 9.0, 1e-15);
  EXPECT_NEAR(fracs.at(0.01), 2.0 / 9.0, 1e-15);
  EXPECT_NEAR(fracs.at(0.001), 3.0 / 9.0, 1e-15);

  EXPECT_THROW(jacobian_threshold_fractions({}, {0.1}, 3),
               std::invalid_argument);
  EXPECT_THROW(jacobian_threshold_fractions({block_of(v, 8, 8)}, {-0.5}, 3),
               std::invalid_argument);
}

TEST(JacobianStats, ThresholdFractionsAreMonotone_Property) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> dist(0.0, 0.05);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::Index r = 1 + static_cast<Eigen::Index>(rng() % 4);
    Eigen::Index c = 1 + static_cast<Eigen::Index>(rng() % 4);
    Eigen::MatrixXd v(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) v(i, j) = dist(rng);
    auto fracs = jacobian_threshold_fractions({block_of(v, 6, 6)},
                                              {0.001, 0.01, 0.1}, 4);
    EXPECT_GE(fracs.at(0.001), fracs.at(0.01));
    EXPECT_GE(fracs.at(0.01), fracs.at(0.1));
    EXPECT_LE(fracs.at(0.001), 1.0);
    EXPECT_GE(fracs.at(0.1), 0.0);
  }
}

TEST(JacobianStats, LpNormsOfAKnownBlock) {
  Eigen::MatrixXd v(1, 2);
  v << 3.0, -4.0;
  auto norms = jacobian_lp_norms(
      {block_of(v, 4, 4)},
      {1.0, 2.0, std::numeric_limits<double>::infinity()});
  EXPECT_NEAR(norms.at(1.0), 7.0, 1e-15);
  EXPECT_NEAR(norms.at(2.0), 5.0, 1e-15);
  EXPECT_NEAR(norms.at(std::numeric_limits<double>::infinity()), 4.0, 1e-15);
  EXPECT_THROW(jacobian_lp_norms({block_of(v, 4, 4)}, {0.5}),
               std::invalid_argument);
}

TEST(JacobianStats, LpNormsDecreaseInP_Property) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> dist(0.0, 1.0);
  const double inf = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::Index r = 1 + static_cast<Eigen::Index>(rng() % 4);
    Eigen::Index c = 1 + static_cast<Eigen::Index>(rng() % 4);
    Eigen::MatrixXd v(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) v(i, j) = dist(rng);
    auto norms = jacobian_lp_norms({block_of(v, 8, 8)}, {1.0, 2.0, 4.0, inf});
    EXPECT_GE(norms.at(1.0) + 1e-15, norms.at(2.0));
    EXPECT_GE(norms.at(2.0) + 1e-15, norms.at(4.0));
    EXPECT_GE(norms.at(4.0) + 1e-15, norms.at(inf));
  }
}

TEST(JacobianStats, GlobalMeanMasksRowsByFiring) {
  // Token 1: row 0 fires with |J| = 0.2; token 2: rows 0 and 1 fire.
  ActiveJacobian t1;
  t1.n_y = 3;
  t1.n_x = 2;
  t1.row_indices = {0};
  t1.col_indices = {0};
  t1.values.resize(1, 1);
  t1.values << 0.2;

  ActiveJacobian t2;
  t2.n_y = 3;
  t2.n_x = 2;
  t2.row_indices = {0, 1};
  t2.col_indices = {0, 1};
  t2.values.resize(2, 2);
  t2.values << -0.4, 0.0,
                0.05, 0.0;

  GlobalMeanJacobian g = global_mean_jacobian({t1, t2}, {0.01, 0.1});
  // Row 0 fired twice: mean over both tokens. Row 1 fired once.
  EXPECT_NEAR(g.mean(0, 0), (0.2 + 0.4) / 2.0, 1e-15);
  EXPECT_NEAR(g.mean(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(g.mean(1, 0), 0.05, 1e-15);
  EXPECT_EQ(g.mean(2, 0), 0.0);
  // Fractions over all 6 entries.
  EXPECT_NEAR(g.frac_above.at(0.01), 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(g.frac_above.at(0.1), 1.0 / 6.0, 1e-15);
}

TEST(Evaluate, EndToEndReportIsCoherent) {
  GroundTruthDictionary dict = make_dictionary(8, 16, 3.0, 19);
  MlpParams mlp = make_random_mlp({8, 16, 8}, MlpKind::Standard,
                                  ActivationKind::GeluTanh, 20);
  SaePair pair{init_sae(8, 32, 4, 21), init_sae(8, 32, 4, 22)};
  auto tokens = sample_activations(dict, 200, 23);

  EvalReport r = evaluate(mlp, pair, tokens);
  EXPECT_EQ(r.tokens, 200);
  EXPECT_GT(r.mse_x, 0.0);
  EXPECT_GT(r.mse_y, 0.0);
  EXPECT_LT(r.explained_variance_x, 1.0);
  EXPECT_LT(r.explained_variance_y, 1.0);
  EXPECT_LE(r.cosine_x, 1.0);
  EXPECT_FALSE(r.ce_score_x.has_value());
  EXPECT_GE(r.jac_frac_above.at(0.001), r.jac_frac_above.at(0.01));
  EXPECT_GE(r.dead_x, 0);
  EXPECT_LE(r.dead_x, 32);

  // Identity autoencoders on a strictly positive stream reconstruct exactly.
  Eigen::Index m = 8;
  SaeParams ident;
  ident.k = static_cast<int>(m);
  ident.w_enc = Eigen::MatrixXd::Identity(m, m);
  ident.b_enc = Eigen::VectorXd::Zero(m);
  ident.w_dec = Eigen::MatrixXd::Identity(m, m);
  ident.b_dec = Eigen::VectorXd::Zero(m);
  MlpParams exp_mlp = mlp;
  exp_mlp.b2.setConstant(10.0);  // keep outputs positive
  std::vector<Eigen::VectorXd> positive;
  for (const auto& x : tokens) positive.push_back(x.cwiseAbs().array() + 0.5);
  EvalReport perfect = evaluate(exp_mlp, SaePair{ident, ident}, positive);
  EXPECT_NEAR(perfect.mse_x, 0.0, 1e-20);
  EXPECT_NEAR(perfect.explained_variance_x, 1.0, 1e-12);
  EXPECT_NEAR(perfect.cosine_x, 1.0, 1e-12);
  EXPECT_EQ(perfect.dead_x, 0);
}

TEST(Evaluate, CountsSkippedZeroTokensInsteadOfFailing) {
  GroundTruthDictionary dict = make_dictionary(8, 16, 3.0, 29);
  MlpParams mlp = make_random_mlp({8, 16, 8}, MlpKind::Standard,
                                  ActivationKind::GeluTanh, 30);
  SaePair pair{init_sae(8, 32, 4, 31), init_sae(8, 32, 4, 32)};
  auto tokens = sample_activations(dict, 50, 33);
  tokens[7].setZero();
  tokens[19].setZero();
  EvalReport r = evaluate(mlp, pair, tokens);
  EXPECT_GE(r.cosine_skipped_x, 2);
  EXPECT_TRUE(std::isfinite(r.cosine_x));
}

}  // namespace
}  // namespace jsae
