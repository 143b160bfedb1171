#include "jsae/mlp.hpp"

#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "jsae/synthetic.hpp"

namespace jsae {
namespace {

MlpParams small_standard() {
  MlpParams p;
  p.kind = MlpKind::Standard;
  p.activation = ActivationKind::Identity;
  p.w1.resize(2, 3);
  p.w1 << 1, 2, 3,
          4, 5, 6;
  p.b1.resize(2);
  p.b1 << 0.5, -0.5;
  p.w2.resize(2, 2);
  p.w2 << 1, 0,
          0, 2;
  p.b2.resize(2);
  p.b2 << 10, 20;
  return p;
}

TEST(Mlp, StandardIdentityByHand) {
  MlpParams p = small_standard();
  Eigen::VectorXd x(3);
  x << 1, 1, 1;
  MlpOutput out = mlp_forward(p, x);
  // hidden_pre = [6.5, 14.5]; y = [6.5 + 10, 29 + 20].
  EXPECT_DOUBLE_EQ(out.cache.hidden_pre[0], 6.5);
  EXPECT_DOUBLE_EQ(out.cache.hidden_pre[1], 14.5);
  EXPECT_DOUBLE_EQ(out.y[0], 16.5);
  EXPECT_DOUBLE_EQ(out.y[1], 49.0);
}

// A Glu whose gate path is pinned at phi == 1 reduces to the Standard
// identity MLP with the same up projection.
TEST(Mlp, GluWithUnitGateMatchesStandard) {
  MlpParams std_mlp = small_standard();

  MlpParams glu = std_mlp;
  glu.kind = MlpKind::Glu;
  glu.activation = ActivationKind::Identity;
  glu.w_gate = Eigen::MatrixXd::Zero(2, 3);
  glu.b_gate = Eigen::VectorXd::Ones(2);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x[i] = dist(rng);
    Eigen::VectorXd a = mlp_forward(std_mlp, x).y;
    Eigen::VectorXd b = mlp_forward(glu, x).y;
    EXPECT_LT((a - b).lpNorm<Eigen::Infinity>(), 1e-14);
  }
}

// Scalar-loop oracle for both kinds.
TEST(Mlp, ForwardMatchesScalarLoops_Property) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (MlpKind kind : {MlpKind::Standard, MlpKind::Glu}) {
    for (ActivationKind actk :
         {ActivationKind::GeluTanh, ActivationKind::Relu}) {
      MlpParams p = make_random_mlp({5, 7, 4}, kind, actk, rng());
      for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd x(5);
        for (int i = 0; i < 5; ++i) x[i] = dist(rng);
        Eigen::VectorXd y = mlp_forward(p, x).y;

        Eigen::VectorXd hidden(7);
        for (Eigen::Index h = 0; h < 7; ++h) {
          double up = p.b1[h];
          for (Eigen::Index i = 0; i < 5; ++i) up += p.w1(h, i) * x[i];
          if (kind == MlpKind::Standard) {
            hidden[h] = act(actk, up);
          } else {
            double gate = p.b_gate[h];
            for (Eigen::Index i = 0; i < 5; ++i) gate += p.w_gate(h, i) * x[i];
            hidden[h] = up * act(actk, gate);
          }
        }
        for (Eigen::Index o = 0; o < 4; ++o) {
          double yo = p.b2[o];
          for (Eigen::Index h = 0; h < 7; ++h) yo += p.w2(o, h) * hidden[h];
          EXPECT_NEAR(y[o], yo, 1e-12);
        }
      }
    }
  }
}

TEST(Mlp, IdentityStandardIsAffine) {
  MlpParams p = make_random_mlp({4, 6, 4}, MlpKind::Standard,
                                ActivationKind::Identity, 21);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd zero_out = mlp_forward(p, Eigen::VectorXd::Zero(4)).y;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a(4), b(4);
    for (int i = 0; i < 4; ++i) {
      a[i] = dist(rng);
      b[i] = dist(rng);
    }
    // f(a + b) - f(0) == (f(a) - f(0)) + (f(b) - f(0)) for affine f.
    Eigen::VectorXd lhs = mlp_forward(p, a + b).y - zero_out;
    Eigen::VectorXd rhs =
        (mlp_forward(p, a).y - zero_out) + (mlp_forward(p, b).y - zero_out);
    EXPECT_LT((lhs - rhs).lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(Mlp, CacheIsDeterministic) {
  MlpParams p = make_random_mlp({3, 5, 3}, MlpKind::Glu,
                                ActivationKind::GeluTanh, 4);
  Eigen::VectorXd x(3);
  x << 0.3, -1.2, 0.8;
  MlpOutput a = mlp_forward(p, x);
  MlpOutput b = mlp_forward(p, x);
  EXPECT_EQ((a.y - b.y).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.cache.gate_pre - b.cache.gate_pre).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.cache.hidden - b.cache.hidden).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, ValidateCatchesShapeErrors) {
  MlpParams p = small_standard();
  EXPECT_NO_THROW(validate(p));

  MlpParams bad = p;
  bad.b1.resize(3);
  bad.b1.setZero();
  EXPECT_THROW(validate(bad), std::invalid_argument);

  bad = p;
  bad.w2.resize(2, 5);
  bad.w2.setZero();
  EXPECT_THROW(validate(bad), std::invalid_argument);

  // Standard must not carry gate tensors.
  bad = p;
  bad.w_gate = Eigen::MatrixXd::Zero(2, 3);
  EXPECT_THROW(validate(bad), std::invalid_argument);

  // Glu must carry them, with matching shapes.
  bad = p;
  bad.kind = MlpKind::Glu;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad.w_gate = Eigen::MatrixXd::Zero(2, 3);
  bad.b_gate = Eigen::VectorXd::Zero(2);
  EXPECT_NO_THROW(validate(bad));

  EXPECT_THROW(mlp_forward(p, Eigen::VectorXd::Zero(7)), std::invalid_argument);
}

TEST(Mlp, KindStringRoundTrip) {
  EXPECT_EQ(mlp_kind_from_string(to_string(MlpKind::Standard)), MlpKind::Standard);
  EXPECT_EQ(mlp_kind_from_string(to_string(MlpKind::Glu)), MlpKind::Glu);
  EXPECT_THROW(mlp_kind_from_string("moe"), std::invalid_argument);
}

}  // namespace
}  // namespace jsae
