#include "jsae/activations.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

namespace jsae {
namespace {

// Reference values computed with 50-digit arithmetic (mpmath), truncated to
// more precision than a double carries.
TEST(Activations, GeluTanhReferenceValues) {
  EXPECT_NEAR(act(ActivationKind::GeluTanh, 1.0), 0.8411919906082767047819958,
              1e-15);
  EXPECT_NEAR(act(ActivationKind::GeluTanh, 0.7), 0.5305701347051167512013068,
              1e-15);
  EXPECT_NEAR(act(ActivationKind::GeluTanh, -1.5), -0.1004284230197670775505755,
              1e-15);
  EXPECT_NEAR(act_d1(ActivationKind::GeluTanh, 0.7), 0.9763572186561039668116485,
              1e-14);
  EXPECT_EQ(act(ActivationKind::GeluTanh, 0.0), 0.0);
}

TEST(Activations, GeluErfReferenceValues) {
  EXPECT_NEAR(act(ActivationKind::GeluErf, 1.0), 0.8413447460685429485852325,
              1e-15);
  EXPECT_NEAR(act(ActivationKind::GeluErf, -0.5), -0.1542687693629934481811477,
              1e-15);
  EXPECT_NEAR(act_d1(ActivationKind::GeluErf, 0.7), 0.9766141011336598652260148,
              1e-14);
  EXPECT_EQ(act(ActivationKind::GeluErf, 0.0), 0.0);
}

TEST(Activations, ReluAndIdentityExact) {
  EXPECT_EQ(act(ActivationKind::Relu, 2.5), 2.5);
  EXPECT_EQ(act(ActivationKind::Relu, -2.5), 0.0);
  EXPECT_EQ(act_d1(ActivationKind::Relu, 2.5), 1.0);
  EXPECT_EQ(act_d1(ActivationKind::Relu, -2.5), 0.0);
  EXPECT_EQ(act_d1(ActivationKind::Relu, 0.0), 0.0);
  EXPECT_EQ(act_d2(ActivationKind::Relu, 3.0), 0.0);
  EXPECT_EQ(act_d2(ActivationKind::Relu, 0.0), 0.0);

  EXPECT_EQ(act(ActivationKind::Identity, -7.25), -7.25);
  EXPECT_EQ(act_d1(ActivationKind::Identity, 123.0), 1.0);
  EXPECT_EQ(act_d2(ActivationKind::Identity, 123.0), 0.0);
}

// act_d1 must equal the central difference of act, and act_d2 the central
// difference of act_d1, everywhere the function is smooth.
TEST(Activations, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> dist(-8.0, 8.0);
  const double h1 = 1e-6;
  const double h2 = 1e-5;
  for (ActivationKind kind :
       {ActivationKind::GeluTanh, ActivationKind::GeluErf, ActivationKind::Relu,
        ActivationKind::Identity}) {
    for (int trial = 0; trial < 10000; ++trial) {
      double x = dist(rng);
      if (kind == ActivationKind::Relu && std::abs(x) < 1e-3) continue;

      double fd1 = (act(kind, x + h1) - act(kind, x - h1)) / (2.0 * h1);
      double a1 = act_d1(kind, x);
      EXPECT_NEAR(fd1, a1, 1e-6 * std::max(1.0, std::abs(a1)))
          << to_string(kind) << " d1 at x=" << x;

      double fd2 = (act_d1(kind, x + h2) - act_d1(kind, x - h2)) / (2.0 * h2);
      double a2 = act_d2(kind, x);
      EXPECT_NEAR(fd2, a2, 1e-5 * std::max(1.0, std::abs(a2)))
          << to_string(kind) << " d2 at x=" << x;
    }
  }
}

TEST(Activations, NanPropagates) {
  double nan = std::numeric_limits<double>::quiet_NaN();
  for (ActivationKind kind :
       {ActivationKind::GeluTanh, ActivationKind::GeluErf, ActivationKind::Relu,
        ActivationKind::Identity}) {
    EXPECT_TRUE(std::isnan(act(kind, nan))) << to_string(kind);
    EXPECT_TRUE(std::isnan(act_d1(kind, nan))) << to_string(kind);
    EXPECT_TRUE(std::isnan(act_d2(kind, nan))) << to_string(kind);
  }
}

TEST(Activations, VectorOverloadsMatchScalar) {
  Eigen::VectorXd v(5);
  v << -3.0, -0.4, 0.0, 0.9, 4.2;
  for (ActivationKind kind :
       {ActivationKind::GeluTanh, ActivationKind::GeluErf, ActivationKind::Relu,
        ActivationKind::Identity}) {
    Eigen::VectorXd a = act(kind, v);
    Eigen::VectorXd d1 = act_d1(kind, v);
    Eigen::VectorXd d2 = act_d2(kind, v);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      EXPECT_EQ(a[i], act(kind, v[i]));
      EXPECT_EQ(d1[i], act_d1(kind, v[i]));
      EXPECT_EQ(d2[i], act_d2(kind, v[i]));
    }
  }
}

TEST(Activations, StringRoundTrip) {
  for (ActivationKind kind :
       {ActivationKind::GeluTanh, ActivationKind::GeluErf, ActivationKind::Relu,
        ActivationKind::Identity}) {
    EXPECT_EQ(activation_from_string(to_string(kind)), kind);
  }
  EXPECT_THROW(activation_from_string("swish"), std::invalid_argument);
}

// GeluTanh approximates GeluErf; they agree to a few thousandths but are not
// the same function. Guards against wiring both names to one formula.
TEST(Activations, TanhAndErfVariantsAreClose_ButDistinct) {
  double worst = 0.0;
  for (double x = -4.0; x <= 4.0; x += 0.01) {
    worst = std::max(worst, std::abs(act(ActivationKind::GeluTanh, x) -
                                     act(ActivationKind::GeluErf, x)));
  }
  EXPECT_LT(worst, 0.01);
  EXPECT_GT(worst, 1e-6);
}

}  // namespace
}  // namespace jsae
