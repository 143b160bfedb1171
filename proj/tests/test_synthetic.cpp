#include "jsae/synthetic.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "jsae/eval.hpp"

namespace jsae {
namespace {

TEST(Dictionary, ShapesAndDeterminism) {
  GroundTruthDictionary a = make_dictionary(16, 64, 4.0, 7);
  EXPECT_EQ(a.m(), 16);
  EXPECT_EQ(a.n_true(), 64);
  EXPECT_EQ(a.sparsity, 4.0);
  for (Eigen::Index j = 0; j < a.n_true(); ++j) {
    EXPECT_NEAR(a.features.col(j).norm(), 1.0, 1e-12);
  }
  GroundTruthDictionary b = make_dictionary(16, 64, 4.0, 7);
  EXPECT_TRUE(a.features == b.features);
  GroundTruthDictionary c = make_dictionary(16, 64, 4.0, 8);
  EXPECT_FALSE(a.features == c.features);
}

TEST(Dictionary, RejectsBadArguments) {
  EXPECT_THROW(make_dictionary(0, 8, 4.0, 1), std::invalid_argument);
  EXPECT_THROW(make_dictionary(8, 0, 4.0, 1), std::invalid_argument);
  EXPECT_THROW(make_dictionary(8, 16, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(make_dictionary(8, 16, 17.0, 1), std::invalid_argument);
}

TEST(Sampling, DeterministicAndConsistentWithCodes) {
  GroundTruthDictionary dict = make_dictionary(12, 48, 4.0, 3);
  auto xs = sample_activations(dict, 200, 5);
  auto again = sample_activations(dict, 200, 5);
  auto coded = sample_with_codes(dict, 200, 5);
  ASSERT_EQ(xs.size(), 200u);
  ASSERT_EQ(coded.size(), 200u);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    EXPECT_TRUE(xs[t] == again[t]);
    EXPECT_TRUE(xs[t] == coded[t].x);
    // x really is features * code.
    Eigen::VectorXd rebuilt = dict.features * coded[t].code;
    EXPECT_LT((rebuilt - xs[t]).lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(Sampling, SourceStreamsTheSameTokens) {
  GroundTruthDictionary dict = make_dictionary(12, 48, 4.0, 3);
  auto xs = sample_activations(dict, 64, 9);
  SyntheticSource source(dict, 9);
  EXPECT_EQ(source.width(), 12);
  Eigen::VectorXd x(12);
  for (int t = 0; t < 64; ++t) {
    ASSERT_TRUE(source.next(x));
    EXPECT_TRUE(x == xs[static_cast<std::size_t>(t)]);
  }
}

TEST(Sampling, CodesRespectTheDistribution) {
  GroundTruthDictionary dict = make_dictionary(8, 100, 5.0, 11);
  auto coded = sample_with_codes(dict, 20000, 13);
  double active = 0.0;
  double lo = 1e9, hi = -1e9;
  for (const auto& s : coded) {
    for (Eigen::Index f = 0; f < s.code.size(); ++f) {
      if (s.code[f] != 0.0) {
        active += 1.0;
        lo = std::min(lo, s.code[f]);
        hi = std::max(hi, s.code[f]);
      }
    }
  }
  double mean_active = active / 20000.0;
  // Expected number of active features per token is the sparsity parameter.
  EXPECT_NEAR(mean_active, 5.0, 0.05 * 5.0);
  EXPECT_GE(lo, dict.value_lo);
  EXPECT_LE(hi, dict.value_hi);
  EXPECT_LT(lo, dict.value_lo + 0.1);
  EXPECT_GT(hi, dict.value_hi - 0.1);
}

TEST(Sampling, SingleFeatureTokensAreFeatureMultiples) {
  GroundTruthDictionary dict = make_dictionary(6, 1, 0.9, 17);
  auto coded = sample_with_codes(dict, 500, 19);
  int fired = 0;
  for (const auto& s : coded) {
    if (s.code[0] == 0.0) {
      EXPECT_TRUE(s.x.isZero(0.0));
      continue;
    }
    ++fired;
    Eigen::VectorXd want = dict.features.col(0) * s.code[0];
    EXPECT_LT((s.x - want).lpNorm<Eigen::Infinity>(), 1e-15);
  }
  EXPECT_GT(fired, 300);
}

TEST(RandomMlp, ShapesScalesAndKinds) {
  MlpParams p = make_random_mlp({8, 32, 12}, MlpKind::Standard,
                                ActivationKind::GeluTanh, 23);
  EXPECT_NO_THROW(validate(p));
  EXPECT_EQ(p.m_in(), 8);
  EXPECT_EQ(p.d_mlp(), 32);
  EXPECT_EQ(p.m_out(), 12);
  EXPECT_LE(p.w1.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(8.0));
  EXPECT_LE(p.w2.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(32.0));
  EXPECT_TRUE(p.b1.isZero(0.0));
  EXPECT_EQ(p.w_gate.size(), 0);

  MlpParams g = make_random_mlp({8, 32, 12}, MlpKind::Glu,
                                ActivationKind::GeluTanh, 23);
  EXPECT_NO_THROW(validate(g));
  EXPECT_EQ(g.w_gate.rows(), 32);
  EXPECT_EQ(g.w_gate.cols(), 8);
  EXPECT_FALSE(g.w_gate == g.w1);

  MlpParams p2 = make_random_mlp({8, 32, 12}, MlpKind::Standard,
                                 ActivationKind::GeluTanh, 23);
  EXPECT_TRUE(p.w1 == p2.w1);
}

TEST(TrainedMlp, FitsItsFeatureTargets) {
  GroundTruthDictionary dict = make_dictionary(16, 32, 3.0, 29);
  TrainedMlpOptions opts;
  opts.fit_samples = 2048;
  opts.fit_steps = 1500;
  TrainedMlp tm = make_trained_mlp(dict, 48, 16, MlpKind::Standard,
                                   ActivationKind::GeluTanh, 31, opts);
  EXPECT_NO_THROW(validate(tm.mlp));
  EXPECT_EQ(tm.feature_map.rows(), 32);
  EXPECT_EQ(tm.feature_map.cols(), 32);
  EXPECT_EQ(tm.out_features.rows(), 16);
  EXPECT_LT(tm.final_loss, 0.05);

  // Feature map rows stay sparse with at most max_terms mixtures.
  for (Eigen::Index r = 0; r < tm.feature_map.rows(); ++r) {
    int nonzero = 0;
    for (Eigen::Index c = 0; c < tm.feature_map.cols(); ++c) {
      if (tm.feature_map(r, c) != 0.0) ++nonzero;
    }
    EXPECT_GE(nonzero, 1);
    EXPECT_LE(nonzero, opts.max_terms);
  }

  // Held-out check: the fitted MLP beats an untrained one of the same shape
  // at predicting the ground-truth targets by a wide margin.
  auto held_out = sample_with_codes(dict, 512, 37);
  MlpParams random_mlp = make_random_mlp({16, 48, 16}, MlpKind::Standard,
                                         ActivationKind::GeluTanh, 31);
  double fitted_err = 0.0, random_err = 0.0;
  for (const auto& s : held_out) {
    Eigen::VectorXd target = mlp_target(tm, s.code);
    fitted_err += (mlp_forward(tm.mlp, s.x).y - target).squaredNorm();
    random_err += (mlp_forward(random_mlp, s.x).y - target).squaredNorm();
  }
  EXPECT_LT(fitted_err, 0.2 * random_err);
}

TEST(TrainedMlp, DeterministicAcrossCalls) {
  GroundTruthDictionary dict = make_dictionary(8, 16, 3.0, 41);
  TrainedMlpOptions opts;
  opts.fit_samples = 512;
  opts.fit_steps = 200;
  TrainedMlp a = make_trained_mlp(dict, 16, 8, MlpKind::Glu,
                                  ActivationKind::GeluTanh, 43, opts);
  TrainedMlp b = make_trained_mlp(dict, 16, 8, MlpKind::Glu,
                                  ActivationKind::GeluTanh, 43, opts);
  EXPECT_TRUE(a.mlp.w1 == b.mlp.w1);
  EXPECT_TRUE(a.mlp.w_gate == b.mlp.w_gate);
  EXPECT_TRUE(a.feature_map == b.feature_map);
  EXPECT_EQ(a.final_loss, b.final_loss);
}

// The readout cannot be exact (the output code is wider than the MLP output,
// so its labels are not a linear function of y), but true outputs must beat
// the zero baseline clearly, and the downstream score built on it must rank
// reconstructions by quality.
TEST(Readout, ScoresReconstructionsMonotonically) {
  GroundTruthDictionary dict = make_dictionary(12, 24, 3.0, 47);
  TrainedMlpOptions opts;
  opts.fit_samples = 2048;
  opts.fit_steps = 1200;
  TrainedMlp tm = make_trained_mlp(dict, 32, 12, MlpKind::Standard,
                                   ActivationKind::GeluTanh, 53, opts);
  ReadoutTask task = fit_readout(tm, dict, 6, 1024, 59);
  EXPECT_EQ(task.w.rows(), 6);
  EXPECT_EQ(task.w.cols(), 12);

  auto samples = sample_with_codes(dict, 256, 61);
  auto labels = readout_labels(tm, task, samples);
  ASSERT_EQ(labels.size(), samples.size());

  std::vector<Eigen::VectorXd> true_ys;
  std::vector<Eigen::VectorXd> zero_ys;
  for (const auto& s : samples) {
    true_ys.push_back(mlp_forward(tm.mlp, s.x).y);
    zero_ys.push_back(Eigen::VectorXd::Zero(12));
  }
  double loss_true = readout_loss(task, true_ys, labels);
  double loss_zero = readout_loss(task, zero_ys, labels);
  EXPECT_LT(loss_true, 0.75 * loss_zero);

  TaskLoss tl = [&task, &labels](const std::vector<Eigen::VectorXd>& cands) {
    return readout_loss(task, cands, labels);
  };
  EXPECT_NEAR(ce_score_analog(tl, true_ys, true_ys), 1.0, 1e-12);

  // Corrupt the outputs with growing noise; the score must fall with it.
  std::mt19937_64 rng(67);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto corrupted = [&](double scale) {
    std::vector<Eigen::VectorXd> out = true_ys;
    for (auto& y : out) {
      for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += scale * noise(rng);
    }
    return out;
  };
  double ce_small = ce_score_analog(tl, true_ys, corrupted(0.05));
  double ce_mid = ce_score_analog(tl, true_ys, corrupted(0.5));
  double ce_big = ce_score_analog(tl, true_ys, corrupted(4.0));
  EXPECT_GT(ce_small, 0.9);
  EXPECT_LT(ce_small, 1.05);
  EXPECT_GT(ce_small, ce_mid);
  EXPECT_GT(ce_mid, ce_big);
}

}  // namespace
}  // namespace jsae
