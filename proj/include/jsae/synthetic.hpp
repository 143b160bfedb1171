#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "jsae/activation_source.hpp"
#include "jsae/mlp.hpp"

namespace jsae {

// Ground truth for synthetic activations: x = features * code with sparse
// non-negative codes. Each feature fires independently with probability
// sparsity / n_true, with value uniform in [value_lo, value_hi].
struct GroundTruthDictionary {
  Eigen::MatrixXd features;
  double sparsity = 4.0;
  double value_lo = 0.5;
  double value_hi = 3.0;

  Eigen::Index m() const { return features.rows(); }
  Eigen::Index n_true() const { return features.cols(); }
};

GroundTruthDictionary make_dictionary(Eigen::Index m, Eigen::Index n_true,
                                      double sparsity, std::uint64_t seed);

struct CodedSample {
  Eigen::VectorXd x;
  Eigen::VectorXd code;
};

std::vector<Eigen::VectorXd> sample_activations(const GroundTruthDictionary& dict,
                                                std::int64_t count,
                                                std::uint64_t seed);
std::vector<CodedSample> sample_with_codes(const GroundTruthDictionary& dict,
                                           std::int64_t count,
                                           std::uint64_t seed);

// Endless stream of dictionary samples; the first `count` tokens match
// sample_activations(dict, count, seed) exactly.
class SyntheticSource final : public ActivationSource {
 public:
  SyntheticSource(GroundTruthDictionary dict, std::uint64_t seed);
  Eigen::Index width() const override { return dict_.m(); }
  bool next(Eigen::VectorXd& out) override;

 private:
  GroundTruthDictionary dict_;
  std::mt19937_64 rng_;
};

struct MlpDims {
  Eigen::Index m_in = 0;
  Eigen::Index d_mlp = 0;
  Eigen::Index m_out = 0;
};

// Uniform init scaled by 1/sqrt(fan_in), zero biases.
MlpParams make_random_mlp(const MlpDims& dims, MlpKind kind,
                          ActivationKind activation, std::uint64_t seed);

struct TrainedMlpOptions {
  // Output-side feature count; 0 means match the input dictionary.
  Eigen::Index n_true_out = 0;
  // Each output feature mixes at most this many input features.
  int max_terms = 3;
  std::int64_t fit_samples = 4096;
  std::int64_t fit_steps = 4000;
  double fit_lr = 0.01;
  double target_loss = 1e-3;
};

// An MLP fitted by full-batch Adam to emit its own sparse feature code:
// targets are out_features * (feature_map * code).
struct TrainedMlp {
  MlpParams mlp;
  Eigen::MatrixXd feature_map;   // n_true_out by n_true_in, sparse rows
  Eigen::MatrixXd out_features;  // m_out by n_true_out, unit columns
  double final_loss = 0.0;
  bool converged = false;
};

TrainedMlp make_trained_mlp(const GroundTruthDictionary& dict,
                            Eigen::Index d_mlp, Eigen::Index m_out,
                            MlpKind kind, ActivationKind activation,
                            std::uint64_t seed,
                            const TrainedMlpOptions& opts = {});

// Ground-truth targets for a sample under a trained MLP's feature map.
Eigen::VectorXd mlp_target(const TrainedMlp& tm, const Eigen::VectorXd& code);

// A linear probe task on MLP outputs, used to score reconstructions by the
// downstream loss they induce. Labels are a seeded linear readout of the
// output feature code; (w, b) is the ridge fit from true MLP outputs.
struct ReadoutTask {
  Eigen::MatrixXd label_map;  // r by n_true_out
  Eigen::MatrixXd w;          // r by m_out
  Eigen::VectorXd b;
};

ReadoutTask fit_readout(const TrainedMlp& tm, const GroundTruthDictionary& dict,
                        Eigen::Index r, std::int64_t samples,
                        std::uint64_t seed);

std::vector<Eigen::VectorXd> readout_labels(const TrainedMlp& tm,
                                            const ReadoutTask& task,
                                            const std::vector<CodedSample>& samples);

// Mean squared readout error of candidate MLP outputs against labels.
double readout_loss(const ReadoutTask& task,
                    const std::vector<Eigen::VectorXd>& ys,
                    const std::vector<Eigen::VectorXd>& labels);

}  // namespace jsae
