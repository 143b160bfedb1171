#pragma once

#include <cstdint>
#include <vector>

#include "jsae/activation_source.hpp"
#include "jsae/loss.hpp"
#include "jsae/mlp.hpp"
#include "jsae/sae.hpp"

namespace jsae {

struct TrainConfig {
  // Latent sizes of the two SAEs and their shared TopK parameter.
  Eigen::Index n_x = 0;
  Eigen::Index n_y = 0;
  int k = 0;

  double lambda = 0.0;

  // Peak learning rate with a linear ramp over the first warmup_frac of the
  // steps, a constant plateau, and a linear decay to zero over the final
  // decay_frac. lambda ramps linearly over its own first lambda_warmup_frac.
  double lr_max = 5e-4;
  double warmup_frac = 0.01;
  double decay_frac = 0.20;
  double lambda_warmup_frac = 0.05;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  std::int64_t total_tokens = 0;
  std::int64_t batch_tokens = 1024;
  // The shuffle buffer holds this many batches at a time.
  int buffer_batches = 32;

  std::int64_t dead_window_tokens = 32768;
  std::uint64_t seed = 0;
  int threads = 1;
};

void validate(const TrainConfig& cfg);

// Adam moments for every SAE tensor plus the shared step counter.
struct AdamState {
  SaeGradients m;
  SaeGradients v;
  std::int64_t step = 0;
};

AdamState init_adam(const SaePair& pair);
void adam_step(SaePair& pair, AdamState& state, const SaeGradients& g,
               double lr, const TrainConfig& cfg);

// Scheduled learning rate / penalty weight at a given optimizer step. Both
// hit their plateau value exactly at the end of the ramp.
double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);
double lambda_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

struct StepMetrics {
  std::int64_t step = 0;
  double lr = 0.0;
  double lambda = 0.0;
  double mse_x = 0.0;
  double mse_y = 0.0;
  double jac_l1 = 0.0;
  double total = 0.0;
  Eigen::Index dead_x = 0;
  Eigen::Index dead_y = 0;
};

struct TrainResult {
  SaePair pair;
  std::vector<StepMetrics> timeline;
};

// Full training loop: seeded init, buffered shuffle of the incoming stream,
// per-batch Adam updates with decoder renormalization, and dead-latent
// tracking. Runs total_tokens / batch_tokens full batches; a config whose
// token budget is below one batch returns the initial parameters untouched.
TrainResult train(const MlpParams& mlp, ActivationSource& source,
                  const TrainConfig& cfg);

}  // namespace jsae
