#include "jsae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "jsae/errors.hpp"
#include "jsae/seeding.hpp"

namespace jsae {

void validate(const TrainConfig& cfg) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + msg);
  };
  require(cfg.n_x >= 1 && cfg.n_y >= 1, "latent sizes must be positive");
  require(cfg.k >= 1, "k must be positive");
  require(cfg.k <= cfg.n_x && cfg.k <= cfg.n_y, "k cannot exceed latent sizes");
  require(cfg.lambda >= 0.0, "lambda must be non-negative");
  require(cfg.lr_max > 0.0, "lr_max must be positive");
  require(cfg.warmup_frac >= 0.0 && cfg.warmup_frac <= 1.0,
          "warmup_frac must lie in [0, 1]");
  require(cfg.decay_frac >= 0.0 && cfg.decay_frac <= 1.0,
          "decay_frac must lie in [0, 1]");
  require(cfg.warmup_frac + cfg.decay_frac <= 1.0,
          "warmup and decay may not overlap");
  require(cfg.lambda_warmup_frac >= 0.0 && cfg.lambda_warmup_frac <= 1.0,
          "lambda_warmup_frac must lie in [0, 1]");
  require(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0, "beta1 must lie in [0, 1)");
  require(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0, "beta2 must lie in [0, 1)");
  require(cfg.adam_eps > 0.0, "adam_eps must be positive");
  require(cfg.total_tokens >= 0, "total_tokens must be non-negative");
  require(cfg.batch_tokens >= 1, "batch_tokens must be positive");
  require(cfg.buffer_batches >= 1, "buffer_batches must be positive");
  require(cfg.dead_window_tokens >= 1, "dead_window_tokens must be positive");
  require(cfg.threads >= 1, "threads must be positive");
}

AdamState init_adam(const SaePair& pair) {
  AdamState st;
  st.m = zero_gradients(pair);
  st.v = zero_gradients(pair);
  return st;
}

namespace {

template <class F>
void for_each_tensor(SaePair& pair, AdamState& st, const SaeGradients& g, F&& f) {
  f(pair.input_sae.w_enc, st.m.input_sae.w_enc, st.v.input_sae.w_enc, g.input_sae.w_enc);
  f(pair.input_sae.b_enc, st.m.input_sae.b_enc, st.v.input_sae.b_enc, g.input_sae.b_enc);
  f(pair.input_sae.w_dec, st.m.input_sae.w_dec, st.v.input_sae.w_dec, g.input_sae.w_dec);
  f(pair.input_sae.b_dec, st.m.input_sae.b_dec, st.v.input_sae.b_dec, g.input_sae.b_dec);
  f(pair.output_sae.w_enc, st.m.output_sae.w_enc, st.v.output_sae.w_enc, g.output_sae.w_enc);
  f(pair.output_sae.b_enc, st.m.output_sae.b_enc, st.v.output_sae.b_enc, g.output_sae.b_enc);
  f(pair.output_sae.w_dec, st.m.output_sae.w_dec, st.v.output_sae.w_dec, g.output_sae.w_dec);
  f(pair.output_sae.b_dec, st.m.output_sae.b_dec, st.v.output_sae.b_dec, g.output_sae.b_dec);
}

}  // namespace

void adam_step(SaePair& pair, AdamState& state, const SaeGradients& g,
               double lr, const TrainConfig& cfg) {
  state.step += 1;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for_each_tensor(pair, state, g,
                  [&](auto& param, auto& m, auto& v, const auto& grad) {
                    if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
                      throw std::invalid_argument(
                          "adam_step: gradient shape mismatch");
                    }
                    m = b1 * m + (1.0 - b1) * grad;
                    v.array() = b2 * v.array() + (1.0 - b2) * grad.array().square();
                    param.array() -= lr * (m.array() / bc1) /
                                     ((v.array() / bc2).sqrt() + cfg.adam_eps);
                  });
}

double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  if (total_steps < 1) throw std::invalid_argument("lr_at: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("lr_at: step out of range");
  }
  const std::int64_t warm = std::llround(cfg.warmup_frac * static_cast<double>(total_steps));
  const std::int64_t decay = std::llround(cfg.decay_frac * static_cast<double>(total_steps));
  if (warm > 0 && step < warm) {
    return cfg.lr_max * static_cast<double>(step) / static_cast<double>(warm);
  }
  const std::int64_t decay_start = total_steps - decay;
  if (decay > 0 && step > decay_start) {
    return cfg.lr_max * static_cast<double>(total_steps - step) /
           static_cast<double>(decay);
  }
  return cfg.lr_max;
}

double lambda_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  if (total_steps < 1) throw std::invalid_argument("lambda_at: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("lambda_at: step out of range");
  }
  const std::int64_t warm =
      std::llround(cfg.lambda_warmup_frac * static_cast<double>(total_steps));
  if (warm > 0 && step < warm) {
    return cfg.lambda * static_cast<double>(step) / static_cast<double>(warm);
  }
  return cfg.lambda;
}

TrainResult train(const MlpParams& mlp, ActivationSource& source,
                  const TrainConfig& cfg) {
  validate(cfg);
  validate(mlp);
  if (source.width() != mlp.m_in()) {
    throw std::invalid_argument("train: source width must match the MLP input");
  }

  TrainResult res;
  res.pair.input_sae = init_sae(mlp.m_in(), cfg.n_x, cfg.k, derive_seed(cfg.seed, 1));
  res.pair.output_sae = init_sae(mlp.m_out(), cfg.n_y, cfg.k, derive_seed(cfg.seed, 2));

  const std::int64_t total_steps = cfg.total_tokens / cfg.batch_tokens;
  if (total_steps == 0) return res;

  AdamState adam = init_adam(res.pair);
  DeadLatentTracker dead_x(cfg.n_x, cfg.dead_window_tokens);
  DeadLatentTracker dead_y(cfg.n_y, cfg.dead_window_tokens);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 3));

  res.timeline.reserve(static_cast<std::size_t>(total_steps));
  std::vector<Eigen::VectorXd> buffer;
  std::vector<Eigen::VectorXd> batch;
  Eigen::VectorXd token(source.width());

  std::int64_t step = 0;
  while (step < total_steps) {
    const std::int64_t fill_batches =
        std::min<std::int64_t>(cfg.buffer_batches, total_steps - step);
    const std::size_t need =
        static_cast<std::size_t>(fill_batches * cfg.batch_tokens);
    buffer.clear();
    buffer.reserve(need);
    for (std::size_t i = 0; i < need; ++i) {
      if (!source.next(token)) {
        throw DataExhausted("train: activation source exhausted after " +
                            std::to_string(step * cfg.batch_tokens +
                                           static_cast<std::int64_t>(i)) +
                            " tokens");
      }
      buffer.push_back(token);
    }
    std::shuffle(buffer.begin(), buffer.end(), shuffle_rng);

    for (std::int64_t b = 0; b < fill_batches; ++b, ++step) {
      auto first = buffer.begin() + b * cfg.batch_tokens;
      batch.assign(first, first + cfg.batch_tokens);

      const double lr = lr_at(step, total_steps, cfg);
      const double lam = lambda_at(step, total_steps, cfg);
      BatchTerms terms = forward_and_grads(mlp, res.pair, batch, lam, cfg.threads);
      adam_step(res.pair, adam, terms.grads, lr, cfg);
      renormalize_decoder(res.pair.input_sae);
      renormalize_decoder(res.pair.output_sae);

      for (std::size_t t = 0; t < batch.size(); ++t) {
        dead_x.observe(terms.supports.input[t]);
        dead_y.observe(terms.supports.output[t]);
      }

      StepMetrics sm;
      sm.step = step;
      sm.lr = lr;
      sm.lambda = lam;
      sm.mse_x = terms.loss.mse_x;
      sm.mse_y = terms.loss.mse_y;
      sm.jac_l1 = terms.loss.jac_l1;
      sm.total = terms.loss.total;
      sm.dead_x = dead_x.dead_count();
      sm.dead_y = dead_y.dead_count();
      res.timeline.push_back(sm);
    }
  }
  return res;
}

}  // namespace jsae
