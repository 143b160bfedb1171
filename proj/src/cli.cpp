#include "jsae/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "jsae/errors.hpp"
#include "jsae/eval.hpp"
#include "jsae/io.hpp"
#include "jsae/jacobian.hpp"
#include "jsae/linearity.hpp"
#include "jsae/loss.hpp"
#include "jsae/seeding.hpp"
#include "jsae/synthetic.hpp"
#include "jsae/trainer.hpp"

namespace jsae {

namespace {

using nlohmann::json;

struct DataConfig {
  bool present = false;
  Eigen::Index m = 0;
  Eigen::Index n_true = 0;
  double sparsity = 4.0;
  std::uint64_t seed = 0;
};

struct MlpConfig {
  MlpKind kind = MlpKind::Standard;
  ActivationKind activation = ActivationKind::GeluTanh;
  Eigen::Index d_mlp = 0;
  Eigen::Index m_out = 0;  // 0 means match the input width
  std::string source = "trained";
  std::uint64_t seed = 0;
  TrainedMlpOptions fit;
};

struct RunConfig {
  std::uint64_t seed = 0;
  TrainConfig train;
  Eigen::Index n_x = 0;  // 0 means expansion * width
  Eigen::Index n_y = 0;
  Eigen::Index expansion = 4;
  std::int64_t eval_tokens = 4096;
  MlpConfig mlp;
  DataConfig data;
  json raw;
};

void expect_keys(const json& obj, std::initializer_list<const char*> allowed,
                 const char* where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("config: unknown key \"" + it.key() +
                                  "\" in " + where);
    }
  }
}

json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(path + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": invalid JSON: " + e.what());
  }
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: top level must be a JSON object");
  }
  expect_keys(j,
              {"seed", "k", "n_x", "n_y", "expansion", "lambda", "lr_max",
               "warmup_frac", "decay_frac", "lambda_warmup_frac", "adam_beta1",
               "adam_beta2", "adam_eps", "batch_tokens", "buffer_batches",
               "total_tokens", "dead_window_tokens", "threads", "eval_tokens",
               "mlp", "data"},
              "the top level");
  RunConfig cfg;
  cfg.raw = j;
  try {
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (!j.contains("k")) throw std::invalid_argument("config: missing \"k\"");
    TrainConfig& t = cfg.train;
    t.seed = cfg.seed;
    t.k = j.at("k").get<int>();
    t.lambda = j.value("lambda", 0.0);
    t.lr_max = j.value("lr_max", 5e-4);
    t.warmup_frac = j.value("warmup_frac", 0.01);
    t.decay_frac = j.value("decay_frac", 0.20);
    t.lambda_warmup_frac = j.value("lambda_warmup_frac", 0.05);
    t.adam_beta1 = j.value("adam_beta1", 0.9);
    t.adam_beta2 = j.value("adam_beta2", 0.999);
    t.adam_eps = j.value("adam_eps", 1e-8);
    if (!j.contains("total_tokens")) {
      throw std::invalid_argument("config: missing \"total_tokens\"");
    }
    t.total_tokens = j.at("total_tokens").get<std::int64_t>();
    t.batch_tokens = j.value("batch_tokens", std::int64_t{1024});
    t.buffer_batches = j.value("buffer_batches", 32);
    t.dead_window_tokens = j.value("dead_window_tokens", std::int64_t{32768});
    t.threads = j.value("threads", 1);
    cfg.n_x = j.value("n_x", Eigen::Index{0});
    cfg.n_y = j.value("n_y", Eigen::Index{0});
    cfg.expansion = j.value("expansion", Eigen::Index{4});
    cfg.eval_tokens = j.value("eval_tokens", std::int64_t{4096});

    if (!j.contains("mlp")) {
      throw std::invalid_argument("config: missing \"mlp\" section");
    }
    const json& jm = j.at("mlp");
    expect_keys(jm,
                {"kind", "activation", "d_mlp", "m_out", "source", "seed",
                 "fit_samples", "fit_steps", "fit_lr", "target_loss",
                 "n_true_out", "max_terms"},
                "\"mlp\"");
    cfg.mlp.kind = mlp_kind_from_string(jm.value("kind", "standard"));
    cfg.mlp.activation =
        activation_from_string(jm.value("activation", "gelu_tanh"));
    if (!jm.contains("d_mlp")) {
      throw std::invalid_argument("config: missing \"mlp.d_mlp\"");
    }
    cfg.mlp.d_mlp = jm.at("d_mlp").get<Eigen::Index>();
    cfg.mlp.m_out = jm.value("m_out", Eigen::Index{0});
    cfg.mlp.source = jm.value("source", "trained");
    if (cfg.mlp.source != "trained" && cfg.mlp.source != "random") {
      throw std::invalid_argument(
          "config: \"mlp.source\" must be \"trained\" or \"random\"");
    }
    cfg.mlp.seed = jm.value("seed", derive_seed(cfg.seed, 11));
    cfg.mlp.fit.fit_samples = jm.value("fit_samples", cfg.mlp.fit.fit_samples);
    cfg.mlp.fit.fit_steps = jm.value("fit_steps", cfg.mlp.fit.fit_steps);
    cfg.mlp.fit.fit_lr = jm.value("fit_lr", cfg.mlp.fit.fit_lr);
    cfg.mlp.fit.target_loss = jm.value("target_loss", cfg.mlp.fit.target_loss);
    cfg.mlp.fit.n_true_out = jm.value("n_true_out", cfg.mlp.fit.n_true_out);
    cfg.mlp.fit.max_terms = jm.value("max_terms", cfg.mlp.fit.max_terms);

    if (j.contains("data")) {
      const json& jd = j.at("data");
      expect_keys(jd, {"m", "n_true", "sparsity", "seed"}, "\"data\"");
      cfg.data.present = true;
      if (!jd.contains("m")) {
        throw std::invalid_argument("config: missing \"data.m\"");
      }
      cfg.data.m = jd.at("m").get<Eigen::Index>();
      cfg.data.n_true = jd.value("n_true", 2 * cfg.data.m);
      cfg.data.sparsity = jd.value("sparsity", 4.0);
      cfg.data.seed = jd.value("seed", derive_seed(cfg.seed, 12));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return cfg;
}

// Everything a run needs beyond the raw config: the MLP (and its generating
// metadata when fitted) plus the dictionary behind synthetic data.
struct BuiltRun {
  MlpParams mlp;
  std::optional<TrainedMlp> trained;
  std::optional<GroundTruthDictionary> dict;
};

BuiltRun build_run(RunConfig& cfg, Eigen::Index stream_width) {
  Eigen::Index m_in = 0;
  if (cfg.data.present) {
    m_in = cfg.data.m;
    if (stream_width > 0 && stream_width != m_in) {
      throw std::invalid_argument(
          "config: activation file width does not match \"data.m\"");
    }
  } else if (stream_width > 0) {
    m_in = stream_width;
  } else {
    throw std::invalid_argument(
        "config: need a \"data\" section or an activation file");
  }
  Eigen::Index m_out = cfg.mlp.m_out > 0 ? cfg.mlp.m_out : m_in;

  BuiltRun built;
  if (cfg.data.present) {
    built.dict = make_dictionary(cfg.data.m, cfg.data.n_true, cfg.data.sparsity,
                                 cfg.data.seed);
  }
  if (cfg.mlp.source == "trained") {
    if (!built.dict) {
      throw std::invalid_argument(
          "config: a trained MLP needs a \"data\" section");
    }
    built.trained =
        make_trained_mlp(*built.dict, cfg.mlp.d_mlp, m_out, cfg.mlp.kind,
                         cfg.mlp.activation, cfg.mlp.seed, cfg.mlp.fit);
    built.mlp = built.trained->mlp;
  } else {
    built.mlp = make_random_mlp({m_in, cfg.mlp.d_mlp, m_out}, cfg.mlp.kind,
                                cfg.mlp.activation, cfg.mlp.seed);
  }

  cfg.train.n_x = cfg.n_x > 0 ? cfg.n_x : cfg.expansion * m_in;
  cfg.train.n_y = cfg.n_y > 0 ? cfg.n_y : cfg.expansion * m_out;
  return built;
}

int env_threads_override(int configured) {
  const char* env = std::getenv("JSAE_THREADS");
  if (env == nullptr || *env == '\0') return configured;
  try {
    std::size_t used = 0;
    int value = std::stoi(env, &used);
    if (used != std::string(env).size() || value < 1) throw std::exception();
    return value;
  } catch (...) {
    throw std::invalid_argument("JSAE_THREADS must be a positive integer");
  }
}

std::string number_key(double v) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

json map_to_json(const std::map<double, double>& m) {
  json j = json::object();
  for (const auto& [key, value] : m) j[number_key(key)] = value;
  return j;
}

json report_to_json(const EvalReport& r) {
  json j;
  j["tokens"] = r.tokens;
  j["mse_x"] = r.mse_x;
  j["mse_y"] = r.mse_y;
  j["explained_variance_x"] = r.explained_variance_x;
  j["explained_variance_y"] = r.explained_variance_y;
  j["cosine_x"] = r.cosine_x;
  j["cosine_y"] = r.cosine_y;
  j["cosine_skipped_x"] = r.cosine_skipped_x;
  j["cosine_skipped_y"] = r.cosine_skipped_y;
  if (r.ce_score_x) j["ce_score_x"] = *r.ce_score_x;
  if (r.ce_score_y) j["ce_score_y"] = *r.ce_score_y;
  j["jac_frac_above"] = map_to_json(r.jac_frac_above);
  j["jac_lp_norms"] = map_to_json(r.jac_lp_norms);
  j["global_jac_frac_above"] = map_to_json(r.global_jac_frac_above);
  j["dead_x"] = r.dead_x;
  j["dead_y"] = r.dead_y;
  return j;
}

void emit(const json& j, const std::string& out_path) {
  std::string text = j.dump(2);
  text.push_back('\n');
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text_file(out_path, text);
  }
}

// Tokens for offline analysis: the activation file when given, otherwise a
// fresh synthetic draw from the config's dictionary (distinct stream from
// the training tokens).
std::vector<Eigen::VectorXd> analysis_tokens(const RunConfig& cfg,
                                             const BuiltRun& built,
                                             const std::string& activations,
                                             std::int64_t limit) {
  std::vector<Eigen::VectorXd> tokens;
  if (!activations.empty()) {
    tokens = load_activations(activations);
    if (limit > 0 && static_cast<std::int64_t>(tokens.size()) > limit) {
      tokens.resize(static_cast<std::size_t>(limit));
    }
  } else {
    if (!built.dict) {
      throw std::invalid_argument(
          "config: need a \"data\" section or an activation file");
    }
    std::int64_t count = limit > 0 ? limit : cfg.eval_tokens;
    tokens = sample_activations(*built.dict, count, derive_seed(cfg.data.seed, 1));
  }
  if (tokens.empty()) throw std::invalid_argument("no analysis tokens available");
  return tokens;
}

// Wire the readout task of a trained-MLP run into eval's downstream scores.
// The candidate MLP used for forwarding x-side reconstructions is the loaded
// one, so the scores match the weights being evaluated.
void attach_task_losses(EvalOptions& opts, const RunConfig& cfg,
                        const BuiltRun& built, const MlpParams& mlp) {
  if (!built.trained || !built.dict) return;
  TrainedMlp probe = *built.trained;
  probe.mlp = mlp;
  ReadoutTask task =
      fit_readout(probe, *built.dict, 8, 2048, derive_seed(cfg.seed, 7));
  auto coded = sample_with_codes(*built.dict, cfg.eval_tokens,
                                 derive_seed(cfg.data.seed, 1));
  std::vector<Eigen::VectorXd> labels = readout_labels(probe, task, coded);

  opts.task_loss_y = [task, labels](const std::vector<Eigen::VectorXd>& ys) {
    return readout_loss(task, ys, labels);
  };
  opts.task_loss_x = [task, labels, mlp](const std::vector<Eigen::VectorXd>& xs) {
    std::vector<Eigen::VectorXd> ys;
    ys.reserve(xs.size());
    for (const auto& x : xs) ys.push_back(mlp_forward(mlp, x).y);
    return readout_loss(task, ys, labels);
  };
}

int cmd_train(const std::string& config_path, const std::string& out_path,
              const std::string& metrics_path, const std::string& activations,
              const std::optional<std::uint64_t>& seed_override,
              const std::optional<double>& lambda_override,
              const std::optional<std::int64_t>& tokens_override,
              const std::optional<int>& threads_override) {
  RunConfig cfg = parse_run_config(parse_json_file(config_path));
  if (seed_override) {
    cfg.seed = *seed_override;
    cfg.train.seed = *seed_override;
    cfg.raw["seed"] = *seed_override;
  }
  if (lambda_override) {
    cfg.train.lambda = *lambda_override;
    cfg.raw["lambda"] = *lambda_override;
  }
  if (tokens_override) {
    cfg.train.total_tokens = *tokens_override;
    cfg.raw["total_tokens"] = *tokens_override;
  }
  if (threads_override) cfg.train.threads = *threads_override;
  cfg.train.threads = env_threads_override(cfg.train.threads);

  Eigen::Index stream_width = 0;
  std::optional<FileSource> file_source;
  if (!activations.empty()) {
    file_source.emplace(activations);
    stream_width = file_source->width();
  }
  BuiltRun built = build_run(cfg, stream_width);

  std::optional<SyntheticSource> synth_source;
  ActivationSource* source = nullptr;
  if (file_source) {
    source = &*file_source;
  } else {
    synth_source.emplace(*built.dict, derive_seed(cfg.data.seed, 0));
    source = &*synth_source;
  }

  TrainResult result = train(built.mlp, *source, cfg.train);

  json meta;
  meta["config"] = cfg.raw;
  if (built.trained) {
    meta["trained_mlp"] = {{"final_loss", built.trained->final_loss},
                           {"converged", built.trained->converged}};
  }
  save_pair(out_path, result.pair, built.mlp, meta);
  if (!metrics_path.empty()) {
    write_text_file(metrics_path, timeline_to_csv(result.timeline));
  }

  json summary;
  summary["steps"] = static_cast<std::int64_t>(result.timeline.size());
  if (!result.timeline.empty()) {
    const StepMetrics& last = result.timeline.back();
    summary["final"] = {{"mse_x", last.mse_x},
                        {"mse_y", last.mse_y},
                        {"jac_l1", last.jac_l1},
                        {"total", last.total}};
  }
  summary["weights"] = out_path;
  if (!metrics_path.empty()) summary["metrics"] = metrics_path;
  emit(summary, "");
  return 0;
}

int cmd_eval(const std::string& weights_path, const std::string& activations,
             std::int64_t token_limit, const std::string& out_path) {
  LoadedPair loaded = load_pair(weights_path);
  if (!loaded.meta.contains("config")) {
    throw std::invalid_argument(weights_path +
                                ": weights carry no embedded config");
  }
  RunConfig cfg = parse_run_config(loaded.meta.at("config"));
  BuiltRun built = build_run(cfg, loaded.mlp.m_in());
  std::vector<Eigen::VectorXd> tokens =
      analysis_tokens(cfg, built, activations, token_limit);

  EvalOptions opts;
  if (activations.empty()) {
    attach_task_losses(opts, cfg, built, loaded.mlp);
  }
  EvalReport report = evaluate(loaded.mlp, loaded.pair, tokens, opts);
  emit(report_to_json(report), out_path);
  return 0;
}

int cmd_jacobian(const std::string& weights_path, const std::string& activations,
                 std::int64_t token_index, const std::string& out_path) {
  LoadedPair loaded = load_pair(weights_path);
  if (!loaded.meta.contains("config")) {
    throw std::invalid_argument(weights_path +
                                ": weights carry no embedded config");
  }
  RunConfig cfg = parse_run_config(loaded.meta.at("config"));
  BuiltRun built = build_run(cfg, loaded.mlp.m_in());
  std::vector<Eigen::VectorXd> tokens = analysis_tokens(cfg, built, activations, 0);
  if (token_index < 0 || token_index >= static_cast<std::int64_t>(tokens.size())) {
    throw std::invalid_argument("jacobian: --token out of range (have " +
                                std::to_string(tokens.size()) + " tokens)");
  }

  ActiveJacobian aj = active_jacobian(
      loaded.mlp, loaded.pair, tokens[static_cast<std::size_t>(token_index)]);
  json j;
  j["token"] = token_index;
  j["n_y"] = aj.n_y;
  j["n_x"] = aj.n_x;
  j["k"] = loaded.pair.input_sae.k;
  j["row_indices"] = aj.row_indices;
  j["col_indices"] = aj.col_indices;
  json values = json::array();
  for (Eigen::Index r = 0; r < aj.values.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < aj.values.cols(); ++c) row.push_back(aj.values(r, c));
    values.push_back(row);
  }
  j["values"] = values;
  emit(j, out_path);
  return 0;
}

int cmd_linearity(const std::string& weights_path, const std::string& activations,
                  std::int64_t samples, int grid_points,
                  const std::string& out_path) {
  LoadedPair loaded = load_pair(weights_path);
  if (!loaded.meta.contains("config")) {
    throw std::invalid_argument(weights_path +
                                ": weights carry no embedded config");
  }
  RunConfig cfg = parse_run_config(loaded.meta.at("config"));
  BuiltRun built = build_run(cfg, loaded.mlp.m_in());
  std::vector<Eigen::VectorXd> tokens = analysis_tokens(cfg, built, activations, 0);

  LinearityReport rep =
      linearity_analysis(loaded.mlp, loaded.pair, tokens, samples,
                         derive_seed(cfg.seed, 8), grid_points);
  json j;
  j["samples"] = rep.samples;
  j["frac_linear"] = rep.frac_linear;
  j["frac_jump_relu"] = rep.frac_jump_relu;
  j["frac_other"] = rep.frac_other;
  j["mean_abs_second_deriv"] = rep.mean_abs_second_deriv;
  j["max_abs_second_deriv"] = rep.max_abs_second_deriv;
  j["delta_pairs"] = rep.delta_pairs;
  j["delta_agreement"] = rep.delta_agreement;
  emit(j, out_path);
  return 0;
}

// Keep only tokens whose TopK selections sit well clear of a tie on every
// path the finite-difference probe touches, so an eps-sized parameter nudge
// cannot flip a support mid-check.
std::vector<Eigen::VectorXd> stable_support_tokens(
    const MlpParams& mlp, const SaePair& pair, const GroundTruthDictionary& dict,
    std::int64_t count, double min_margin, std::uint64_t seed) {
  SyntheticSource source(dict, seed);
  std::vector<Eigen::VectorXd> kept;
  Eigen::VectorXd x(source.width());
  for (std::int64_t draws = 0;
       static_cast<std::int64_t>(kept.size()) < count && draws < 200 * count;
       ++draws) {
    source.next(x);
    Eigen::VectorXd pre_x = pair.input_sae.w_enc * x + pair.input_sae.b_enc;
    if (selection_margin(pre_x, pair.input_sae.k) < min_margin) continue;
    Eigen::VectorXd y = mlp_forward(mlp, x).y;
    Eigen::VectorXd pre_y = pair.output_sae.w_enc * y + pair.output_sae.b_enc;
    if (selection_margin(pre_y, pair.output_sae.k) < min_margin) continue;
    Eigen::VectorXd xhat = decode(pair.input_sae, encode(pair.input_sae, x));
    Eigen::VectorXd yhat = mlp_forward(mlp, xhat).y;
    Eigen::VectorXd pre_j = pair.output_sae.w_enc * yhat + pair.output_sae.b_enc;
    if (selection_margin(pre_j, pair.output_sae.k) < min_margin) continue;
    kept.push_back(x);
  }
  if (static_cast<std::int64_t>(kept.size()) < count) {
    throw DegenerateInput(
        "grad-check: could not assemble a batch with stable TopK supports");
  }
  return kept;
}

int cmd_grad_check(std::uint64_t seed, double lambda, double eps, double tol,
                   const std::string& kind_name) {
  MlpKind kind = mlp_kind_from_string(kind_name);
  GroundTruthDictionary dict = make_dictionary(16, 24, 3.0, derive_seed(seed, 1));
  MlpParams mlp = make_random_mlp({16, 32, 16}, kind,
                                  ActivationKind::GeluTanh, derive_seed(seed, 3));
  SaePair pair;
  pair.input_sae = init_sae(16, 64, 8, derive_seed(seed, 4));
  pair.output_sae = init_sae(16, 64, 8, derive_seed(seed, 5));
  std::vector<Eigen::VectorXd> batch = stable_support_tokens(
      mlp, pair, dict, 16, 200.0 * eps, derive_seed(seed, 2));

  double worst = grad_check(mlp, pair, batch, lambda, eps);
  json j;
  j["kind"] = kind_name;
  j["lambda"] = lambda;
  j["eps"] = eps;
  j["worst_rel_error"] = worst;
  j["tolerance"] = tol;
  j["pass"] = worst <= tol;
  emit(j, "");
  if (worst > tol) {
    std::cerr << "grad-check: worst relative error " << worst
              << " exceeds tolerance " << tol << "\n";
    return 2;
  }
  return 0;
}

int cmd_compare_random(const std::string& config_path, const std::string& out_path) {
  RunConfig cfg = parse_run_config(parse_json_file(config_path));
  if (cfg.mlp.source != "trained") {
    throw std::invalid_argument(
        "compare-random: config must use \"mlp.source\": \"trained\"");
  }
  cfg.train.threads = env_threads_override(cfg.train.threads);

  BuiltRun trained_run = build_run(cfg, 0);
  MlpParams random_mlp = make_random_mlp(
      {trained_run.mlp.m_in(), cfg.mlp.d_mlp, trained_run.mlp.m_out()},
      cfg.mlp.kind, cfg.mlp.activation, derive_seed(cfg.mlp.seed, 21));

  auto run_one = [&cfg](const MlpParams& mlp, const GroundTruthDictionary& dict) {
    SyntheticSource source(dict, derive_seed(cfg.data.seed, 0));
    TrainResult result = train(mlp, source, cfg.train);
    std::vector<Eigen::VectorXd> tokens = sample_activations(
        dict, cfg.eval_tokens, derive_seed(cfg.data.seed, 1));
    EvalReport report = evaluate(mlp, result.pair, tokens);
    return report;
  };

  EvalReport trained_report = run_one(trained_run.mlp, *trained_run.dict);
  EvalReport random_report = run_one(random_mlp, *trained_run.dict);

  json j;
  j["trained"] = report_to_json(trained_report);
  j["random"] = report_to_json(random_report);
  double t_frac = trained_report.jac_frac_above.at(0.01);
  double r_frac = random_report.jac_frac_above.at(0.01);
  j["trained_sparser_at_0.01"] = t_frac < r_frac;
  emit(j, out_path);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Paired TopK sparse autoencoders around an MLP with a Jacobian "
               "sparsity penalty"};
  app.require_subcommand(0, 1);
  std::function<int()> action;

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a SAE pair and save weights");
  std::string train_config, train_out, train_metrics, train_activations;
  std::optional<std::uint64_t> train_seed;
  std::optional<double> train_lambda;
  std::optional<std::int64_t> train_tokens;
  std::optional<int> train_threads;
  train_cmd->add_option("--config", train_config, "Run config JSON")->required();
  train_cmd->add_option("--out", train_out, "Output weight container")->required();
  train_cmd->add_option("--metrics", train_metrics, "Training timeline CSV");
  train_cmd->add_option("--activations", train_activations,
                        "Train from this activation dump instead of synthetic data");
  train_cmd->add_option("--seed", train_seed, "Override config seed");
  train_cmd->add_option("--lambda", train_lambda, "Override config lambda");
  train_cmd->add_option("--total-tokens", train_tokens, "Override token budget");
  train_cmd->add_option("--threads", train_threads, "Override worker threads");
  train_cmd->callback([&]() {
    action = [&]() {
      return cmd_train(train_config, train_out, train_metrics,
                       train_activations, train_seed, train_lambda,
                       train_tokens, train_threads);
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate saved weights");
  std::string eval_weights, eval_activations, eval_out;
  std::int64_t eval_limit = 0;
  eval_cmd->add_option("--weights", eval_weights, "Weight container")->required();
  eval_cmd->add_option("--activations", eval_activations,
                       "Evaluate on this dump instead of synthetic tokens");
  eval_cmd->add_option("--tokens", eval_limit, "Token count cap");
  eval_cmd->add_option("--out", eval_out, "Write the JSON report here (default stdout)");
  eval_cmd->callback([&]() {
    action = [&]() {
      return cmd_eval(eval_weights, eval_activations, eval_limit, eval_out);
    };
  });

  // jacobian
  auto* jac_cmd = app.add_subcommand("jacobian", "Active Jacobian of one token");
  std::string jac_weights, jac_activations, jac_out;
  std::int64_t jac_token = 0;
  jac_cmd->add_option("--weights", jac_weights, "Weight container")->required();
  jac_cmd->add_option("--activations", jac_activations, "Token dump");
  jac_cmd->add_option("--token", jac_token, "Token index");
  jac_cmd->add_option("--out", jac_out, "Write JSON here (default stdout)");
  jac_cmd->callback([&]() {
    action = [&]() {
      return cmd_jacobian(jac_weights, jac_activations, jac_token, jac_out);
    };
  });

  // linearity
  auto* lin_cmd = app.add_subcommand("linearity", "Scalar-slice linearity study");
  std::string lin_weights, lin_activations, lin_out;
  std::int64_t lin_samples = 1000;
  int lin_grid = 256;
  lin_cmd->add_option("--weights", lin_weights, "Weight container")->required();
  lin_cmd->add_option("--activations", lin_activations, "Token dump");
  lin_cmd->add_option("--samples", lin_samples, "Scalar functions to sample");
  lin_cmd->add_option("--grid", lin_grid, "Grid points per function");
  lin_cmd->add_option("--out", lin_out, "Write JSON here (default stdout)");
  lin_cmd->callback([&]() {
    action = [&]() {
      return cmd_linearity(lin_weights, lin_activations, lin_samples, lin_grid,
                           lin_out);
    };
  });

  // grad-check
  auto* gc_cmd = app.add_subcommand("grad-check",
                                    "Finite-difference audit of the gradients");
  std::uint64_t gc_seed = 0;
  double gc_lambda = 1.0;
  double gc_eps = 1e-5;
  double gc_tol = 1e-5;
  std::string gc_kind = "standard";
  gc_cmd->add_option("--seed", gc_seed, "Instance seed");
  gc_cmd->add_option("--lambda", gc_lambda, "Penalty weight");
  gc_cmd->add_option("--eps", gc_eps, "Probe step");
  gc_cmd->add_option("--tolerance", gc_tol, "Worst relative error allowed");
  gc_cmd->add_option("--kind", gc_kind, "MLP kind (standard|glu)");
  gc_cmd->callback([&]() {
    action = [&]() {
      return cmd_grad_check(gc_seed, gc_lambda, gc_eps, gc_tol, gc_kind);
    };
  });

  // compare-random
  auto* cmp_cmd = app.add_subcommand(
      "compare-random", "Train against the config MLP and a random twin");
  std::string cmp_config, cmp_out;
  cmp_cmd->add_option("--config", cmp_config, "Run config JSON")->required();
  cmp_cmd->add_option("--out", cmp_out, "Write JSON here (default stdout)");
  cmp_cmd->callback([&]() {
    action = [&]() { return cmd_compare_random(cmp_config, cmp_out); };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (!action) {
    std::cout << app.help();
    return 0;
  }
  try {
    return action();
  } catch (const NumericDegeneracy& e) {
    std::cerr << "numeric degeneracy: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateInput& e) {
    std::cerr << "degenerate input: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 1;
  } catch (const DataExhausted& e) {
    std::cerr << "data exhausted: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "json error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace jsae
