#include "preflearn/cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "preflearn/cli/metrics.hpp"
#include "preflearn/cli/toy.hpp"
#include "preflearn/common/errors.hpp"
#include "preflearn/common/rng.hpp"
#include "preflearn/data/io.hpp"
#include "preflearn/data/pipeline.hpp"
#include "preflearn/eval/eval.hpp"
#include "preflearn/lm/checkpoint.hpp"
#include "preflearn/lm/sampling.hpp"
#include "preflearn/rm/reward_model.hpp"

namespace preflearn::cli {

namespace fs = std::filesystem;

Config resolve_config(const std::string& command, const std::string& config_path,
                      const std::vector<std::string>& overrides) {
  Config c = default_config(command);
  if (!config_path.empty()) c.merge_file(config_path);
  for (const auto& o : overrides) c.merge_assignment(o);
  return c;
}

ppo::PpoConfig to_ppo_config(const Config& c) {
  ppo::PpoConfig p;
  p.prompt_batch = c.int32("B");
  p.rollouts_per_prompt = c.int32("r");
  p.minibatch = c.int32("b");
  p.grad_accum = c.int32("g");
  p.epochs = c.int32("E");
  p.inner_epochs = c.int32("e");
  p.max_prompt_len = c.int32("L_p");
  p.max_continuation_len = c.int32("L_c");
  p.temperature = c.real("tau");
  p.beta = c.real("beta");
  p.gamma = c.real("gamma");
  p.lam = c.real("lam");
  p.eps_clip = c.real("eps_clip");
  p.alpha = c.real("alpha");
  p.learning_rate = c.real("eta");
  p.warmup_fraction = c.real("warmup");
  p.adam_beta1 = c.real("adam_beta1");
  p.adam_beta2 = c.real("adam_beta2");
  p.adam_eps = c.real("adam_eps");
  p.weight_decay = c.real("weight_decay");
  p.grad_clip_norm = c.real("grad_clip");
  p.trunc_penalty = c.real("trunc_penalty");
  p.minibatch_forward = c.flag("minibatch_forward");
  p.seed = c.u64("seed");
  p.validate();
  return p;
}

dpo::DpoConfig to_dpo_config(const Config& c) {
  dpo::DpoConfig d;
  d.beta = c.real("beta");
  d.learning_rate = c.real("eta");
  d.warmup_fraction = c.real("warmup");
  d.epochs = c.int32("epochs");
  d.batch_size = c.int32("batch");
  d.grad_clip_norm = c.real("grad_clip");
  d.seed = c.u64("seed");
  d.validate();
  return d;
}

lm::TrainConfig to_train_config(const Config& c) {
  lm::TrainConfig t;
  t.learning_rate = c.real("eta");
  t.warmup_fraction = c.real("warmup");
  if (c.has_key("final_lr_fraction")) {
    t.decay = true;
    t.final_lr_fraction = c.real("final_lr_fraction");
  }
  t.epochs = c.int32("epochs");
  t.batch_size = c.int32("batch");
  t.grad_clip_norm = c.real("grad_clip");
  t.seed = c.u64("seed");
  t.validate();
  return t;
}

lm::ModelConfig to_model_config(const Config& c) {
  lm::ModelConfig m;
  m.d_model = c.int32("d_model");
  m.n_layer = c.int32("n_layer");
  m.n_head = c.int32("n_head");
  m.context = c.int32("context");
  m.d_ff = c.int32("d_ff");
  m.validate();
  return m;
}

std::vector<lm::Demonstration> load_demonstrations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<lm::Demonstration> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, e.what());
    }
    if (!j.is_object() || !j.contains("prompt") || !j.contains("response") || !j["prompt"].is_array() ||
        !j["response"].is_string())
      throw SchemaError(lineno, "expected {\"prompt\": [...], \"response\": \"...\"}");
    data::Conversation conv;
    for (const auto& t : j["prompt"]) {
      if (!t.is_object() || !t.contains("role") || !t.contains("content") || !t["content"].is_string())
        throw SchemaError(lineno, "prompt turns need role and content");
      const auto role = data::parse_role(t["role"].get<std::string>());
      if (!role) throw SchemaError(lineno, "unknown role");
      conv.push_back({*role, t["content"].get<std::string>()});
    }
    out.push_back({data::render_prompt(conv), lm::encode(j["response"].get<std::string>())});
  }
  return out;
}

namespace {

fs::path prepare_out_dir(const Config& c) {
  const fs::path dir = c.str("out");
  if (dir.empty()) throw ConfigError("config key 'out': output directory required");
  fs::create_directories(dir);
  c.write(dir / "config.txt");
  return dir;
}

std::string require(const Config& c, const std::string& key) {
  const auto v = c.str(key);
  if (v.empty()) throw ConfigError("config key '" + key + "' is required");
  return v;
}

std::vector<data::Conversation> prompt_source(const Config& c) {
  const auto src = require(c, "prompts");
  if (src == "toy")
    return eval::toy_prompts(static_cast<std::size_t>(c.int32("toy_prompts")), derive_seed(c.u64("seed"), 1));
  std::vector<data::Conversation> out;
  for (const auto& e : data::load_prompt_pool(src).prompts) out.push_back(e.prompt);
  return out;
}

std::vector<lm::TokenSequence> render(const std::vector<data::Conversation>& prompts) {
  std::vector<lm::TokenSequence> out;
  for (const auto& p : prompts) out.push_back(data::render_prompt(p));
  return out;
}

const std::vector<std::string> kTrainColumns{"step", "epoch", "loss", "learning_rate", "grad_norm"};

lm::StepCallback metrics_callback(MetricsWriter& w) {
  return [&w](const lm::TrainStepInfo& s) {
    const double row[] = {static_cast<double>(s.step), static_cast<double>(s.epoch), s.loss, s.learning_rate,
                          s.grad_norm};
    w.write(row);
  };
}

int cmd_train_sft(const Config& c, std::ostream& out) {
  const auto dir = prepare_out_dir(c);
  const auto train = to_train_config(c);
  std::vector<lm::Demonstration> demos;
  if (c.str("data") == "toy") {
    const auto prompts = eval::toy_prompts(static_cast<std::size_t>(c.int32("toy_prompts")), derive_seed(train.seed, 1));
    demos = eval::toy_demonstrations(prompts, derive_seed(train.seed, 5));
  } else {
    demos = load_demonstrations(c.str("data"));
  }
  const auto init = c.str("init").empty() ? lm::PolicyParams::initialized(to_model_config(c), derive_seed(train.seed, 4))
                                          : lm::load_policy(c.str("init"));
  MetricsWriter w(dir / "metrics.csv", kTrainColumns);
  const auto policy = lm::train_sft(train, init, demos, metrics_callback(w));
  lm::save_policy(dir / "policy.ckpt", policy);
  out << "wrote " << (dir / "policy.ckpt").string() << '\n';
  return 0;
}

int cmd_train_rm(const Config& c, std::ostream& out) {
  const auto dir = prepare_out_dir(c);
  const auto train = to_train_config(c);
  const auto policy = lm::load_policy(require(c, "policy"));
  std::vector<data::PreferencePair> pairs;
  if (require(c, "data") == "toy") {
    const auto n = static_cast<std::size_t>(c.int32("toy_pairs"));
    pairs = eval::make_synthetic_preferences(eval::OracleTask{}, policy, eval::toy_prompts(n, derive_seed(train.seed, 6)),
                                             n, c.int32("L_c"), derive_seed(train.seed, 7));
    data::save_preferences(dir / "pairs.jsonl", pairs);
  } else {
    pairs = data::load_preferences(c.str("data"));
  }
  MetricsWriter w(dir / "metrics.csv", kTrainColumns);
  const auto reward = rm::train_reward_model(train, policy, pairs, metrics_callback(w));
  rm::save_reward_model(dir / "reward.ckpt", reward);
  out << "wrote " << (dir / "reward.ckpt").string() << '\n';
  if (!c.str("heldout").empty())
    out << "heldout_accuracy=" << format_double(rm::pairwise_accuracy(reward, data::load_preferences(c.str("heldout"))))
        << '\n';
  return 0;
}

int cmd_train_dpo(const Config& c, std::ostream& out) {
  const auto dir = prepare_out_dir(c);
  const auto cfg = to_dpo_config(c);
  const auto policy = lm::load_policy(require(c, "policy"));
  const auto reference = c.str("reference").empty() ? policy : lm::load_policy(c.str("reference"));
  const auto pairs = data::load_preferences(require(c, "data"));
  MetricsWriter w(dir / "metrics.csv", kTrainColumns);
  const auto trained = dpo::train_dpo(cfg, policy, reference, pairs, metrics_callback(w));
  lm::save_policy(dir / "policy.ckpt", trained);
  out << "wrote " << (dir / "policy.ckpt").string() << '\n';
  if (!c.str("heldout").empty()) {
    const auto s = dpo::summarize_margins(trained, reference, data::load_preferences(c.str("heldout")), cfg.beta);
    out << "heldout_mean_margin=" << format_double(s.mean_margin) << "\nheldout_accuracy=" << format_double(s.accuracy)
        << '\n';
  }
  return 0;
}

const std::vector<std::string> kPpoColumns{"step",    "policy_loss",        "value_loss",
                                           "mean_terminal_reward", "mean_kl", "fraction_truncated",
                                           "mean_continuation_length"};

ppo::PpoResult run_ppo(const ppo::PpoConfig& cfg, const lm::PolicyParams& policy, const lm::PolicyParams& reference,
                       const rm::RewardModelParams& reward, const data::PromptPool& pool, const fs::path& dir) {
  MetricsWriter w(dir / "metrics.csv", kPpoColumns);
  ppo::PpoCallbacks cb;
  cb.on_step = [&w](const ppo::PpoStepMetrics& m) {
    const double row[] = {static_cast<double>(m.step), m.policy_loss, m.value_loss, m.mean_terminal_reward,
                          m.mean_kl, m.fraction_truncated, m.mean_continuation_length};
    w.write(row);
  };
  cb.on_epoch = [&dir](std::size_t epoch, const lm::PolicyParams& p, const ppo::ValueModelParams& v) {
    lm::save_policy(dir / ("policy-epoch" + std::to_string(epoch) + ".ckpt"), p);
    rm::save_reward_model(dir / ("value-epoch" + std::to_string(epoch) + ".ckpt"), v, "value");
  };
  auto res = ppo::train_ppo(cfg, policy, reference, reward, pool, cb);
  lm::save_policy(dir / "policy.ckpt", res.policy);
  rm::save_reward_model(dir / "value.ckpt", res.value, "value");
  return res;
}

int cmd_train_ppo(const Config& c, std::ostream& out) {
  const auto dir = prepare_out_dir(c);
  const auto cfg = to_ppo_config(c);
  const auto policy = lm::load_policy(require(c, "policy"));
  const auto reference = c.str("reference").empty() ? policy : lm::load_policy(c.str("reference"));
  const auto reward = rm::load_reward_model(require(c, "reward"));
  run_ppo(cfg, policy, reference, reward, eval::make_pool(prompt_source(c), "train"), dir);
  out << "wrote " << (dir / "policy.ckpt").string() << '\n';
  return 0;
}

int cmd_eval_bon(const Config& c, std::ostream& out) {
  const auto policy = lm::load_policy(require(c, "policy"));
  const auto prompts = render(prompt_source(c));
  std::optional<rm::RewardModelParams> reward;
  eval::Scorer scorer;
  if (c.str("scorer") == "oracle") {
    scorer = eval::oracle_scorer(eval::OracleTask{});
  } else {
    reward = rm::load_reward_model(c.str("scorer"));
    scorer = eval::reward_model_scorer(*reward);
  }
  const int n = c.int32("n");
  if (n < 1) throw ConfigError("config key 'n': must be >= 1");
  const auto sel = eval::best_of_n(policy, scorer, prompts, static_cast<std::size_t>(n), c.real("tau"), c.int32("L_c"),
                                   c.u64("seed"));
  eval::write_bon_report(require(c, "out"), sel, c.flag("candidates"));
  double mean = 0.0;
  for (const auto& s : sel) mean += s.best().score;
  out << "mean_selected_score=" << format_double(mean / static_cast<double>(sel.size())) << '\n';
  return 0;
}

int cmd_eval_kl(const Config& c, std::ostream& out) {
  const auto policy = lm::load_policy(require(c, "policy"));
  const auto reference = lm::load_policy(require(c, "reference"));
  out << "mean_kl=" << format_double(eval::mean_kl_to_ref(policy, reference, render(prompt_source(c)), c.u64("seed"),
                                                         c.int32("L_c")))
      << '\n';
  return 0;
}

int cmd_gen(const Config& c, std::ostream& out) {
  const auto policy = lm::load_policy(require(c, "checkpoint"));
  const auto prompt = data::render_prompt({{data::Role::user, c.str("prompt")}});
  const auto s = lm::sample(policy, prompt, c.real("tau"), c.int32("L_c"), c.u64("seed"));
  std::string text;
  for (const auto t : s.continuation) {
    if (t == lm::Vocabulary::kEos) break;
    if (t < lm::Vocabulary::kByteCount) text.push_back(static_cast<char>(t));
  }
  out << text << '\n';
  return 0;
}

int cmd_data_binarize(const Config& c, std::ostream& out) {
  const auto mode = data::parse_score_mode(c.str("mode"));
  std::vector<std::string> excluded;
  std::stringstream ss(c.str("exclude"));
  for (std::string a; std::getline(ss, a, ',');)
    if (!a.empty()) excluded.push_back(a);
  const auto sets = data::load_scored(require(c, "in"));
  std::vector<data::PreferencePair> pairs;
  for (std::size_t i = 0; i < sets.size(); ++i)
    if (auto p = data::binarize_scored(sets[i], mode, excluded, derive_seed(c.u64("seed"), i))) pairs.push_back(*p);
  data::save_preferences(require(c, "out"), pairs);
  out << "kept " << pairs.size() << " of " << sets.size() << '\n';
  return 0;
}

int cmd_data_filter(const Config& c, std::ostream& out) {
  const auto f = data::filter_malformed(data::load_preferences(require(c, "in")));
  data::save_preferences(require(c, "out"), f.kept);
  out << "kept " << f.kept.size() << '\n';
  for (const auto& [reason, n] : f.report.rejected) out << "dropped " << n << " (" << reason << ")\n";
  return 0;
}

int cmd_data_downsample(const Config& c, std::ostream& out) {
  const auto pairs = data::load_preferences(require(c, "in"));
  const auto n = c.integer("n");
  if (n < 0) throw ConfigError("config key 'n': must be >= 0");
  const auto kept = data::downsample(pairs, static_cast<std::size_t>(n), c.u64("seed"));
  data::save_preferences(require(c, "out"), kept);
  out << "kept " << kept.size() << '\n';
  return 0;
}

int cmd_data_remix(const Config& c, std::ostream& out) {
  std::vector<std::pair<data::PromptPool, double>> pools;
  std::stringstream ss(require(c, "pools"));
  for (std::string item; std::getline(ss, item, ',');) {
    const auto colon = item.rfind(':');
    if (colon == std::string::npos) throw ConfigError("config key 'pools': expected path:weight, got '" + item + "'");
    Config tmp({{"w", item.substr(colon + 1), ""}});
    pools.emplace_back(data::load_prompt_pool(item.substr(0, colon)), tmp.real("w"));
  }
  const auto n = c.integer("n");
  if (n < 0) throw ConfigError("config key 'n': must be >= 0");
  const auto pool = data::remix_prompt_pools(pools, static_cast<std::size_t>(n), c.u64("seed"), c.str("tag"));
  data::save_prompt_pool(require(c, "out"), pool);
  out << "wrote " << pool.prompts.size() << " prompts\n";
  return 0;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_sweep_beta(const Config& c, std::ostream& out) {
  const auto dir = prepare_out_dir(c);
  const auto base_cfg = to_ppo_config(c);
  const auto seed = c.u64("seed");
  const auto betas = c.reals("betas");
  if (betas.empty()) throw ConfigError("config key 'betas': empty list");
  const int seeds = c.int32("seeds");
  if (seeds < 1) throw ConfigError("config key 'seeds': must be >= 1");

  const bool toy = c.str("policy").empty() || c.str("reward").empty();
  const auto setup = toy_setup();
  lm::PolicyParams sft;
  rm::RewardModelParams reward;
  std::vector<data::Conversation> prompts;
  std::vector<lm::TokenSequence> eval_prompts;
  std::optional<ToyBase> base;
  if (toy) {
    base = build_toy_base(setup, seed);
    sft = base->sft;
    reward = base->reward;
    prompts = base->train_prompts;
    eval_prompts = base->eval_prompts;
    lm::save_policy(dir / "sft.ckpt", sft);
    rm::save_reward_model(dir / "reward.ckpt", reward);
  } else {
    sft = lm::load_policy(c.str("policy"));
    reward = rm::load_reward_model(c.str("reward"));
    prompts = prompt_source(c);
    eval_prompts = render(eval::toy_prompts(static_cast<std::size_t>(c.int32("eval_prompts")), derive_seed(seed, 2)));
  }
  const auto pool = eval::make_pool(prompts, "train");

  MetricsWriter runs(dir / "runs.csv", {"beta", "seed_index", "mean_kl", "oracle_reward"});
  MetricsWriter summary(dir / "summary.csv", {"beta", "median_kl", "median_oracle_reward"});
  for (const double beta : betas) {
    std::vector<double> kls, rewards;
    for (int s = 0; s < seeds; ++s) {
      auto cfg = base_cfg;
      cfg.beta = beta;
      cfg.seed = derive_seed(seed, 100, s);
      const fs::path run_dir = dir / ("beta-" + format_double(beta)) / ("seed-" + std::to_string(s));
      fs::create_directories(run_dir);
      const auto res = run_ppo(cfg, sft, sft, reward, pool, run_dir);
      const double kl = eval::mean_kl_to_ref(res.policy, sft, eval_prompts, derive_seed(seed, 200),
                                             base_cfg.max_continuation_len);
      const double r = eval::mean_oracle_reward(eval::OracleTask{}, res.policy, eval_prompts, setup.eval_temperature,
                                                base_cfg.max_continuation_len, derive_seed(seed, 9));
      kls.push_back(kl);
      rewards.push_back(r);
      const double row[] = {beta, static_cast<double>(s), kl, r};
      runs.write(row);
    }
    const double row[] = {beta, median(kls), median(rewards)};
    summary.write(row);
    out << "beta=" << format_double(beta) << " median_kl=" << format_double(row[1])
        << " median_oracle_reward=" << format_double(row[2]) << '\n';
  }
  return 0;
}

using Handler = int (*)(const Config&, std::ostream&);

Handler handler_for(const std::string& command) {
  static const std::map<std::string, Handler> handlers{
      {"train-sft", cmd_train_sft},         {"train-rm", cmd_train_rm},
      {"train-dpo", cmd_train_dpo},         {"train-ppo", cmd_train_ppo},
      {"eval-bon", cmd_eval_bon},           {"eval-kl", cmd_eval_kl},
      {"gen", cmd_gen},                     {"sweep-beta", cmd_sweep_beta},
      {"data binarize", cmd_data_binarize}, {"data filter", cmd_data_filter},
      {"data downsample", cmd_data_downsample}, {"data remix", cmd_data_remix}};
  return handlers.at(command);
}

/// `--key value` and `--key=value` left over after CLI11 parsing.
std::vector<std::string> key_overrides(std::vector<std::string> rest) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const auto& a = rest[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw CLI::ExtrasError({a});
    const auto body = a.substr(2);
    if (body.find('=') != std::string::npos) {
      out.push_back(body);
    } else {
      if (i + 1 >= rest.size()) throw CLI::ArgumentMismatch(a + " needs a value");
      out.push_back(body + "=" + rest[++i]);
    }
  }
  return out;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learning from preference feedback: SFT, reward models, DPO and PPO", "preflearn"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;

  std::map<CLI::App*, std::string> commands;
  auto add = [&](CLI::App* parent, const std::string& name, const std::string& full, const std::string& help) {
    auto* sub = parent->add_subcommand(name, help);
    sub->allow_extras();
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--set", sets, "key=value override (repeatable)");
    const auto cfg = default_config(full);
    std::string keys;
    for (const auto& k : cfg.schema()) keys += "  " + k.name + " (default '" + k.default_value + "') " + k.help + "\n";
    sub->footer("Config keys (also accepted as --key value):\n" + keys);
    commands[sub] = full;
  };
  add(&app, "train-sft", "train-sft", "supervised finetuning");
  add(&app, "train-rm", "train-rm", "Bradley-Terry reward model");
  add(&app, "train-dpo", "train-dpo", "direct preference optimization");
  add(&app, "train-ppo", "train-ppo", "PPO against a reward model");
  add(&app, "eval-bon", "eval-bon", "best-of-n selection report");
  add(&app, "eval-kl", "eval-kl", "mean KL to a reference policy");
  add(&app, "gen", "gen", "sample one continuation");
  add(&app, "sweep-beta", "sweep-beta", "PPO across KL coefficients");
  auto* data_cmd = app.add_subcommand("data", "preference data tools");
  data_cmd->require_subcommand(1);
  add(data_cmd, "binarize", "data binarize", "scored responses to preference pairs");
  add(data_cmd, "filter", "data filter", "drop malformed pairs");
  add(data_cmd, "downsample", "data downsample", "uniform subset");
  add(data_cmd, "remix", "data remix", "weighted prompt-pool mixture");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  CLI::App* chosen = nullptr;
  try {
    app.parse(reversed);
    for (const auto& [sub, name] : commands)
      if (sub->parsed()) chosen = sub;
    if (!chosen) throw CLI::RequiredError("subcommand");
    auto overrides = key_overrides(chosen->remaining());
    overrides.insert(overrides.begin(), sets.begin(), sets.end());
    const Config config = resolve_config(commands[chosen], config_path, overrides);
    return handler_for(commands[chosen])(config, out);
  } catch (const CLI::CallForHelp&) {
    for (const auto& [sub, name] : commands)
      if (sub->parsed()) chosen = sub;
    out << (chosen ? chosen->help() : app.help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace preflearn::cli
