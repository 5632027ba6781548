// Runs the acceptance criteria end to end and prints one PASS/FAIL line per
// criterion. Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "preflearn/cli/commands.hpp"
#include "preflearn/cli/metrics.hpp"
#include "preflearn/cli/toy.hpp"
#include "preflearn/common/rng.hpp"
#include "preflearn/data/pipeline.hpp"
#include "preflearn/dpo/dpo.hpp"
#include "preflearn/eval/eval.hpp"
#include "preflearn/lm/gradcheck.hpp"
#include "preflearn/lm/logprobs.hpp"
#include "preflearn/lm/sft.hpp"
#include "preflearn/ppo/ppo.hpp"
#include "preflearn/rm/reward_model.hpp"

namespace fs = std::filesystem;
using namespace preflearn;
using preflearn::testing::random_params;
using preflearn::testing::random_tokens;
using preflearn::testing::tiny_config;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> normals(std::mt19937_64& rng, std::size_t n, double s) {
  std::normal_distribution<double> d(0.0, s);
  std::vector<double> x(n);
  for (auto& e : x) e = d(rng);
  return x;
}

data::TokenizedPair random_pair(std::mt19937_64& rng) {
  data::TokenizedPair p;
  p.prompt = random_tokens(rng, 1 + rng() % 3);
  p.chosen = random_tokens(rng, 1 + rng() % 3);
  p.chosen.push_back(lm::Vocabulary::kEos);
  p.rejected = random_tokens(rng, 1 + rng() % 3);
  p.rejected.push_back(lm::Vocabulary::kEos);
  return p;
}

rm::RewardParams<double> random_reward(std::uint64_t seed) {
  rm::RewardParams<double> r(random_params<double>(tiny_config(), seed));
  std::mt19937_64 rng(seed ^ 0x5eed);
  for (auto& h : r.head) h = normals(rng, 1, 0.5)[0];
  return r;
}

// 1 -----------------------------------------------------------------------

Outcome gradient_suite() {
  constexpr int kInstances = 20;
  constexpr double kTol = 1e-4;
  constexpr double kEps = 1e-5;
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  std::size_t max_params = 0;
  std::mt19937_64 rng(2024);

  for (int i = 0; i < kInstances; ++i) {
    const auto pi = random_params<double>(tiny_config(), 1000 + i);
    const auto ref = random_params<double>(tiny_config(), 2000 + i);
    max_params = std::max(max_params, pi.size());

    {
      const std::vector<lm::Demonstration> demos{{random_tokens(rng, 1 + rng() % 3), random_tokens(rng, 1 + rng() % 4)},
                                                 {random_tokens(rng, 1 + rng() % 3), random_tokens(rng, 1 + rng() % 4)}};
      const std::span<const lm::Demonstration> batch(demos);
      std::vector<double> g(pi.size(), 0.0);
      lm::sft_loss_and_grad(pi, batch, std::span<double>(g));
      const auto n = lm::finite_diff_gradient(
          [&](const lm::ModelParams<double>& q) { return lm::sft_loss_and_grad(q, batch, std::span<double>()); }, pi,
          kEps);
      worst["cross-entropy"] = std::max(worst["cross-entropy"], lm::max_relative_error(g, n));
    }
    {
      const auto r = random_reward(3000 + i);
      max_params = std::max(max_params, r.size());
      const std::vector<data::TokenizedPair> pairs{random_pair(rng), random_pair(rng)};
      const std::span<const data::TokenizedPair> batch(pairs);
      std::vector<double> g(r.size(), 0.0);
      rm::bt_loss_and_grad(r, batch, std::span<double>(g));
      const auto n = lm::finite_diff_gradient(
          [&](std::span<const double> x) {
            auto q = r;
            q.assign_flat(x);
            return rm::bt_loss_and_grad(q, batch, std::span<double>());
          },
          r.flatten(), kEps);
      worst["bradley-terry"] = std::max(worst["bradley-terry"], lm::max_relative_error(g, n));
    }
    {
      const std::vector<data::TokenizedPair> pairs{random_pair(rng), random_pair(rng)};
      const std::span<const data::TokenizedPair> batch(pairs);
      const double beta = 0.1 + 0.9 * (i % 5) / 4.0;
      std::vector<double> g(pi.size(), 0.0);
      dpo::dpo_loss_and_grad(pi, ref, batch, beta, std::span<double>(g));
      const auto n = lm::finite_diff_gradient(
          [&](const lm::ModelParams<double>& q) {
            return dpo::dpo_loss_and_grad(q, ref, batch, beta, std::span<double>());
          },
          pi, kEps);
      worst["dpo"] = std::max(worst["dpo"], lm::max_relative_error(g, n));
    }
    {
      const auto value = random_reward(4000 + i);
      ppo::Episode ep;
      ep.prompt = random_tokens(rng, 1 + rng() % 3);
      ep.continuation = random_tokens(rng, 1 + rng() % 4);
      const std::size_t len = ep.length();
      ep.rollout_logprobs = lm::score_continuation(pi, ep.prompt, ep.continuation).token_logprobs;
      const auto jitter = normals(rng, len, 0.15);
      for (std::size_t t = 0; t < len; ++t) ep.rollout_logprobs[t] += jitter[t];
      ep.values = normals(rng, len, 0.3);
      ep.advantages = normals(rng, len, 1.0);
      ep.returns = normals(rng, len, 1.0);
      const double eps_clip = 0.2, alpha = 0.1, weight = 0.5;

      std::vector<double> pg(pi.size(), 0.0), vg(value.size(), 0.0);
      ppo::episode_loss_and_grad(pi, value, ep, eps_clip, alpha, weight, std::span<double>(pg), std::span<double>(vg));
      const auto pn = lm::finite_diff_gradient(
          [&](const lm::ModelParams<double>& q) {
            return ppo::episode_loss_and_grad(q, value, ep, eps_clip, alpha, weight, std::span<double>(),
                                              std::span<double>())
                .policy_loss;
          },
          pi, kEps);
      worst["ppo policy"] = std::max(worst["ppo policy"], lm::max_relative_error(pg, pn));
      const auto vn = lm::finite_diff_gradient(
          [&](std::span<const double> x) {
            auto q = value;
            q.assign_flat(x);
            return alpha * ppo::episode_loss_and_grad(pi, q, ep, eps_clip, alpha, weight, std::span<double>(),
                                                      std::span<double>())
                               .value_loss;
          },
          value.flatten(), kEps);
      worst["ppo value"] = std::max(worst["ppo value"], lm::max_relative_error(vg, vn));
    }
  }
  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 120.0 && max_params <= 5000;
  std::string detail = std::to_string(kInstances) + " instances per loss, <= " + std::to_string(max_params) +
                       " params;";
  for (const auto& [name, err] : worst) {
    ok = ok && err < kTol;
    detail += " " + name + " " + fmt("%.2e", err) + ";";
  }
  detail += " " + fmt("%.1f s", elapsed);
  return {ok, detail};
}

// 2 -----------------------------------------------------------------------

Outcome analytic_values() {
  std::mt19937_64 rng(7);
  double dpo_err = 0, bt_err = 0;
  for (int i = 0; i < 10; ++i) {
    const std::vector<data::TokenizedPair> pairs{random_pair(rng), random_pair(rng), random_pair(rng)};
    const std::span<const data::TokenizedPair> batch(pairs);
    const auto p = random_params<double>(tiny_config(), 50 + i);
    dpo_err = std::max(dpo_err, std::abs(dpo::dpo_loss_and_grad(p, p, batch, 0.1, std::span<double>()) - std::log(2.0)));
    const auto pf = p.cast<float>();
    dpo_err = std::max(dpo_err, std::abs(dpo::dpo_loss_and_grad(pf, pf, batch, 0.1, std::span<float>()) - std::log(2.0)));

    rm::RewardParams<double> zero_head(p);
    bt_err = std::max(bt_err, std::abs(rm::bt_loss_and_grad(zero_head, batch, std::span<double>()) - std::log(2.0)));
    auto same = pairs;
    for (auto& s : same) s.rejected = s.chosen;
    bt_err = std::max(bt_err, std::abs(rm::bt_loss_and_grad(random_reward(60 + i),
                                                            std::span<const data::TokenizedPair>(same),
                                                            std::span<double>()) -
                                       std::log(2.0)));
  }
  const lm::PolicyParams uniform(cli::toy_setup().model);
  std::vector<lm::Demonstration> demos;
  for (int i = 0; i < 8; ++i) demos.push_back({random_tokens(rng, 1 + i % 4), random_tokens(rng, 1 + i % 7)});
  const double ce = lm::sft_loss_and_grad(uniform, std::span<const lm::Demonstration>(demos), std::span<float>());
  const double ce_err = std::abs(ce - std::log(258.0));
  const bool ok = dpo_err <= 1e-9 && bt_err <= 1e-9 && ce_err <= 1e-6;
  return {ok, "|dpo - ln2| " + fmt("%.1e", dpo_err) + "; |bt - ln2| " + fmt("%.1e", bt_err) + "; |ce - ln258| " +
                  fmt("%.1e", ce_err)};
}

// 3 -----------------------------------------------------------------------

Outcome gae_oracle() {
  std::mt19937_64 rng(11);
  double worst = 0;
  bool exact = true;
  std::uniform_int_distribution<int> dyadic(-800, 800);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + rng() % 8;
    const auto r = normals(rng, n, 1.0), v = normals(rng, n, 1.0);
    for (double gamma : {0.9, 1.0})
      for (double lam : {0.5, 0.95, 1.0}) {
        const auto g = ppo::compute_gae(r, v, gamma, lam);
        for (std::size_t t = 0; t < n; ++t) {
          double a = 0;
          for (std::size_t l = 0; t + l < n; ++l) {
            const double next = t + l + 1 < n ? v[t + l + 1] : 0.0;
            a += std::pow(gamma * lam, static_cast<double>(l)) * (r[t + l] + gamma * next - v[t + l]);
          }
          worst = std::max({worst, std::abs(g.advantages[t] - a), std::abs(g.returns[t] - (a + v[t]))});
        }
      }
    std::vector<double> ri(n), vi(n);
    for (std::size_t t = 0; t < n; ++t) {
      ri[t] = dyadic(rng) / 8.0;
      vi[t] = dyadic(rng) / 8.0;
    }
    const auto g = ppo::compute_gae(ri, vi, 1.0, 1.0);
    for (std::size_t t = 0; t < n; ++t) {
      double suffix = 0;
      for (std::size_t k = t; k < n; ++k) suffix += ri[k];
      exact = exact && g.advantages[t] == suffix - vi[t];
    }
  }
  return {worst <= 1e-10 && exact,
          "200 episodes x 6 (gamma, lambda): max err " + fmt("%.1e", worst) +
              (exact ? "; lambda=gamma=1 suffix identity exact" : "; lambda=gamma=1 suffix identity violated")};
}

// 4 -----------------------------------------------------------------------

Outcome reward_shaping() {
  auto policy = random_params<float>(tiny_config(), 77, 0.3);
  policy.tensor("head.b")[lm::Vocabulary::kEos] = 4.0f;
  const rm::RewardModelParams reward = random_reward(78).cast<float>();
  ppo::PpoConfig cfg;
  cfg.max_prompt_len = 4;
  cfg.max_continuation_len = 6;
  cfg.temperature = 1.0;
  cfg.beta = 0.05;
  cfg.seed = 79;
  std::mt19937_64 rng(80);
  std::size_t episodes = 0, truncated = 0, violations = 0;
  for (std::uint64_t batch_index = 0; batch_index < 10; ++batch_index) {
    std::vector<lm::TokenSequence> prompts;
    for (int i = 0; i < 100; ++i) prompts.push_back(random_tokens(rng, 1 + rng() % 4));
    auto batch = ppo::rollout(policy, prompts, cfg, batch_index);
    ppo::annotate(batch, policy, reward, reward, cfg);
    for (const auto& ep : batch.episodes) {
      ++episodes;
      truncated += ep.truncated;
      const std::size_t n = ep.length();
      for (std::size_t t = 0; t + 1 < n; ++t) violations += ep.shaped_rewards[t] != 0.0;
      const double expected_terminal = ep.truncated ? -10.0 : static_cast<double>(rm::score(reward, ep.prompt, ep.continuation));
      violations += ep.shaped_rewards[n - 1] != expected_terminal;
      violations += ep.terminal_reward != expected_terminal;
    }
  }
  const bool ok = episodes == 1000 && violations == 0 && truncated > 0 && truncated < episodes;
  return {ok, std::to_string(episodes) + " episodes (" + std::to_string(truncated) + " truncated), " +
                  std::to_string(violations) + " violations"};
}

// 5 -----------------------------------------------------------------------

struct ToyRun {
  std::uint64_t seed;
  double rm_accuracy, sft_reward, ppo_reward, dpo_reward, dpo_margin;
};

std::vector<cli::ToyBase> g_bases;

Outcome toy_end_to_end() {
  const auto setup = cli::toy_setup();
  const auto t0 = Clock::now();
  std::vector<ToyRun> runs;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto base = cli::build_toy_base(setup, seed);
    ToyRun r{seed, rm::pairwise_accuracy(base.reward, base.heldout_pairs), cli::toy_eval_reward(setup, base, base.sft),
             0, 0, 0};

    auto pcfg = setup.ppo;
    pcfg.seed = derive_seed(seed, 10);
    const auto ppo_res = ppo::train_ppo(pcfg, base.sft, base.sft, base.reward, eval::make_pool(base.train_prompts, "train"));
    r.ppo_reward = cli::toy_eval_reward(setup, base, ppo_res.policy);

    auto dcfg = setup.dpo;
    dcfg.seed = derive_seed(seed, 11);
    const auto dpo_policy = dpo::train_dpo(dcfg, base.sft, base.sft, base.train_pairs);
    r.dpo_margin = dpo::summarize_margins(dpo_policy, base.sft, base.heldout_pairs, dcfg.beta).mean_margin;
    r.dpo_reward = cli::toy_eval_reward(setup, base, dpo_policy);

    const bool seed_ok = r.rm_accuracy >= 0.9 && r.ppo_reward - r.sft_reward >= 0.15 && r.dpo_margin > 0.0 &&
                         r.dpo_reward - r.sft_reward >= 0.05;
    std::cout << "    seed " << seed << ": rm_acc " << fmt("%.3f", r.rm_accuracy) << " sft " << fmt("%.3f", r.sft_reward)
              << " ppo " << fmt("%.3f", r.ppo_reward) << " (+" << fmt("%.3f", r.ppo_reward - r.sft_reward) << ")"
              << " dpo " << fmt("%.3f", r.dpo_reward) << " (+" << fmt("%.3f", r.dpo_reward - r.sft_reward) << ")"
              << " margin " << fmt("%.3f", r.dpo_margin) << (seed_ok ? "" : "  <-- below threshold") << std::endl;
    ok = ok && seed_ok;
    runs.push_back(r);
    g_bases.push_back(std::move(base));
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 1800.0;
  double min_acc = 1, min_ppo = 1, min_dpo = 1, min_margin = 1e9;
  for (const auto& r : runs) {
    min_acc = std::min(min_acc, r.rm_accuracy);
    min_ppo = std::min(min_ppo, r.ppo_reward - r.sft_reward);
    min_dpo = std::min(min_dpo, r.dpo_reward - r.sft_reward);
    min_margin = std::min(min_margin, r.dpo_margin);
  }
  return {ok, "5 seeds: min rm acc " + fmt("%.3f", min_acc) + ", min ppo gain " + fmt("%.3f", min_ppo) +
                  ", min dpo gain " + fmt("%.3f", min_dpo) + ", min dpo margin " + fmt("%.3f", min_margin) + "; " +
                  fmt("%.0f s", elapsed)};
}

// 6 -----------------------------------------------------------------------

Outcome best_of_n_monotone() {
  if (g_bases.empty()) return {false, "toy base unavailable"};
  const auto& base = g_bases.front();
  const auto setup = cli::toy_setup();
  std::vector<lm::TokenSequence> prompts;
  for (const auto& c : eval::toy_prompts(100, 606)) prompts.push_back(data::render_prompt(c));
  const auto sel = eval::best_of_n(base.sft, eval::oracle_scorer(setup.task), prompts, 16, 0.7, setup.max_len, 607);
  std::vector<double> means;
  bool consistent = true;
  for (std::size_t n : {1, 2, 4, 8, 16}) {
    double m = 0;
    for (const auto& s : sel) {
      std::vector<double> scores;
      for (const auto& c : s.candidates) scores.push_back(c.score);
      m += scores[eval::select_best(scores, n)];
      if (n == 16) consistent = consistent && eval::select_best(scores, n) == s.selected;
    }
    means.push_back(m / static_cast<double>(sel.size()));
  }
  bool ok = consistent && sel.size() == 100;
  std::string detail = "means over n=1,2,4,8,16:";
  for (std::size_t k = 0; k < means.size(); ++k) {
    detail += " " + fmt("%.4f", means[k]);
    if (k > 0) ok = ok && means[k] >= means[k - 1];
  }
  return {ok, detail};
}

// 7 -----------------------------------------------------------------------

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("preflearn-acceptance-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(std::vector<std::string> args, std::string* captured = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  if (captured) *captured = out.str();
  if (code != 0) std::cout << "    command failed (" << code << "): " << err.str();
  return code;
}

Outcome beta_sweep() {
  const auto dir = scratch_dir("sweep");
  const auto t0 = Clock::now();
  std::string printed;
  if (run_cli({"sweep-beta", "--config", PREFLEARN_TOY_SWEEP_CONFIG, "--out", dir.string()}, &printed) != 0)
    return {false, "sweep-beta failed"};
  const auto summary = cli::read_metrics(dir / "summary.csv");
  const std::vector<double> expected{0.01, 0.025, 0.0325, 0.05};
  if (summary.rows.size() != expected.size()) return {false, "summary has the wrong number of rows"};
  bool ok = true;
  std::string detail = "median KL";
  for (std::size_t k = 0; k < summary.rows.size(); ++k) {
    ok = ok && summary.rows[k][0] == expected[k];
    detail += " " + fmt("%.4f", summary.rows[k][1]);
    if (k > 0) ok = ok && summary.rows[k][1] < summary.rows[k - 1][1];
  }
  detail += " for beta 0.01, 0.025, 0.0325, 0.05; " + fmt("%.0f s", seconds_since(t0));
  return {ok, detail};
}

// 8 -----------------------------------------------------------------------

Outcome mode_equivalence() {
  if (g_bases.empty()) return {false, "toy base unavailable"};
  const auto& base = g_bases.front();
  const auto setup = cli::toy_setup();
  const auto pool = eval::make_pool(base.train_prompts, "train");

  auto cfg = setup.ppo;
  cfg.epochs = 1;
  cfg.inner_epochs = 1;
  cfg.minibatch = cfg.prompt_batch;
  cfg.seed = 808;
  cfg.minibatch_forward = false;
  const auto a = ppo::train_ppo(cfg, base.sft, base.sft, base.reward, pool);
  cfg.minibatch_forward = true;
  const auto b = ppo::train_ppo(cfg, base.sft, base.sft, base.reward, pool);
  const bool identical = a.policy == b.policy && a.value == b.value && !(a.policy == base.sft);

  cfg.minibatch = cfg.prompt_batch / 8;
  std::size_t steps = 0;
  double deviation = 0;
  bool large_ok = true;
  std::string error;
  try {
    ppo::train_ppo(cfg, base.sft, base.sft, base.reward, pool,
                   {[&](const ppo::PpoStepMetrics& m) {
                      ++steps;
                      deviation = std::max(deviation, m.initial_ratio_deviation);
                    },
                    {}});
  } catch (const std::exception& e) {
    large_ok = false;
    error = e.what();
  }
  large_ok = large_ok && steps > 0 && deviation == 0.0;
  return {identical && large_ok,
          std::string("B=b: ") + (identical ? "bitwise identical" : "differ") + "; B=8b: " + std::to_string(steps) +
              " steps, max |nu-1| at minibatch start " + fmt("%.1e", deviation) + (error.empty() ? "" : " (" + error + ")")};
}

// 9 -----------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return files;
}

bool training_chain(const fs::path& dir) {
  const auto d = [&](const std::string& s) { return (dir / s).string(); };
  const std::vector<std::string> seed{"--set", "seed=3"};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), seed.begin(), seed.end());
    return args;
  };
  return run_cli(with({"train-sft", "--out", d("sft"), "--context", "32"})) == 0 &&
         run_cli(with({"train-rm", "--out", d("rm"), "--policy", d("sft/policy.ckpt"), "--data", "toy", "--toy_pairs",
                       "24", "--epochs", "1", "--batch", "8", "--eta", "1e-3", "--L_c", "16"})) == 0 &&
         run_cli(with({"train-dpo", "--out", d("dpo"), "--policy", d("sft/policy.ckpt"), "--data", d("rm/pairs.jsonl"),
                       "--epochs", "1", "--batch", "8", "--eta", "1e-4", "--beta", "0.1"})) == 0 &&
         run_cli(with({"train-ppo", "--out", d("ppo"), "--policy", d("sft/policy.ckpt"), "--reward",
                       d("rm/reward.ckpt"),
                   "--prompts", "toy", "--toy_prompts", "16", "--B", "8", "--b", "4", "--E", "2", "--L_p", "8",
                       "--L_c", "16", "--eta", "1e-4"})) == 0;
}

Outcome determinism() {
  const auto dir = scratch_dir("determinism");
  if (!training_chain(dir)) return {false, "first run failed"};
  const auto first = snapshot(dir);
  fs::remove_all(dir);
  fs::create_directories(dir);
  if (!training_chain(dir)) return {false, "second run failed"};
  const auto second = snapshot(dir);
  std::size_t checkpoints = 0, metrics = 0;
  for (const auto& [name, _] : first) {
    checkpoints += name.ends_with(".ckpt");
    metrics += name.ends_with("metrics.csv");
  }
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != bytes) differing.push_back(name);
  }
  const bool ok = differing.empty() && first.size() == second.size() && checkpoints >= 4 && metrics == 4;
  std::string detail = std::to_string(first.size()) + " files (" + std::to_string(checkpoints) + " checkpoints, " +
                       std::to_string(metrics) + " metrics) across train-sft, train-rm, train-dpo, train-ppo";
  if (!differing.empty()) detail += "; differing: " + differing.front();
  return {ok, detail};
}

}  // namespace

/// Optional arguments select criteria by number; all run by default.
int main(int argc, char** argv) {
  std::vector<bool> selected(9, argc <= 1);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k >= 1 && k <= 9) selected[k - 1] = true;
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"analytic loss values", analytic_values},
      {"GAE oracle", gae_oracle},
      {"reward shaping contract", reward_shaping},
      {"toy end-to-end", toy_end_to_end},
      {"best-of-n monotonicity", best_of_n_monotone},
      {"beta sweep", beta_sweep},
      {"mode equivalence", mode_equivalence},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
