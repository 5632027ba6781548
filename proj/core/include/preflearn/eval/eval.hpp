#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "preflearn/data/types.hpp"
#include "preflearn/lm/model.hpp"
#include "preflearn/lm/sft.hpp"
#include "preflearn/rm/reward_model.hpp"

namespace preflearn::eval {

/// "target-density": share of target tokens among the continuation tokens
/// before the first EOS, plus `eos_bonus` when an EOS is present, capped at 1.
struct OracleTask {
  std::string id = "target-density";
  lm::TokenId target = 'a';
  double eos_bonus = 0.1;
};

struct OracleScore {
  double value = 0.0;
  bool empty_continuation = false;  ///< warning: nothing to score, value is 0
};

OracleScore oracle_score(const OracleTask& task, const lm::TokenSequence& prompt, const lm::TokenSequence& continuation);
double oracle_reward(const OracleTask& task, const lm::TokenSequence& prompt, const lm::TokenSequence& continuation);

/// Mean oracle reward of continuations sampled from `policy`, one per prompt
/// with seed derive_seed(seed, i).
double mean_oracle_reward(const OracleTask& task, const lm::PolicyParams& policy,
                          const std::vector<lm::TokenSequence>& prompts, double temperature, int max_len,
                          std::uint64_t seed);

/// Single-turn prompts made of 2 to 6 decimal digits.
std::vector<data::Conversation> toy_prompts(std::size_t n, std::uint64_t seed);

/// One demonstration per prompt: 3 to 8 letters drawn uniformly from "abcd".
std::vector<lm::Demonstration> toy_demonstrations(const std::vector<data::Conversation>& prompts, std::uint64_t seed);

data::PromptPool make_pool(const std::vector<data::Conversation>& prompts, std::string tag);

/// Cycles through the prompts drawing two continuations at temperature 1
/// and labels the one with the higher oracle reward as chosen. Ties,
/// truncated samples, empty responses and samples containing non-byte
/// tokens are skipped. Stops after n_pairs pairs or 50 * n_pairs attempts.
std::vector<data::PreferencePair> make_synthetic_preferences(const OracleTask& task, const lm::PolicyParams& sampler,
                                                             const std::vector<data::Conversation>& prompts,
                                                             std::size_t n_pairs, int max_len, std::uint64_t seed);

using Scorer = std::function<double(const lm::TokenSequence& prompt, const lm::TokenSequence& continuation)>;

Scorer oracle_scorer(const OracleTask& task);
Scorer reward_model_scorer(const rm::RewardModelParams& reward);

struct Candidate {
  lm::TokenSequence continuation;
  bool truncated = false;
  double score = 0.0;
};

struct BonSelection {
  lm::TokenSequence prompt;
  std::size_t selected = 0;
  std::vector<Candidate> candidates;  ///< the audit record, in sample order

  const Candidate& best() const { return candidates[selected]; }
};

/// Per prompt i, candidate j is sampled with derive_seed(seed, i, j); the
/// highest score wins, lowest j on ties. Throws ConfigError for n == 0.
std::vector<BonSelection> best_of_n(const lm::PolicyParams& policy, const Scorer& scorer,
                                    const std::vector<lm::TokenSequence>& prompts, std::size_t n = 16,
                                    double temperature = 0.7, int max_len = 32, std::uint64_t seed = 0);

/// Index of the best of the first n scores, lowest index on ties.
std::size_t select_best(std::span<const double> scores, std::size_t n);

/// Sum over positions of the exact KL(policy || reference) of the
/// next-token distributions along prompt + continuation.
template <typename T>
double sequence_kl(const lm::ModelParams<T>& policy, const lm::ModelParams<T>& reference,
                   const lm::TokenSequence& prompt, const lm::TokenSequence& continuation);

/// One continuation per prompt sampled from the policy at temperature 1
/// (seed derive_seed(seed, i)); mean of the per-episode sequence_kl.
double mean_kl_to_ref(const lm::PolicyParams& policy, const lm::PolicyParams& reference,
                      const std::vector<lm::TokenSequence>& prompts, std::uint64_t seed, int max_len = 32);

/// One JSON object per line: prompt, continuation, score, n, and the
/// candidates when requested.
void write_bon_report(const std::filesystem::path& path, const std::vector<BonSelection>& selections,
                      bool include_candidates);

}  // namespace preflearn::eval
