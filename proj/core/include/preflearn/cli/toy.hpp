#pragma once

#include <cstdint>
#include <vector>

#include "preflearn/data/types.hpp"
#include "preflearn/dpo/dpo.hpp"
#include "preflearn/eval/eval.hpp"
#include "preflearn/lm/sft.hpp"
#include "preflearn/ppo/ppo.hpp"

namespace preflearn::cli {

/// Desk-scale settings for the target-density experiment: a 2-layer,
/// width-64 model, short digit prompts and continuations of at most 16
/// tokens. Learning rates are far above the full-scale defaults.
struct ToySetup {
  lm::ModelConfig model;
  eval::OracleTask task;
  std::size_t train_prompts = 256;
  std::size_t eval_prompts = 128;
  std::size_t preference_prompts = 512;
  std::size_t train_pairs = 512;
  std::size_t heldout_pairs = 256;
  int max_len = 16;
  double eval_temperature = 0.7;
  lm::TrainConfig sft;
  lm::TrainConfig reward;
  dpo::DpoConfig dpo;
  ppo::PpoConfig ppo;
};

ToySetup toy_setup();

/// SFT policy, synthetic preferences labelled by the oracle and the reward
/// model trained on them. Everything derives from `seed`.
struct ToyBase {
  std::uint64_t seed = 0;
  std::vector<data::Conversation> train_prompts;
  std::vector<lm::TokenSequence> eval_prompts;
  lm::PolicyParams sft;
  std::vector<data::PreferencePair> train_pairs;
  std::vector<data::PreferencePair> heldout_pairs;
  rm::RewardModelParams reward;
};

ToyBase build_toy_base(const ToySetup& setup, std::uint64_t seed);

/// Mean oracle reward on the evaluation prompts, with a fixed sampling seed
/// so policies are compared on common random numbers.
double toy_eval_reward(const ToySetup& setup, const ToyBase& base, const lm::PolicyParams& policy);

}  // namespace preflearn::cli
