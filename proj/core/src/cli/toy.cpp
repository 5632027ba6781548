#include "preflearn/cli/toy.hpp"

#include "preflearn/common/rng.hpp"
#include "preflearn/data/pipeline.hpp"

namespace preflearn::cli {

ToySetup toy_setup() {
  ToySetup s;
  s.model.context = 32;

  s.sft = lm::TrainConfig::sft_defaults();
  s.sft.epochs = 4;
  s.sft.batch_size = 16;

  s.reward = lm::TrainConfig::reward_model_defaults();
  s.reward.learning_rate = 1e-3;
  s.reward.epochs = 3;
  s.reward.batch_size = 16;

  s.dpo.beta = 0.5;
  s.dpo.learning_rate = 3e-4;
  s.dpo.epochs = 1;
  s.dpo.batch_size = 16;

  s.ppo.prompt_batch = 16;
  s.ppo.minibatch = 16;
  s.ppo.epochs = 3;
  s.ppo.max_prompt_len = 8;
  s.ppo.max_continuation_len = s.max_len;
  s.ppo.learning_rate = 1e-4;
  return s;
}

ToyBase build_toy_base(const ToySetup& setup, std::uint64_t seed) {
  ToyBase b;
  b.seed = seed;
  b.train_prompts = eval::toy_prompts(setup.train_prompts, derive_seed(seed, 1));
  for (const auto& c : eval::toy_prompts(setup.eval_prompts, derive_seed(seed, 2)))
    b.eval_prompts.push_back(data::render_prompt(c));

  auto sft_cfg = setup.sft;
  sft_cfg.seed = derive_seed(seed, 3);
  b.sft = lm::train_sft(sft_cfg, lm::PolicyParams::initialized(setup.model, derive_seed(seed, 4)),
                        eval::toy_demonstrations(b.train_prompts, derive_seed(seed, 5)));

  const auto pref_prompts = eval::toy_prompts(setup.preference_prompts, derive_seed(seed, 6));
  auto pairs = eval::make_synthetic_preferences(setup.task, b.sft, pref_prompts,
                                                setup.train_pairs + setup.heldout_pairs, setup.max_len,
                                                derive_seed(seed, 7));
  const std::size_t n_train = std::min(setup.train_pairs, pairs.size());
  b.train_pairs.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_train));
  b.heldout_pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train), pairs.end());

  auto rm_cfg = setup.reward;
  rm_cfg.seed = derive_seed(seed, 8);
  b.reward = rm::train_reward_model(rm_cfg, b.sft, b.train_pairs);
  return b;
}

double toy_eval_reward(const ToySetup& setup, const ToyBase& base, const lm::PolicyParams& policy) {
  return eval::mean_oracle_reward(setup.task, policy, base.eval_prompts, setup.eval_temperature, setup.max_len,
                                  derive_seed(base.seed, 9));
}

}  // namespace preflearn::cli
