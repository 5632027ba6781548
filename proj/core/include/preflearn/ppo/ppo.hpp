#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "preflearn/data/types.hpp"
#include "preflearn/lm/model.hpp"
#include "preflearn/rm/reward_model.hpp"

namespace preflearn::ppo {

using ValueModelParams = rm::RewardModelParams;

struct PpoConfig {
  int prompt_batch = 64;            ///< B
  int rollouts_per_prompt = 1;      ///< r
  int minibatch = 64;               ///< b, in episodes
  int grad_accum = 1;               ///< g
  int epochs = 1;                   ///< E, passes over the prompt pool
  int inner_epochs = 1;             ///< e, passes over each rollout batch
  int max_prompt_len = 1024;        ///< L_p
  int max_continuation_len = 1024;  ///< L_c
  double temperature = 0.7;
  double beta = 0.05;
  double gamma = 1.0;
  double lam = 0.95;
  double eps_clip = 0.2;
  double alpha = 0.1;
  double learning_rate = 1e-6;
  double warmup_fraction = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-5;
  double weight_decay = 0.0;
  double grad_clip_norm = 1.0;
  double trunc_penalty = -10.0;
  std::uint64_t seed = 0;
  /// Large-batch mode: before its first update, each minibatch recomputes
  /// its old log-probs with a fresh forward pass under the current policy
  /// (so nu_t = 1 there, checked in-run). Off: old log-probs are the ones
  /// captured at rollout time.
  bool minibatch_forward = false;

  /// Throws ConfigError on out-of-range values, b > B*r, or B*r not a
  /// multiple of b, or b not a multiple of g.
  void validate() const;
  int episodes_per_batch() const noexcept { return prompt_batch * rollouts_per_prompt; }
};

struct Episode {
  std::size_t prompt_index = 0;
  lm::TokenSequence prompt;
  lm::TokenSequence continuation;
  bool truncated = false;
  std::vector<double> rollout_logprobs;
  std::vector<double> ref_logprobs;
  std::vector<double> values;
  std::vector<double> shaped_rewards;
  std::vector<double> advantages;
  std::vector<double> returns;
  double rm_score = 0.0;         ///< 0 for truncated episodes, which are never scored
  double terminal_reward = 0.0;  ///< rm_score, or trunc_penalty when truncated

  std::size_t length() const noexcept { return continuation.size(); }
  /// Sum over tokens of rollout minus reference log-probs.
  double kl() const;
};

struct RolloutBatch {
  std::vector<Episode> episodes;
};

/// prompts.size() * r episodes, grouped by prompt in prompt order. Episode
/// (i, j) samples with derive_seed(seed, batch_index, i, j). Only prompt,
/// continuation, truncated and rollout_logprobs are filled.
/// Throws LengthError for prompts longer than L_p, ConfigError when empty.
RolloutBatch rollout(const lm::PolicyParams& policy, const std::vector<lm::TokenSequence>& prompts,
                     const PpoConfig& config, std::uint64_t batch_index = 0);

/// r_t = -beta * (policy_t - ref_t); the last token also gets rm_score, or
/// trunc_penalty in its place when truncated. Throws ShapeError on length
/// mismatch or empty input.
std::vector<double> shape_token_rewards(std::span<const double> policy_logprobs, std::span<const double> ref_logprobs,
                                        double rm_score, bool truncated, double beta, double trunc_penalty);

struct Gae {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Backward recursion with V = 0 past the last token. Throws ShapeError on
/// empty or mismatched input.
Gae compute_gae(std::span<const double> rewards, std::span<const double> values, double gamma, double lam);

/// (x - mean) / (population std + 1e-8); the mean is only subtracted when
/// shift_mean is set.
std::vector<double> whiten(std::span<const double> values, bool shift_mean = true);

/// -mean_t min(nu_t A_t, clip(nu_t, 1 - eps, 1 + eps) A_t), nu_t =
/// exp(new_t - rollout_t). A non-empty `grad` receives dloss/dnew.
double ppo_policy_loss(std::span<const double> new_logprobs, std::span<const double> rollout_logprobs,
                       std::span<const double> advantages, double eps_clip, std::span<double> grad = {});

/// mean_t 0.5 * max((V_t - G_t)^2, (clip(V_t, Vr_t - eps, Vr_t + eps) - G_t)^2).
/// A non-empty `grad` receives dloss/dV_new.
double ppo_value_loss(std::span<const double> values_new, std::span<const double> values_rollout,
                      std::span<const double> returns, double eps_clip, std::span<double> grad = {});

struct EpisodeLoss {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double max_ratio_deviation = 0.0;  ///< max |nu_t - 1| over the episode
};

/// weight * (policy loss, value loss) of one episode under the current
/// policy and value model, with d(weight * (L_pi + alpha * L_V)) accumulated
/// into the policy gradient and the flat value-model gradient.
template <typename T>
EpisodeLoss episode_loss_and_grad(const lm::ModelParams<T>& policy, const rm::RewardParams<T>& value,
                                  const Episode& episode, double eps_clip, double alpha, double weight,
                                  std::span<T> policy_grad, std::span<T> value_grad);

/// Fills ref_logprobs, values, rm_score, terminal_reward, shaped_rewards,
/// then GAE and batch-wide advantage whitening.
void annotate(RolloutBatch& batch, const lm::PolicyParams& reference, const rm::RewardModelParams& reward,
              const ValueModelParams& value, const PpoConfig& config);

struct PpoStepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_terminal_reward = 0.0;
  double mean_kl = 0.0;
  double fraction_truncated = 0.0;
  double mean_continuation_length = 0.0;
  double learning_rate = 0.0;
  /// max |nu_t - 1| over minibatches evaluated before any update of their
  /// old log-probs: the first minibatch of the batch, or every first-inner-
  /// epoch minibatch in large-batch mode.
  double initial_ratio_deviation = 0.0;
};

struct PpoCallbacks {
  std::function<void(const PpoStepMetrics&)> on_step;
  std::function<void(std::size_t epoch, const lm::PolicyParams&, const ValueModelParams&)> on_epoch;
};

struct PpoResult {
  lm::PolicyParams policy;
  ValueModelParams value;
};

/// Value model starts as a copy of `reward`. Each epoch shuffles the pool
/// and takes consecutive batches of B prompts (a trailing partial batch is
/// dropped). Throws ConfigError when the pool has fewer than B prompts or
/// L_p + L_c + 1 exceeds the context, NumericalError on non-finite losses.
PpoResult train_ppo(const PpoConfig& config, const lm::PolicyParams& policy_init, const lm::PolicyParams& reference,
                    const rm::RewardModelParams& reward, const data::PromptPool& prompts,
                    const PpoCallbacks& callbacks = {});

}  // namespace preflearn::ppo
