#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "preflearn/data/pipeline.hpp"
#include "preflearn/lm/model.hpp"
#include "preflearn/lm/optimizer.hpp"

namespace preflearn::dpo {

struct DpoConfig {
  double beta = 0.01;
  double learning_rate = 5e-7;
  int epochs = 3;
  double warmup_fraction = 0.1;
  int batch_size = 32;
  std::uint64_t seed = 0;
  lm::AdamWConfig adam{};
  double grad_clip_norm = 1.0;

  void validate() const;
};

/// Sequence log-likelihood log pi(y | x): the sum of per-token log-probs over
/// the response tokens only (prompt tokens condition but are not scored).
template <typename T>
T sequence_logprob(const lm::ModelParams<T>& params, const lm::TokenSequence& prompt,
                   const lm::TokenSequence& response);

/// beta * [log pi/pi_ref (y_c|x)] - beta * [log pi/pi_ref (y_r|x)]. The
/// partition term of the reward reparameterization cancels between the two
/// responses and is never computed.
template <typename T>
double implicit_reward_margin(const lm::ModelParams<T>& policy, const lm::ModelParams<T>& reference,
                              const data::TokenizedPair& pair, double beta);

double implicit_reward_margin(const lm::PolicyParams& policy, const lm::PolicyParams& reference,
                              const data::PreferencePair& pair, double beta);

/// Mean over pairs of -log sigmoid(margin). The reference only contributes
/// constants; `grad` (policy layout) receives the policy gradient when
/// non-empty. `per_pair` optionally receives each pair's loss.
/// Throws ShapeError when policy and reference configs differ.
template <typename T>
double dpo_loss_and_grad(const lm::ModelParams<T>& policy, const lm::ModelParams<T>& reference,
                         std::span<const data::TokenizedPair> batch, double beta, std::span<T> grad,
                         std::vector<double>* per_pair = nullptr);

double dpo_loss_and_grad(const lm::PolicyParams& policy, const lm::PolicyParams& reference,
                         const std::vector<data::PreferencePair>& batch, double beta, std::vector<float>* grad);

/// AdamW on the DPO loss: linear warmup over warmup_fraction of the steps,
/// then linear decay to zero. The reference is never modified.
lm::PolicyParams train_dpo(const DpoConfig& config, const lm::PolicyParams& policy_init,
                           const lm::PolicyParams& reference, const std::vector<data::PreferencePair>& data,
                           const lm::StepCallback& on_step = {});

struct MarginSummary {
  double mean_margin = 0.0;
  double accuracy = 0.0;  ///< margin > 0 counts 1, margin == 0 counts 1/2
};

MarginSummary summarize_margins(const lm::PolicyParams& policy, const lm::PolicyParams& reference,
                                const std::vector<data::PreferencePair>& pairs, double beta);

}  // namespace preflearn::dpo
