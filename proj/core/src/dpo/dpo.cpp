#include "preflearn/dpo/dpo.hpp"

#include <algorithm>
#include <cmath>

#include "preflearn/common/errors.hpp"
#include "preflearn/common/math.hpp"
#include "preflearn/lm/logprobs.hpp"
#include "preflearn/lm/sft.hpp"

namespace preflearn::dpo {

using lm::TokenSequence;

void DpoConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("dpo: beta must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("dpo: learning rate must be > 0");
  if (epochs < 1) throw ConfigError("dpo: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("dpo: batch size must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("dpo: warmup fraction must be in [0, 1]");
}

namespace {

template <typename T>
void check_configs(const lm::ModelParams<T>& policy, const lm::ModelParams<T>& reference) {
  if (!(policy.config() == reference.config())) throw ShapeError("dpo: policy and reference configs differ");
}

}  // namespace

template <typename T>
T sequence_logprob(const lm::ModelParams<T>& params, const TokenSequence& prompt, const TokenSequence& response) {
  return lm::score_continuation(params, prompt, response).sum();
}

template <typename T>
double implicit_reward_margin(const lm::ModelParams<T>& policy, const lm::ModelParams<T>& reference,
                              const data::TokenizedPair& pair, double beta) {
  check_configs(policy, reference);
  const double c = static_cast<double>(sequence_logprob(policy, pair.prompt, pair.chosen)) -
                   static_cast<double>(sequence_logprob(reference, pair.prompt, pair.chosen));
  const double r = static_cast<double>(sequence_logprob(policy, pair.prompt, pair.rejected)) -
                   static_cast<double>(sequence_logprob(reference, pair.prompt, pair.rejected));
  return beta * c - beta * r;
}

double implicit_reward_margin(const lm::PolicyParams& policy, const lm::PolicyParams& reference,
                              const data::PreferencePair& pair, double beta) {
  return implicit_reward_margin(policy, reference, data::tokenize(pair), beta);
}

template <typename T>
double dpo_loss_and_grad(const lm::ModelParams<T>& policy, const lm::ModelParams<T>& reference,
                         std::span<const data::TokenizedPair> batch, double beta, std::span<T> grad,
                         std::vector<double>* per_pair) {
  check_configs(policy, reference);
  if (batch.empty()) throw ConfigError("dpo loss: empty batch");
  if (!grad.empty() && grad.size() != policy.size()) throw ShapeError("dpo loss: gradient buffer mismatch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  if (per_pair) per_pair->clear();
  std::vector<T> coeff;
  for (const auto& pair : batch) {
    const auto chosen = lm::score_continuation(policy, pair.prompt, pair.chosen);
    const auto rejected = lm::score_continuation(policy, pair.prompt, pair.rejected);
    const double ref_c = static_cast<double>(sequence_logprob(reference, pair.prompt, pair.chosen));
    const double ref_r = static_cast<double>(sequence_logprob(reference, pair.prompt, pair.rejected));
    const double margin = beta * (static_cast<double>(chosen.sum()) - ref_c) -
                          beta * (static_cast<double>(rejected.sum()) - ref_r);
    const double l = neg_log_sigmoid(margin);
    loss += l;
    if (per_pair) per_pair->push_back(l);
    if (!grad.empty()) {
      // dl/dmargin = -sigmoid(-margin); each response token log-prob enters
      // the margin with weight +beta (chosen) or -beta (rejected).
      const double dm = -sigmoid(-margin) * inv;
      coeff.assign(pair.chosen.size(), static_cast<T>(dm * beta));
      lm::backward_continuation(policy, chosen, std::span<const T>(coeff), grad);
      coeff.assign(pair.rejected.size(), static_cast<T>(-dm * beta));
      lm::backward_continuation(policy, rejected, std::span<const T>(coeff), grad);
    }
  }
  return loss * inv;
}

double dpo_loss_and_grad(const lm::PolicyParams& policy, const lm::PolicyParams& reference,
                         const std::vector<data::PreferencePair>& batch, double beta, std::vector<float>* grad) {
  const auto tokens = data::tokenize(batch);
  if (grad) grad->assign(policy.size(), 0.0f);
  return dpo_loss_and_grad(policy, reference, std::span<const data::TokenizedPair>(tokens), beta,
                           grad ? std::span<float>(*grad) : std::span<float>());
}

lm::PolicyParams train_dpo(const DpoConfig& config, const lm::PolicyParams& policy_init,
                           const lm::PolicyParams& reference, const std::vector<data::PreferencePair>& data,
                           const lm::StepCallback& on_step) {
  config.validate();
  if (data.empty()) throw ConfigError("train_dpo: no preference data");
  check_configs(policy_init, reference);
  lm::PolicyParams policy = policy_init;
  const auto pairs = data::tokenize(data);
  const std::size_t n = pairs.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const auto schedule = lm::LrSchedule::make(config.learning_rate, steps_per_epoch * config.epochs,
                                             config.warmup_fraction, true, 0.0);
  lm::AdamW opt(config.adam, {policy.size()});
  std::vector<float> grad(policy.size());
  std::vector<data::TokenizedPair> batch;
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = lm::epoch_order(n, config.seed, static_cast<std::size_t>(epoch));
    for (std::size_t start = 0; start < n; start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(n, start + bs); ++i) batch.push_back(pairs[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0f);
      const double loss = dpo_loss_and_grad(policy, reference, std::span<const data::TokenizedPair>(batch),
                                            config.beta, std::span<float>(grad));
      if (!std::isfinite(loss)) throw NumericalError("train_dpo: non-finite loss at step " + std::to_string(step));
      std::span<float> g(grad);
      const double norm = lm::clip_grad_norm(std::span<const std::span<float>>(&g, 1), config.grad_clip_norm);
      const double lr = schedule.at(step);
      std::span<float> p = policy.values();
      std::span<const float> cg(grad);
      opt.step(std::span<const std::span<float>>(&p, 1), std::span<const std::span<const float>>(&cg, 1), lr);
      policy.set_version(policy.version() + 1);
      if (on_step) on_step({step, static_cast<std::size_t>(epoch), loss, lr, norm});
      ++step;
    }
  }
  return policy;
}

MarginSummary summarize_margins(const lm::PolicyParams& policy, const lm::PolicyParams& reference,
                                const std::vector<data::PreferencePair>& pairs, double beta) {
  if (pairs.empty()) throw ConfigError("summarize_margins: no pairs");
  MarginSummary s;
  for (const auto& p : pairs) {
    const double m = implicit_reward_margin(policy, reference, p, beta);
    s.mean_margin += m;
    s.accuracy += m > 0.0 ? 1.0 : (m == 0.0 ? 0.5 : 0.0);
  }
  s.mean_margin /= static_cast<double>(pairs.size());
  s.accuracy /= static_cast<double>(pairs.size());
  return s;
}

template float sequence_logprob(const lm::ModelParams<float>&, const TokenSequence&, const TokenSequence&);
template double sequence_logprob(const lm::ModelParams<double>&, const TokenSequence&, const TokenSequence&);
template double implicit_reward_margin(const lm::ModelParams<float>&, const lm::ModelParams<float>&,
                                       const data::TokenizedPair&, double);
template double implicit_reward_margin(const lm::ModelParams<double>&, const lm::ModelParams<double>&,
                                       const data::TokenizedPair&, double);
template double dpo_loss_and_grad(const lm::ModelParams<float>&, const lm::ModelParams<float>&,
                                  std::span<const data::TokenizedPair>, double, std::span<float>, std::vector<double>*);
template double dpo_loss_and_grad(const lm::ModelParams<double>&, const lm::ModelParams<double>&,
                                  std::span<const data::TokenizedPair>, double, std::span<double>,
                                  std::vector<double>*);

}  // namespace preflearn::dpo
