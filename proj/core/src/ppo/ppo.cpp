#include "preflearn/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "preflearn/common/errors.hpp"
#include "preflearn/common/parallel.hpp"
#include "preflearn/common/rng.hpp"
#include "preflearn/data/pipeline.hpp"
#include "preflearn/lm/logprobs.hpp"
#include "preflearn/lm/optimizer.hpp"
#include "preflearn/lm/sampling.hpp"
#include "preflearn/lm/sft.hpp"

namespace preflearn::ppo {

using lm::TokenSequence;

void PpoConfig::validate() const {
  if (prompt_batch < 1 || rollouts_per_prompt < 1 || minibatch < 1 || grad_accum < 1)
    throw ConfigError("ppo: B, r, b and g must be >= 1");
  if (epochs < 1 || inner_epochs < 1) throw ConfigError("ppo: E and e must be >= 1");
  if (max_prompt_len < 1 || max_continuation_len < 1) throw ConfigError("ppo: L_p and L_c must be >= 1");
  if (minibatch > episodes_per_batch())
    throw ConfigError("ppo: minibatch b=" + std::to_string(minibatch) + " exceeds B*r=" +
                      std::to_string(episodes_per_batch()));
  if (episodes_per_batch() % minibatch != 0) throw ConfigError("ppo: B*r must be a multiple of b");
  if (minibatch % grad_accum != 0) throw ConfigError("ppo: b must be a multiple of g");
  if (!(temperature >= 0.0)) throw ConfigError("ppo: temperature must be >= 0");
  if (!(beta >= 0.0)) throw ConfigError("ppo: beta must be >= 0");
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lam >= 0.0 && lam <= 1.0))
    throw ConfigError("ppo: gamma and lambda must be in [0, 1]");
  if (!(eps_clip > 0.0)) throw ConfigError("ppo: clip range must be > 0");
  if (!(alpha >= 0.0)) throw ConfigError("ppo: alpha must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("ppo: learning rate must be > 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("ppo: warmup fraction must be in [0, 1]");
  if (!std::isfinite(trunc_penalty)) throw ConfigError("ppo: trunc_penalty must be finite");
}

double Episode::kl() const {
  double s = 0.0;
  for (std::size_t t = 0; t < rollout_logprobs.size() && t < ref_logprobs.size(); ++t)
    s += rollout_logprobs[t] - ref_logprobs[t];
  return s;
}

RolloutBatch rollout(const lm::PolicyParams& policy, const std::vector<TokenSequence>& prompts,
                     const PpoConfig& config, std::uint64_t batch_index) {
  if (prompts.empty()) throw ConfigError("rollout: no prompts");
  for (std::size_t i = 0; i < prompts.size(); ++i)
    if (prompts[i].size() > static_cast<std::size_t>(config.max_prompt_len))
      throw LengthError("rollout: prompt " + std::to_string(i) + " has " + std::to_string(prompts[i].size()) +
                        " tokens, limit " + std::to_string(config.max_prompt_len));
  const std::size_t r = static_cast<std::size_t>(config.rollouts_per_prompt);
  RolloutBatch batch;
  batch.episodes.resize(prompts.size() * r);
  parallel_for(batch.episodes.size(), [&](std::size_t k) {
    const std::size_t i = k / r;
    const std::size_t j = k % r;
    auto s = lm::sample(policy, prompts[i], config.temperature, config.max_continuation_len,
                        derive_seed(config.seed, batch_index, i, j));
    Episode& ep = batch.episodes[k];
    ep.prompt_index = i;
    ep.prompt = prompts[i];
    ep.continuation = std::move(s.continuation);
    ep.truncated = s.truncated;
    ep.rollout_logprobs.assign(s.rollout_logprobs.begin(), s.rollout_logprobs.end());
  });
  return batch;
}

std::vector<double> shape_token_rewards(std::span<const double> policy_logprobs, std::span<const double> ref_logprobs,
                                        double rm_score, bool truncated, double beta, double trunc_penalty) {
  if (policy_logprobs.size() != ref_logprobs.size()) throw ShapeError("shape_token_rewards: length mismatch");
  if (policy_logprobs.empty()) throw ShapeError("shape_token_rewards: empty episode");
  std::vector<double> out(policy_logprobs.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = -beta * (policy_logprobs[t] - ref_logprobs[t]);
  out.back() += truncated ? trunc_penalty : rm_score;
  return out;
}

Gae compute_gae(std::span<const double> rewards, std::span<const double> values, double gamma, double lam) {
  if (rewards.empty()) throw ShapeError("compute_gae: empty episode");
  if (rewards.size() != values.size()) throw ShapeError("compute_gae: length mismatch");
  const std::size_t n = rewards.size();
  Gae g;
  g.advantages.resize(n);
  g.returns.resize(n);
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next = t + 1 < n ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next - values[t];
    running = delta + gamma * lam * running;
    g.advantages[t] = running;
    g.returns[t] = running + values[t];
  }
  return g;
}

std::vector<double> whiten(std::span<const double> values, bool shift_mean) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (const double v : values) var += (v - mean) * (v - mean);
  const double denom = std::sqrt(var / n) + 1e-8;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (shift_mean ? values[i] - mean : values[i]) / denom;
  return out;
}

double ppo_policy_loss(std::span<const double> new_logprobs, std::span<const double> rollout_logprobs,
                       std::span<const double> advantages, double eps_clip, std::span<double> grad) {
  const std::size_t n = new_logprobs.size();
  if (rollout_logprobs.size() != n || advantages.size() != n) throw ShapeError("ppo_policy_loss: length mismatch");
  if (!grad.empty() && grad.size() != n) throw ShapeError("ppo_policy_loss: gradient length mismatch");
  if (n == 0) throw ShapeError("ppo_policy_loss: empty input");
  const double inv = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double ratio = std::exp(new_logprobs[t] - rollout_logprobs[t]);
    const double a = advantages[t];
    const double unclipped = ratio * a;
    const double clipped = std::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * a;
    loss -= std::min(unclipped, clipped) * inv;
    if (!grad.empty()) grad[t] = unclipped <= clipped ? -unclipped * inv : 0.0;
  }
  return loss;
}

double ppo_value_loss(std::span<const double> values_new, std::span<const double> values_rollout,
                      std::span<const double> returns, double eps_clip, std::span<double> grad) {
  const std::size_t n = values_new.size();
  if (values_rollout.size() != n || returns.size() != n) throw ShapeError("ppo_value_loss: length mismatch");
  if (!grad.empty() && grad.size() != n) throw ShapeError("ppo_value_loss: gradient length mismatch");
  if (n == 0) throw ShapeError("ppo_value_loss: empty input");
  const double inv = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double lo = values_rollout[t] - eps_clip;
    const double hi = values_rollout[t] + eps_clip;
    const double v = values_new[t];
    const double vc = std::clamp(v, lo, hi);
    const double eu = v - returns[t];
    const double ec = vc - returns[t];
    if (eu * eu >= ec * ec) {
      loss += 0.5 * eu * eu * inv;
      if (!grad.empty()) grad[t] = eu * inv;
    } else {
      loss += 0.5 * ec * ec * inv;
      if (!grad.empty()) grad[t] = (v > lo && v < hi) ? ec * inv : 0.0;
    }
  }
  return loss;
}

namespace {

std::vector<int> value_rows(const Episode& ep) {
  std::vector<int> rows(ep.length());
  std::iota(rows.begin(), rows.end(), static_cast<int>(ep.prompt.size()));
  return rows;
}

std::vector<lm::TokenId> loss_inputs(const Episode& ep) {
  return lm::frame(ep.prompt, TokenSequence(ep.continuation.begin(), ep.continuation.end() - 1));
}

}  // namespace

void annotate(RolloutBatch& batch, const lm::PolicyParams& reference, const rm::RewardModelParams& reward,
              const ValueModelParams& value, const PpoConfig& config) {
  auto& eps = batch.episodes;
  parallel_for(eps.size(), [&](std::size_t k) {
    Episode& ep = eps[k];
    if (ep.continuation.empty()) throw ShapeError("annotate: empty continuation");
    const auto ref = lm::score_continuation(reference, ep.prompt, ep.continuation);
    ep.ref_logprobs.assign(ref.token_logprobs.begin(), ref.token_logprobs.end());
    const auto inputs = loss_inputs(ep);
    const auto v = rm::head_forward(value, std::span<const lm::TokenId>(inputs), value_rows(ep));
    ep.values.assign(v.values.begin(), v.values.end());
    ep.rm_score = ep.truncated ? 0.0 : static_cast<double>(rm::score(reward, ep.prompt, ep.continuation));
    ep.terminal_reward = ep.truncated ? config.trunc_penalty : ep.rm_score;
    ep.shaped_rewards = shape_token_rewards(ep.rollout_logprobs, ep.ref_logprobs, ep.rm_score, ep.truncated,
                                            config.beta, config.trunc_penalty);
    auto g = compute_gae(ep.shaped_rewards, ep.values, config.gamma, config.lam);
    ep.advantages = std::move(g.advantages);
    ep.returns = std::move(g.returns);
  });
  std::vector<double> pooled;
  for (const auto& ep : eps) pooled.insert(pooled.end(), ep.advantages.begin(), ep.advantages.end());
  const auto w = whiten(pooled, true);
  std::size_t pos = 0;
  for (auto& ep : eps)
    for (auto& a : ep.advantages) a = w[pos++];
}

template <typename T>
EpisodeLoss episode_loss_and_grad(const lm::ModelParams<T>& policy, const rm::RewardParams<T>& value,
                                  const Episode& episode, double eps_clip, double alpha, double weight,
                                  std::span<T> policy_grad, std::span<T> value_grad) {
  const std::size_t n = episode.length();
  if (n == 0) throw ShapeError("episode_loss_and_grad: empty continuation");
  if (episode.rollout_logprobs.size() != n || episode.values.size() != n || episode.advantages.size() != n ||
      episode.returns.size() != n)
    throw ShapeError("episode_loss_and_grad: per-token arrays do not match the continuation length");
  EpisodeLoss out;

  const auto pass = lm::score_continuation(policy, episode.prompt, episode.continuation);
  const std::vector<double> new_lp(pass.token_logprobs.begin(), pass.token_logprobs.end());
  std::vector<double> dpolicy(policy_grad.empty() ? 0 : n);
  out.policy_loss =
      weight * ppo_policy_loss(new_lp, episode.rollout_logprobs, episode.advantages, eps_clip, dpolicy);
  for (std::size_t t = 0; t < n; ++t)
    out.max_ratio_deviation =
        std::max(out.max_ratio_deviation, std::abs(std::exp(new_lp[t] - episode.rollout_logprobs[t]) - 1.0));
  if (!policy_grad.empty()) {
    std::vector<T> d(n);
    for (std::size_t t = 0; t < n; ++t) d[t] = static_cast<T>(weight * dpolicy[t]);
    lm::backward_continuation(policy, pass, std::span<const T>(d), policy_grad);
  }

  const auto inputs = loss_inputs(episode);
  const auto vpass = rm::head_forward(value, std::span<const lm::TokenId>(inputs), value_rows(episode));
  const std::vector<double> v_new(vpass.values.begin(), vpass.values.end());
  std::vector<double> dvalue(value_grad.empty() ? 0 : n);
  out.value_loss = weight * ppo_value_loss(v_new, episode.values, episode.returns, eps_clip, dvalue);
  if (!value_grad.empty()) {
    std::vector<T> d(n);
    for (std::size_t t = 0; t < n; ++t) d[t] = static_cast<T>(weight * alpha * dvalue[t]);
    rm::head_backward(value, vpass, std::span<const T>(d), value_grad);
  }
  return out;
}

template EpisodeLoss episode_loss_and_grad<float>(const lm::ModelParams<float>&, const rm::RewardParams<float>&,
                                                  const Episode&, double, double, double, std::span<float>,
                                                  std::span<float>);
template EpisodeLoss episode_loss_and_grad<double>(const lm::ModelParams<double>&, const rm::RewardParams<double>&,
                                                   const Episode&, double, double, double, std::span<double>,
                                                   std::span<double>);

namespace {

constexpr std::size_t kGradChunks = 8;

struct ChunkResult {
  std::vector<float> policy_grad;
  std::vector<float> value_grad;
  EpisodeLoss loss;
};

}  // namespace

PpoResult train_ppo(const PpoConfig& config, const lm::PolicyParams& policy_init, const lm::PolicyParams& reference,
                    const rm::RewardModelParams& reward, const data::PromptPool& prompts,
                    const PpoCallbacks& callbacks) {
  config.validate();
  if (prompts.prompts.empty()) throw ConfigError("train_ppo: empty prompt pool");
  if (prompts.prompts.size() < static_cast<std::size_t>(config.prompt_batch))
    throw ConfigError("train_ppo: prompt pool has " + std::to_string(prompts.prompts.size()) +
                      " prompts, fewer than B=" + std::to_string(config.prompt_batch));
  if (!(policy_init.config() == reference.config())) throw ShapeError("train_ppo: policy and reference configs differ");
  if (config.max_prompt_len + config.max_continuation_len + 1 > policy_init.config().context)
    throw ConfigError("train_ppo: L_p + L_c + 1 exceeds the model context " +
                      std::to_string(policy_init.config().context));

  std::vector<TokenSequence> pool;
  pool.reserve(prompts.prompts.size());
  for (const auto& e : prompts.prompts) pool.push_back(data::render_prompt(e.prompt));

  PpoResult state{policy_init, reward};
  lm::PolicyParams& policy = state.policy;
  ValueModelParams& value = state.value;

  const std::size_t B = static_cast<std::size_t>(config.prompt_batch);
  const std::size_t batches_per_epoch = pool.size() / B;
  const std::size_t n_episodes = static_cast<std::size_t>(config.episodes_per_batch());
  const std::size_t mb = static_cast<std::size_t>(config.minibatch);
  const std::size_t micro = mb / static_cast<std::size_t>(config.grad_accum);
  const std::size_t updates_per_batch = static_cast<std::size_t>(config.inner_epochs) * (n_episodes / mb);
  const auto schedule = lm::LrSchedule::make(
      config.learning_rate, static_cast<std::size_t>(config.epochs) * batches_per_epoch * updates_per_batch,
      config.warmup_fraction, false, 1.0);
  lm::AdamW opt({config.adam_beta1, config.adam_beta2, config.adam_eps, config.weight_decay},
                {policy.size(), value.backbone.size(), value.head.size()});

  std::vector<float> policy_grad(policy.size());
  std::vector<float> value_grad(value.size());
  std::vector<ChunkResult> chunks(kGradChunks);
  std::size_t update = 0;
  std::size_t step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = lm::epoch_order(pool.size(), config.seed, static_cast<std::size_t>(epoch));
    for (std::size_t bi = 0; bi < batches_per_epoch; ++bi, ++step) {
      std::vector<TokenSequence> batch_prompts;
      for (std::size_t i = 0; i < B; ++i) batch_prompts.push_back(pool[order[bi * B + i]]);
      auto batch = rollout(policy, batch_prompts, config, step);
      annotate(batch, reference, reward, value, config);

      PpoStepMetrics m;
      m.step = step;
      m.epoch = static_cast<std::size_t>(epoch);
      for (const auto& ep : batch.episodes) {
        m.mean_terminal_reward += ep.terminal_reward;
        m.mean_kl += ep.kl();
        m.fraction_truncated += ep.truncated ? 1.0 : 0.0;
        m.mean_continuation_length += static_cast<double>(ep.length());
      }
      const double ne = static_cast<double>(n_episodes);
      m.mean_terminal_reward /= ne;
      m.mean_kl /= ne;
      m.fraction_truncated /= ne;
      m.mean_continuation_length /= ne;

      std::size_t n_updates = 0;
      for (int inner = 0; inner < config.inner_epochs; ++inner) {
        const auto perm = lm::epoch_order(n_episodes, derive_seed(config.seed, step), static_cast<std::size_t>(inner));
        for (std::size_t start = 0; start < n_episodes; start += mb, ++update, ++n_updates) {
          const bool fresh = config.minibatch_forward && inner == 0;
          if (fresh) {
            parallel_for(mb, [&](std::size_t k) {
              Episode& ep = batch.episodes[perm[start + k]];
              const auto pass = lm::score_continuation(policy, ep.prompt, ep.continuation);
              ep.rollout_logprobs.assign(pass.token_logprobs.begin(), pass.token_logprobs.end());
            });
          }
          std::size_t tokens = 0;
          for (std::size_t k = start; k < start + mb; ++k) tokens += batch.episodes[perm[k]].length();
          const double weight_per_token = 1.0 / static_cast<double>(tokens);
          std::fill(policy_grad.begin(), policy_grad.end(), 0.0f);
          std::fill(value_grad.begin(), value_grad.end(), 0.0f);
          double pl = 0.0, vl = 0.0, dev = 0.0;
          for (std::size_t ms = start; ms < start + mb; ms += micro) {
            const std::size_t nchunks = std::min(kGradChunks, micro);
            parallel_for(nchunks, [&](std::size_t c) {
              ChunkResult& cr = chunks[c];
              cr.policy_grad.assign(policy.size(), 0.0f);
              cr.value_grad.assign(value.size(), 0.0f);
              cr.loss = {};
              for (std::size_t k = ms + c; k < ms + micro; k += nchunks) {
                const Episode& ep = batch.episodes[perm[k]];
                const auto l = episode_loss_and_grad(policy, value, ep, config.eps_clip, config.alpha,
                                                     weight_per_token * static_cast<double>(ep.length()),
                                                     std::span<float>(cr.policy_grad), std::span<float>(cr.value_grad));
                cr.loss.policy_loss += l.policy_loss;
                cr.loss.value_loss += l.value_loss;
                cr.loss.max_ratio_deviation = std::max(cr.loss.max_ratio_deviation, l.max_ratio_deviation);
              }
            });
            for (std::size_t c = 0; c < nchunks; ++c) {
              const ChunkResult& cr = chunks[c];
              for (std::size_t i = 0; i < policy_grad.size(); ++i) policy_grad[i] += cr.policy_grad[i];
              for (std::size_t i = 0; i < value_grad.size(); ++i) value_grad[i] += cr.value_grad[i];
              pl += cr.loss.policy_loss;
              vl += cr.loss.value_loss;
              dev = std::max(dev, cr.loss.max_ratio_deviation);
            }
          }
          if (!std::isfinite(pl) || !std::isfinite(vl))
            throw NumericalError("train_ppo: non-finite loss at step " + std::to_string(step) + ", update " +
                                 std::to_string(update) + " (policy_loss=" + std::to_string(pl) +
                                 ", value_loss=" + std::to_string(vl) + ")");
          if (fresh && dev != 0.0)
            throw NumericalError("train_ppo: ratio deviates from 1 by " + std::to_string(dev) +
                                 " at the start of minibatch " + std::to_string(update));
          if (n_updates == 0 || fresh) m.initial_ratio_deviation = std::max(m.initial_ratio_deviation, dev);
          m.policy_loss += pl;
          m.value_loss += vl;

          std::span<float> vg(value_grad);
          const std::span<float> grads[3] = {std::span<float>(policy_grad), vg.first(value.backbone.size()),
                                             vg.subspan(value.backbone.size())};
          lm::clip_grad_norm(std::span<const std::span<float>>(grads), config.grad_clip_norm);
          const std::span<float> params[3] = {policy.values(), value.backbone.values(), std::span<float>(value.head)};
          const std::span<const float> cgrads[3] = {grads[0], grads[1], grads[2]};
          m.learning_rate = schedule.at(update);
          opt.step(std::span<const std::span<float>>(params), std::span<const std::span<const float>>(cgrads),
                   m.learning_rate);
          policy.set_version(policy.version() + 1);
          ++value.version;
          if (!policy.all_finite() || !value.all_finite())
            throw NumericalError("train_ppo: non-finite parameters after update " + std::to_string(update));
        }
      }
      m.policy_loss /= static_cast<double>(n_updates);
      m.value_loss /= static_cast<double>(n_updates);
      if (callbacks.on_step) callbacks.on_step(m);
    }
    if (callbacks.on_epoch) callbacks.on_epoch(static_cast<std::size_t>(epoch), policy, value);
  }
  return state;
}

}  // namespace preflearn::ppo
