#include "preflearn/lm/sft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "preflearn/common/errors.hpp"
#include "preflearn/common/rng.hpp"
#include "preflearn/lm/logprobs.hpp"

namespace preflearn::lm {

TrainConfig TrainConfig::sft_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::reward_model_defaults() {
  TrainConfig c;
  c.learning_rate = 1e-5;
  c.warmup_fraction = 0.03;
  c.decay = true;
  c.final_lr_fraction = 0.1;
  c.epochs = 1;
  c.batch_size = 512;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("warmup fraction must be in [0, 1]");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5ff1e, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

template <typename T>
double sft_loss_and_grad(const ModelParams<T>& params, std::span<const Demonstration> batch, std::span<T> grad) {
  std::size_t tokens = 0;
  for (const auto& d : batch) tokens += d.response.size() + 1;
  if (tokens == 0) throw ConfigError("sft loss: empty batch");
  const T inv = T(1) / static_cast<T>(tokens);
  double loss = 0.0;
  std::vector<T> coeff;
  for (const auto& d : batch) {
    TokenSequence target = d.response;
    target.push_back(Vocabulary::kEos);
    const auto pass = score_continuation(params, d.prompt, target);
    for (const T lp : pass.token_logprobs) loss -= static_cast<double>(lp);
    if (!grad.empty()) {
      coeff.assign(target.size(), -inv);
      backward_continuation(params, pass, std::span<const T>(coeff), grad);
    }
  }
  return loss / static_cast<double>(tokens);
}

PolicyParams train_sft(const TrainConfig& config, const PolicyParams& params,
                       const std::vector<Demonstration>& demonstrations, const StepCallback& on_step) {
  config.validate();
  if (demonstrations.empty()) throw ConfigError("train_sft: no demonstrations");
  PolicyParams model = params;
  const std::size_t n = demonstrations.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const auto schedule = LrSchedule::make(config.learning_rate, steps_per_epoch * config.epochs,
                                         config.warmup_fraction, config.decay, config.final_lr_fraction);
  AdamW opt(config.adam, {model.size()});
  std::vector<float> grad(model.size());
  std::vector<Demonstration> batch;
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(n, config.seed, static_cast<std::size_t>(epoch));
    for (std::size_t start = 0; start < n; start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(n, start + bs); ++i) batch.push_back(demonstrations[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0f);
      const double loss = sft_loss_and_grad(model, std::span<const Demonstration>(batch), std::span<float>(grad));
      if (!std::isfinite(loss)) throw NumericalError("train_sft: non-finite loss at step " + std::to_string(step));
      std::span<float> gspan(grad);
      const double norm = clip_grad_norm(std::span<const std::span<float>>(&gspan, 1), config.grad_clip_norm);
      const double lr = schedule.at(step);
      std::span<float> pspan = model.values();
      std::span<const float> cg(grad);
      opt.step(std::span<const std::span<float>>(&pspan, 1), std::span<const std::span<const float>>(&cg, 1), lr);
      model.set_version(model.version() + 1);
      if (on_step) on_step({step, static_cast<std::size_t>(epoch), loss, lr, norm});
      ++step;
    }
  }
  return model;
}

template double sft_loss_and_grad(const ModelParams<float>&, std::span<const Demonstration>, std::span<float>);
template double sft_loss_and_grad(const ModelParams<double>&, std::span<const Demonstration>, std::span<double>);

}  // namespace preflearn::lm
