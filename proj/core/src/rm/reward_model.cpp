#include "preflearn/rm/reward_model.hpp"

#include <algorithm>
#include <cmath>

#include "preflearn/common/errors.hpp"
#include "preflearn/common/math.hpp"
#include "preflearn/lm/checkpoint.hpp"

namespace preflearn::rm {

using lm::TokenId;
using lm::TokenSequence;

template <typename T>
RewardParams<T>::RewardParams(lm::ModelParams<T> backbone_params)
    : backbone(std::move(backbone_params)), head(static_cast<std::size_t>(backbone.config().d_model) + 1, T(0)) {}

template <typename T>
std::vector<T> RewardParams<T>::flatten() const {
  std::vector<T> flat(backbone.values().begin(), backbone.values().end());
  flat.insert(flat.end(), head.begin(), head.end());
  return flat;
}

template <typename T>
void RewardParams<T>::assign_flat(std::span<const T> flat) {
  if (flat.size() != size()) throw ShapeError("reward params: flat buffer size mismatch");
  auto bb = backbone.values();
  std::copy_n(flat.begin(), bb.size(), bb.begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(bb.size()), flat.end(), head.begin());
}

template <typename T>
bool RewardParams<T>::all_finite() const noexcept {
  return backbone.all_finite() && std::all_of(head.begin(), head.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
HeadPass<T> head_forward(const RewardParams<T>& params, std::span<const TokenId> inputs, std::vector<int> rows) {
  HeadPass<T> pass;
  lm::ForwardOptions opts;
  opts.logits = false;
  pass.acts = lm::forward(params.backbone, inputs, opts);
  pass.rows = std::move(rows);
  const auto w = params.head_weights();
  pass.values.reserve(pass.rows.size());
  for (const int r : pass.rows) {
    if (r < 0 || r >= pass.acts.rows) throw ShapeError("head_forward: row out of range");
    const auto h = pass.acts.hidden_row(r);
    T s = params.head_bias();
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * h[k];
    pass.values.push_back(s);
  }
  return pass;
}

template <typename T>
void head_backward(const RewardParams<T>& params, const HeadPass<T>& pass, std::span<const T> dvalues,
                   std::span<T> grad) {
  if (dvalues.size() != pass.rows.size()) throw ShapeError("head_backward: coefficient count mismatch");
  if (grad.size() != params.size()) throw ShapeError("head_backward: gradient buffer mismatch");
  const std::size_t d = static_cast<std::size_t>(params.config().d_model);
  const std::size_t bb = params.backbone.size();
  const auto w = params.head_weights();
  std::vector<T> dhidden(static_cast<std::size_t>(pass.acts.rows) * d, T(0));
  for (std::size_t i = 0; i < pass.rows.size(); ++i) {
    const T g = dvalues[i];
    const auto h = pass.acts.hidden_row(pass.rows[i]);
    T* dh = dhidden.data() + static_cast<std::size_t>(pass.rows[i]) * d;
    for (std::size_t k = 0; k < d; ++k) {
      grad[bb + k] += g * h[k];
      dh[k] += g * w[k];
    }
    grad[bb + d] += g;
  }
  lm::backward(params.backbone, pass.acts, std::span<const T>(), std::span<const T>(dhidden), grad.first(bb));
}

int scored_row(const TokenSequence& prompt, const TokenSequence& response) {
  const auto eos = std::find(response.begin(), response.end(), lm::Vocabulary::kEos);
  const std::size_t kept = eos == response.end() ? response.size() : static_cast<std::size_t>(eos - response.begin()) + 1;
  return static_cast<int>(prompt.size() + kept);
}

template <typename T>
HeadPass<T> score_pass(const RewardParams<T>& params, const TokenSequence& prompt, const TokenSequence& response) {
  const int row = scored_row(prompt, response);
  const auto kept = static_cast<std::size_t>(row) - prompt.size();
  const auto inputs = lm::frame(prompt, TokenSequence(response.begin(), response.begin() + static_cast<std::ptrdiff_t>(kept)));
  if (static_cast<int>(inputs.size()) > params.config().context) {
    throw LengthError("score: prompt + response (" + std::to_string(inputs.size()) + " tokens with BOS) exceed context " +
                      std::to_string(params.config().context));
  }
  return head_forward(params, std::span<const TokenId>(inputs), {row});
}

template <typename T>
T score(const RewardParams<T>& params, const TokenSequence& prompt, const TokenSequence& response) {
  return score_pass(params, prompt, response).values.front();
}

template <typename T>
double bt_loss_and_grad(const RewardParams<T>& params, std::span<const data::TokenizedPair> batch, std::span<T> grad) {
  if (batch.empty()) throw ConfigError("bt loss: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& pair : batch) {
    const auto chosen = score_pass(params, pair.prompt, pair.chosen);
    const auto rejected = score_pass(params, pair.prompt, pair.rejected);
    const T margin = chosen.values[0] - rejected.values[0];
    loss += static_cast<double>(neg_log_sigmoid(margin));
    if (!grad.empty()) {
      // d/dm of -log sigmoid(m) is -sigmoid(-m).
      const T dm = static_cast<T>(-static_cast<double>(sigmoid(-margin)) * inv);
      const T dc[1] = {dm};
      const T dr[1] = {-dm};
      head_backward(params, chosen, std::span<const T>(dc), grad);
      head_backward(params, rejected, std::span<const T>(dr), grad);
    }
  }
  return loss * inv;
}

double bt_loss_and_grad(const RewardModelParams& params, const std::vector<data::PreferencePair>& batch,
                        std::vector<float>* grad) {
  const auto tokens = data::tokenize(batch);
  if (grad) grad->assign(params.size(), 0.0f);
  return bt_loss_and_grad(params, std::span<const data::TokenizedPair>(tokens),
                          grad ? std::span<float>(*grad) : std::span<float>());
}

RewardModelParams train_reward_model(const lm::TrainConfig& config, const lm::PolicyParams& init,
                                     const std::vector<data::PreferencePair>& data, const lm::StepCallback& on_step) {
  config.validate();
  if (data.empty()) throw ConfigError("train_reward_model: no preference data");
  RewardModelParams model(init);
  const auto pairs = data::tokenize(data);
  const std::size_t n = pairs.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const auto schedule = lm::LrSchedule::make(config.learning_rate, steps_per_epoch * config.epochs,
                                             config.warmup_fraction, config.decay, config.final_lr_fraction);
  lm::AdamW opt(config.adam, {model.size()});
  std::vector<float> flat = model.flatten();
  std::vector<float> grad(model.size());
  std::vector<data::TokenizedPair> batch;
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = lm::epoch_order(n, config.seed, static_cast<std::size_t>(epoch));
    for (std::size_t start = 0; start < n; start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(n, start + bs); ++i) batch.push_back(pairs[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0f);
      const double loss = bt_loss_and_grad(model, std::span<const data::TokenizedPair>(batch), std::span<float>(grad));
      if (!std::isfinite(loss)) throw NumericalError("train_reward_model: non-finite loss at step " + std::to_string(step));
      std::span<float> g(grad);
      const double norm = lm::clip_grad_norm(std::span<const std::span<float>>(&g, 1), config.grad_clip_norm);
      const double lr = schedule.at(step);
      std::span<float> p(flat);
      std::span<const float> cg(grad);
      opt.step(std::span<const std::span<float>>(&p, 1), std::span<const std::span<const float>>(&cg, 1), lr);
      model.assign_flat(std::span<const float>(flat));
      ++model.version;
      if (on_step) on_step({step, static_cast<std::size_t>(epoch), loss, lr, norm});
      ++step;
    }
  }
  return model;
}

double pairwise_accuracy(std::span<const std::pair<double, double>> scores) {
  if (scores.empty()) throw ConfigError("pairwise_accuracy: no pairs");
  double credit = 0.0;
  for (const auto& [c, r] : scores) {
    if (c > r) {
      credit += 1.0;
    } else if (c == r) {
      credit += 0.5;
    }
  }
  return credit / static_cast<double>(scores.size());
}

double pairwise_accuracy(const RewardModelParams& params, const std::vector<data::PreferencePair>& pairs) {
  std::vector<std::pair<double, double>> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto t = data::tokenize(p);
    scores.emplace_back(score(params, t.prompt, t.chosen), score(params, t.prompt, t.rejected));
  }
  return pairwise_accuracy(std::span<const std::pair<double, double>>(scores));
}

void save_reward_model(const std::filesystem::path& path, const RewardModelParams& params, const std::string& kind) {
  auto ckpt = lm::to_checkpoint(params.backbone, kind);
  ckpt.manifest["param_version"] = std::to_string(params.version);
  ckpt.arrays.push_back({"head", {params.head.size()}, params.head});
  lm::write_checkpoint(path, ckpt);
}

RewardModelParams load_reward_model(const std::filesystem::path& path) {
  const auto ckpt = lm::read_checkpoint(path);
  const auto kind = ckpt.manifest.find("kind");
  if (kind == ckpt.manifest.end() || (kind->second != "reward" && kind->second != "value")) {
    throw ShapeError("'" + path.string() + "' is not a reward/value checkpoint");
  }
  RewardModelParams params(lm::policy_from_checkpoint(ckpt));
  const auto& head = ckpt.array("head");
  if (head.shape != std::vector<std::size_t>{params.head.size()} || head.data.size() != params.head.size()) {
    throw ShapeError("checkpoint head array does not match d_model + 1");
  }
  params.head = head.data;
  params.version = params.backbone.version();
  if (!params.all_finite()) throw NumericalError("reward checkpoint contains non-finite values");
  return params;
}

template struct RewardParams<float>;
template struct RewardParams<double>;
template HeadPass<float> head_forward(const RewardParams<float>&, std::span<const TokenId>, std::vector<int>);
template HeadPass<double> head_forward(const RewardParams<double>&, std::span<const TokenId>, std::vector<int>);
template void head_backward(const RewardParams<float>&, const HeadPass<float>&, std::span<const float>, std::span<float>);
template void head_backward(const RewardParams<double>&, const HeadPass<double>&, std::span<const double>,
                            std::span<double>);
template HeadPass<float> score_pass(const RewardParams<float>&, const TokenSequence&, const TokenSequence&);
template HeadPass<double> score_pass(const RewardParams<double>&, const TokenSequence&, const TokenSequence&);
template float score(const RewardParams<float>&, const TokenSequence&, const TokenSequence&);
template double score(const RewardParams<double>&, const TokenSequence&, const TokenSequence&);
template double bt_loss_and_grad(const RewardParams<float>&, std::span<const data::TokenizedPair>, std::span<float>);
template double bt_loss_and_grad(const RewardParams<double>&, std::span<const data::TokenizedPair>, std::span<double>);

}  // namespace preflearn::rm
