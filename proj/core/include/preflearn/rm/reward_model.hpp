#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "preflearn/data/pipeline.hpp"
#include "preflearn/data/types.hpp"
#include "preflearn/lm/model.hpp"
#include "preflearn/lm/optimizer.hpp"
#include "preflearn/lm/sft.hpp"

namespace preflearn::rm {

/// LM backbone plus a scalar regression head (d_model weights and a bias)
/// reading one final-norm hidden state. Also the shape of the PPO value model.
template <typename T>
struct RewardParams {
  lm::ModelParams<T> backbone;
  std::vector<T> head;  ///< d_model weights followed by the bias
  std::uint64_t version = 0;

  RewardParams() = default;
  /// Head initialized to zeros.
  explicit RewardParams(lm::ModelParams<T> backbone_params);

  const lm::ModelConfig& config() const noexcept { return backbone.config(); }
  std::span<const T> head_weights() const { return std::span<const T>(head).first(head.size() - 1); }
  T head_bias() const { return head.back(); }
  T& head_bias() { return head.back(); }

  /// Flat layout used for gradients: backbone values, then head.
  std::size_t size() const noexcept { return backbone.size() + head.size(); }
  std::vector<T> flatten() const;
  void assign_flat(std::span<const T> flat);
  bool all_finite() const noexcept;

  template <typename U>
  RewardParams<U> cast() const {
    RewardParams<U> out(backbone.template cast<U>());
    for (std::size_t i = 0; i < head.size(); ++i) out.head[i] = static_cast<U>(head[i]);
    out.version = version;
    return out;
  }

  bool operator==(const RewardParams& o) const { return backbone == o.backbone && head == o.head; }
};

using RewardModelParams = RewardParams<float>;

/// Head outputs at selected rows of one forward pass.
template <typename T>
struct HeadPass {
  lm::Activations<T> acts;
  std::vector<int> rows;
  std::vector<T> values;
};

template <typename T>
HeadPass<T> head_forward(const RewardParams<T>& params, std::span<const lm::TokenId> inputs, std::vector<int> rows);

/// Accumulates d(sum_i dvalues[i] * values[i]) into the flat gradient.
template <typename T>
void head_backward(const RewardParams<T>& params, const HeadPass<T>& pass, std::span<const T> dvalues,
                   std::span<T> grad);

/// Row of the scored token for BOS + prompt + response: the first EOS of the
/// response if any, else its last token (the last prompt token when the
/// response is empty).
int scored_row(const lm::TokenSequence& prompt, const lm::TokenSequence& response);

/// R(x, y). Tokens after the first EOS of the response are ignored.
/// Throws LengthError when the scored prefix exceeds the context.
template <typename T>
T score(const RewardParams<T>& params, const lm::TokenSequence& prompt, const lm::TokenSequence& response);

template <typename T>
HeadPass<T> score_pass(const RewardParams<T>& params, const lm::TokenSequence& prompt,
                       const lm::TokenSequence& response);

/// Mean over pairs of -log sigmoid(R(x, y_c) - R(x, y_r)). With a non-empty
/// `grad` (flat layout) the exact gradient is accumulated.
template <typename T>
double bt_loss_and_grad(const RewardParams<T>& params, std::span<const data::TokenizedPair> batch, std::span<T> grad);

double bt_loss_and_grad(const RewardModelParams& params, const std::vector<data::PreferencePair>& batch,
                        std::vector<float>* grad);

/// Zero head on top of `init`, then AdamW with warmup and linear decay over
/// shuffled data; backbone and head both train. Throws ConfigError on empty
/// data.
RewardModelParams train_reward_model(const lm::TrainConfig& config, const lm::PolicyParams& init,
                                     const std::vector<data::PreferencePair>& data,
                                     const lm::StepCallback& on_step = {});

/// Fraction of (chosen, rejected) score pairs with chosen > rejected; exact
/// ties count one half. Throws ConfigError on empty input.
double pairwise_accuracy(std::span<const std::pair<double, double>> scores);
double pairwise_accuracy(const RewardModelParams& params, const std::vector<data::PreferencePair>& pairs);

/// lm checkpoint container plus a `head` array; kind=reward or kind=value.
void save_reward_model(const std::filesystem::path& path, const RewardModelParams& params,
                       const std::string& kind = "reward");
RewardModelParams load_reward_model(const std::filesystem::path& path);

}  // namespace preflearn::rm
