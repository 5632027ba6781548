#pragma once

#include <span>
#include <vector>

#include "preflearn/lm/model.hpp"

namespace preflearn::lm {

/// Per-position next-token log-distributions. Row t is the distribution of
/// the token at position t given BOS and the tokens before it.
template <typename T>
struct LogProbTable {
  int rows = 0;
  std::vector<T> values;  // rows x vocab

  std::span<const T> row(int t) const {
    return std::span<const T>(values).subspan(static_cast<std::size_t>(t) * Vocabulary::kSize, Vocabulary::kSize);
  }
  T at(int t, TokenId token) const { return values[static_cast<std::size_t>(t) * Vocabulary::kSize + token]; }
};

/// Writes log_softmax(logits) into out; returns the log-partition.
/// The partition sum is accumulated in double.
template <typename T>
T log_softmax(std::span<const T> logits, std::span<T> out);

/// BOS is prepended internally; the table has sequence.size() + 1 rows.
/// Throws LengthError when sequence.size() + 1 exceeds the context.
template <typename T>
LogProbTable<T> forward_logprobs(const ModelParams<T>& params, const TokenSequence& sequence);

/// Forward pass scoring a continuation given a prompt. Only the rows that
/// predict continuation tokens get logits.
template <typename T>
struct ContinuationPass {
  Activations<T> acts;
  std::size_t prompt_length = 0;
  TokenSequence continuation;
  std::vector<T> token_logprobs;  ///< log pi(y_t | x, y_<t), one per continuation token
  std::vector<T> log_partition;   ///< per continuation token

  T sum() const;
};

template <typename T>
ContinuationPass<T> score_continuation(const ModelParams<T>& params, const TokenSequence& prompt,
                                       const TokenSequence& continuation);

/// Backpropagates dL/d(token_logprobs) into grad:
/// d log p(y_t) / d logits = onehot(y_t) - softmax.
template <typename T>
void backward_continuation(const ModelParams<T>& params, const ContinuationPass<T>& pass,
                           std::span<const T> dlogprobs, std::span<T> grad);

}  // namespace preflearn::lm
