#include "preflearn/lm/logprobs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "preflearn/common/errors.hpp"

namespace preflearn::lm {

template <typename T>
T log_softmax(std::span<const T> logits, std::span<T> out) {
  T mx = -std::numeric_limits<T>::infinity();
  for (const T v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (const T v : logits) sum += std::exp(static_cast<double>(v - mx));
  const T lse = mx + static_cast<T>(std::log(sum));
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return lse;
}

template <typename T>
LogProbTable<T> forward_logprobs(const ModelParams<T>& params, const TokenSequence& sequence) {
  if (static_cast<int>(sequence.size()) + 1 > params.config().context) {
    throw LengthError("forward_logprobs: " + std::to_string(sequence.size()) + " tokens plus BOS exceed context " +
                      std::to_string(params.config().context));
  }
  const auto inputs = frame(sequence);
  const auto acts = forward(params, std::span<const TokenId>(inputs));
  LogProbTable<T> table;
  table.rows = acts.rows;
  table.values.resize(acts.logits.size());
  for (int t = 0; t < acts.rows; ++t) {
    log_softmax(acts.logits_row(t),
                std::span<T>(table.values).subspan(static_cast<std::size_t>(t) * Vocabulary::kSize,
                                                   Vocabulary::kSize));
  }
  return table;
}

template <typename T>
T ContinuationPass<T>::sum() const {
  T s = 0;
  for (const T v : token_logprobs) s += v;
  return s;
}

template <typename T>
ContinuationPass<T> score_continuation(const ModelParams<T>& params, const TokenSequence& prompt,
                                       const TokenSequence& continuation) {
  if (continuation.empty()) throw ShapeError("score_continuation: empty continuation");
  // The last continuation token is never an input.
  TokenSequence inputs_tail(continuation.begin(), continuation.end() - 1);
  const auto inputs = frame(prompt, inputs_tail);
  if (static_cast<int>(inputs.size()) > params.config().context) {
    throw LengthError("score_continuation: prompt + continuation exceed context " +
                      std::to_string(params.config().context));
  }
  ContinuationPass<T> pass;
  pass.prompt_length = prompt.size();
  pass.continuation = continuation;
  ForwardOptions opts;
  opts.logits_from = static_cast<int>(prompt.size());
  pass.acts = forward(params, std::span<const TokenId>(inputs), opts);
  pass.token_logprobs.resize(continuation.size());
  pass.log_partition.resize(continuation.size());
  std::vector<T> row(Vocabulary::kSize);
  for (std::size_t t = 0; t < continuation.size(); ++t) {
    const auto logits = pass.acts.logits_row(static_cast<int>(prompt.size() + t));
    pass.log_partition[t] = log_softmax(logits, std::span<T>(row));
    pass.token_logprobs[t] = row[static_cast<std::size_t>(continuation[t])];
  }
  return pass;
}

template <typename T>
void backward_continuation(const ModelParams<T>& params, const ContinuationPass<T>& pass,
                           std::span<const T> dlogprobs, std::span<T> grad) {
  const std::size_t n = pass.continuation.size();
  if (dlogprobs.size() != n) throw ShapeError("backward_continuation: coefficient count mismatch");
  const std::size_t V = Vocabulary::kSize;
  std::vector<T> dlogits(n * V);
  for (std::size_t t = 0; t < n; ++t) {
    const auto logits = pass.acts.logits_row(static_cast<int>(pass.prompt_length + t));
    const T c = dlogprobs[t];
    T* out = dlogits.data() + t * V;
    for (std::size_t j = 0; j < V; ++j) out[j] = -c * std::exp(logits[j] - pass.log_partition[t]);
    out[static_cast<std::size_t>(pass.continuation[t])] += c;
  }
  backward(params, pass.acts, std::span<const T>(dlogits), std::span<const T>(), grad);
}

template float log_softmax(std::span<const float>, std::span<float>);
template double log_softmax(std::span<const double>, std::span<double>);
template LogProbTable<float> forward_logprobs(const ModelParams<float>&, const TokenSequence&);
template LogProbTable<double> forward_logprobs(const ModelParams<double>&, const TokenSequence&);
template struct ContinuationPass<float>;
template struct ContinuationPass<double>;
template ContinuationPass<float> score_continuation(const ModelParams<float>&, const TokenSequence&,
                                                    const TokenSequence&);
template ContinuationPass<double> score_continuation(const ModelParams<double>&, const TokenSequence&,
                                                     const TokenSequence&);
template void backward_continuation(const ModelParams<float>&, const ContinuationPass<float>&,
                                    std::span<const float>, std::span<float>);
template void backward_continuation(const ModelParams<double>&, const ContinuationPass<double>&,
                                    std::span<const double>, std::span<double>);

}  // namespace preflearn::lm
