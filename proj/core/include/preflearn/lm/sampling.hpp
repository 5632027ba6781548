#pragma once

#include <cstdint>
#include <vector>

#include "preflearn/lm/model.hpp"

namespace preflearn::lm {

struct SampleResult {
  TokenSequence continuation;          ///< includes the EOS token when one was emitted
  std::vector<float> rollout_logprobs; ///< untempered log pi(y_t | x, y_<t) at sampling time
  bool truncated = false;              ///< true iff EOS was never emitted
};

/// Draws from softmax(logits / temperature) until EOS or max_len tokens.
/// temperature == 0 selects the argmax, lowest id on ties. Pure function of
/// its arguments. Throws LengthError if BOS + prompt + max_len exceeds the
/// context, ConfigError for negative temperature.
SampleResult sample(const PolicyParams& params, const TokenSequence& prompt, double temperature, int max_len,
                    std::uint64_t seed);

/// Index of the largest value, lowest index on ties.
std::size_t argmax_lowest(std::span<const float> values);

}  // namespace preflearn::lm
