#include "preflearn/lm/sampling.hpp"

#include <cmath>
#include <limits>

#include "preflearn/common/errors.hpp"
#include "preflearn/common/rng.hpp"
#include "preflearn/lm/logprobs.hpp"

namespace preflearn::lm {

std::size_t argmax_lowest(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

SampleResult sample(const PolicyParams& params, const TokenSequence& prompt, double temperature, int max_len,
                    std::uint64_t seed) {
  if (!(temperature >= 0.0)) throw ConfigError("sample: temperature must be >= 0");
  if (max_len < 0) throw ConfigError("sample: max_len must be >= 0");
  if (1 + static_cast<int>(prompt.size()) + max_len > params.config().context) {
    throw LengthError("sample: BOS + prompt (" + std::to_string(prompt.size()) + ") + max_len (" +
                      std::to_string(max_len) + ") exceeds context " + std::to_string(params.config().context));
  }
  Rng rng(seed);
  SampleResult out;
  out.truncated = true;
  std::vector<TokenId> inputs = frame(prompt);
  std::vector<float> logprobs(Vocabulary::kSize);
  std::vector<double> probs(Vocabulary::kSize);
  for (int step = 0; step < max_len; ++step) {
    ForwardOptions opts;
    opts.logits_from = static_cast<int>(inputs.size()) - 1;
    const auto acts = forward(params, std::span<const TokenId>(inputs), opts);
    const auto logits = acts.logits_row(acts.rows - 1);
    log_softmax(logits, std::span<float>(logprobs));

    TokenId token;
    if (temperature == 0.0) {
      token = static_cast<TokenId>(argmax_lowest(logits));
    } else {
      double mx = -std::numeric_limits<double>::infinity();
      for (const float l : logits) mx = std::max(mx, static_cast<double>(l));
      double total = 0.0;
      for (std::size_t j = 0; j < probs.size(); ++j) {
        probs[j] = std::exp((static_cast<double>(logits[j]) - mx) / temperature);
        total += probs[j];
      }
      const double u = uniform01(rng) * total;
      double acc = 0.0;
      token = -1;
      for (std::size_t j = 0; j < probs.size(); ++j) {
        acc += probs[j];
        if (u < acc) {
          token = static_cast<TokenId>(j);
          break;
        }
      }
      if (token < 0) {
        for (std::size_t j = probs.size(); j-- > 0;) {
          if (probs[j] > 0.0) {
            token = static_cast<TokenId>(j);
            break;
          }
        }
      }
    }
    out.continuation.push_back(token);
    out.rollout_logprobs.push_back(logprobs[static_cast<std::size_t>(token)]);
    if (token == Vocabulary::kEos) {
      out.truncated = false;
      break;
    }
    inputs.push_back(token);
  }
  return out;
}

}  // namespace preflearn::lm
