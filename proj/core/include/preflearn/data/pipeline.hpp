#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "preflearn/common/rng.hpp"
#include "preflearn/data/types.hpp"
#include "preflearn/lm/vocabulary.hpp"

namespace preflearn::data {

enum class ScoreMode { fine_grained, overall };

ScoreMode parse_score_mode(const std::string& name);

inline const std::vector<std::string>& default_excluded_aspects() {
  static const std::vector<std::string> excluded{"verbosity"};
  return excluded;
}

/// Mean over non-excluded aspects (fine_grained) or the overall score.
/// Throws DataError when the mode's score is unavailable.
double response_score(const ScoredResponse& response, ScoreMode mode, const std::vector<std::string>& excluded);

/// One pair per prompt: chosen = highest score (lowest index on ties),
/// rejected = uniform among responses scoring strictly lower. nullopt when
/// every response has the same score.
std::optional<PreferencePair> binarize_scored(const ScoredResponseSet& set, ScoreMode mode,
                                              const std::vector<std::string>& excluded, std::uint64_t seed);

struct FilterReport {
  static constexpr const char* kEmptyTurn = "empty turn";
  static constexpr const char* kTie = "tie";
  static constexpr const char* kEmptyPrompt = "empty prompt";

  std::map<std::string, std::size_t> rejected;  ///< reason -> count

  std::size_t total() const;
  bool empty() const { return rejected.empty(); }
};

template <typename Record>
struct Filtered {
  std::vector<Record> kept;
  FilterReport report;
};

/// Drops pairs with an empty prompt, any empty turn or reply, or
/// chosen == rejected. First matching reason wins, in that order.
Filtered<PreferencePair> filter_malformed(const std::vector<PreferencePair>& pairs);
Filtered<Conversation> filter_malformed(const std::vector<Conversation>& conversations);

/// Uniform sample of min(n, size) items without replacement, kept in their
/// original order. Deterministic per seed.
template <typename Item>
std::vector<Item> downsample(const std::vector<Item>& items, std::size_t n, std::uint64_t seed) {
  if (n >= items.size()) return items;
  std::vector<Item> out;
  out.reserve(n);
  Rng rng(seed);
  std::sample(items.begin(), items.end(), std::back_inserter(out), n, rng);
  return out;
}

/// Draws target_size prompts from the concatenated pools without
/// replacement, each prompt weighted by its pool's weight. Output keeps the
/// concatenated order; every entry keeps its origin tag. Throws SizeError if
/// fewer than target_size prompts have positive weight, ConfigError for
/// negative weights or a zero weight sum.
PromptPool remix_prompt_pools(const std::vector<std::pair<PromptPool, double>>& pools, std::size_t target_size,
                              std::uint64_t seed, std::string pool_tag = "remix");

/// Token framing of a conversation: user turns as raw bytes, assistant turns
/// as bytes followed by EOS. A prompt ending in a user turn is therefore
/// continued directly by the assistant reply.
lm::TokenSequence render_prompt(const Conversation& prompt);
/// Reply bytes followed by EOS.
lm::TokenSequence render_response(const std::string& text);

struct TokenizedPair {
  lm::TokenSequence prompt;
  lm::TokenSequence chosen;    ///< EOS-terminated
  lm::TokenSequence rejected;  ///< EOS-terminated
};

TokenizedPair tokenize(const PreferencePair& pair);
std::vector<TokenizedPair> tokenize(const std::vector<PreferencePair>& pairs);

}  // namespace preflearn::data
