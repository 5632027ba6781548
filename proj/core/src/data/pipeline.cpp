#include "preflearn/data/pipeline.hpp"

#include <cmath>
#include <numeric>

#include "preflearn/common/errors.hpp"

namespace preflearn::data {

ScoreMode parse_score_mode(const std::string& name) {
  if (name == "fine_grained" || name == "fine-grained") return ScoreMode::fine_grained;
  if (name == "overall") return ScoreMode::overall;
  throw ConfigError("unknown score mode '" + name + "' (expected fine_grained or overall)");
}

double response_score(const ScoredResponse& response, ScoreMode mode, const std::vector<std::string>& excluded) {
  if (mode == ScoreMode::overall) {
    if (!response.overall) throw DataError("response has no overall score");
    return *response.overall;
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& [name, value] : response.aspects) {
    if (std::find(excluded.begin(), excluded.end(), name) != excluded.end()) continue;
    sum += value;
    ++count;
  }
  if (count == 0) throw DataError("response has no fine-grained scores outside the excluded aspects");
  return sum / static_cast<double>(count);
}

std::optional<PreferencePair> binarize_scored(const ScoredResponseSet& set, ScoreMode mode,
                                              const std::vector<std::string>& excluded, std::uint64_t seed) {
  if (set.responses.size() < 2) throw DataError("binarize: need at least 2 responses");
  std::vector<double> scores;
  scores.reserve(set.responses.size());
  for (const auto& r : set.responses) scores.push_back(response_score(r, mode, excluded));

  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  std::vector<std::size_t> lower;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] < scores[best]) lower.push_back(i);
  }
  if (lower.empty()) return std::nullopt;
  Rng rng(seed);
  const std::size_t pick = lower[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(lower.size()))];
  PreferencePair pair;
  pair.prompt = set.prompt;
  pair.chosen = set.responses[best].content;
  pair.rejected = set.responses[pick].content;
  if (pair.chosen == pair.rejected) return std::nullopt;
  return pair;
}

std::size_t FilterReport::total() const {
  std::size_t n = 0;
  for (const auto& [_, c] : rejected) n += c;
  return n;
}

namespace {

const char* conversation_defect(const Conversation& turns) {
  if (turns.empty()) return FilterReport::kEmptyPrompt;
  for (const auto& t : turns) {
    if (t.content.empty()) return FilterReport::kEmptyTurn;
  }
  return nullptr;
}

}  // namespace

Filtered<PreferencePair> filter_malformed(const std::vector<PreferencePair>& pairs) {
  Filtered<PreferencePair> out;
  for (const auto& p : pairs) {
    const char* reason = conversation_defect(p.prompt);
    if (!reason && (p.chosen.empty() || p.rejected.empty())) reason = FilterReport::kEmptyTurn;
    if (!reason && p.chosen == p.rejected) reason = FilterReport::kTie;
    if (reason) {
      ++out.report.rejected[reason];
    } else {
      out.kept.push_back(p);
    }
  }
  return out;
}

Filtered<Conversation> filter_malformed(const std::vector<Conversation>& conversations) {
  Filtered<Conversation> out;
  for (const auto& c : conversations) {
    if (const char* reason = conversation_defect(c)) {
      ++out.report.rejected[reason];
    } else {
      out.kept.push_back(c);
    }
  }
  return out;
}

PromptPool remix_prompt_pools(const std::vector<std::pair<PromptPool, double>>& pools, std::size_t target_size,
                              std::uint64_t seed, std::string pool_tag) {
  double weight_sum = 0.0;
  std::size_t total = 0, eligible = 0;
  for (const auto& [pool, w] : pools) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("remix: pool weights must be finite and >= 0");
    weight_sum += w;
    total += pool.prompts.size();
    if (w > 0.0) eligible += pool.prompts.size();
  }
  if (!(weight_sum > 0.0)) throw ConfigError("remix: pool weights must sum to a positive value");
  if (target_size > total) {
    throw SizeError("remix: target size " + std::to_string(target_size) + " exceeds the " + std::to_string(total) +
                    " available prompts");
  }
  if (target_size > eligible) {
    throw SizeError("remix: target size " + std::to_string(target_size) + " exceeds the " +
                    std::to_string(eligible) + " prompts with positive weight");
  }

  // Weighted sampling without replacement: keep the target_size largest
  // keys log(u) / w (Efraimidis-Spirakis).
  struct Keyed {
    double key;
    std::size_t pool, index, flat;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(eligible);
  Rng rng(seed);
  std::size_t flat = 0;
  for (std::size_t p = 0; p < pools.size(); ++p) {
    const double w = pools[p].second;
    for (std::size_t i = 0; i < pools[p].first.prompts.size(); ++i, ++flat) {
      const double u = uniform01(rng);
      if (w <= 0.0) continue;
      keyed.push_back({std::log(std::max(u, 1e-300)) / w, p, i, flat});
    }
  }
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(target_size), keyed.end(),
                    [](const Keyed& a, const Keyed& b) { return a.key != b.key ? a.key > b.key : a.flat < b.flat; });
  keyed.resize(target_size);
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) { return a.flat < b.flat; });

  PromptPool out;
  out.pool_tag = std::move(pool_tag);
  for (const auto& k : keyed) {
    auto entry = pools[k.pool].first.prompts[k.index];
    if (entry.origin.empty()) entry.origin = pools[k.pool].first.pool_tag;
    out.prompts.push_back(std::move(entry));
  }
  return out;
}

lm::TokenSequence render_prompt(const Conversation& prompt) {
  lm::TokenSequence out;
  for (const auto& t : prompt) {
    const auto bytes = lm::encode(t.content);
    out.insert(out.end(), bytes.begin(), bytes.end());
    if (t.role == Role::assistant) out.push_back(lm::Vocabulary::kEos);
  }
  return out;
}

lm::TokenSequence render_response(const std::string& text) {
  auto out = lm::encode(text);
  out.push_back(lm::Vocabulary::kEos);
  return out;
}

TokenizedPair tokenize(const PreferencePair& pair) {
  return {render_prompt(pair.prompt), render_response(pair.chosen), render_response(pair.rejected)};
}

std::vector<TokenizedPair> tokenize(const std::vector<PreferencePair>& pairs) {
  std::vector<TokenizedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(tokenize(p));
  return out;
}

}  // namespace preflearn::data
