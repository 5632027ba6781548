#include "preflearn/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "preflearn/common/errors.hpp"
#include "preflearn/common/parallel.hpp"
#include "preflearn/common/rng.hpp"
#include "preflearn/data/pipeline.hpp"
#include "preflearn/lm/logprobs.hpp"
#include "preflearn/lm/sampling.hpp"

namespace preflearn::eval {

using lm::TokenSequence;
using lm::Vocabulary;

OracleScore oracle_score(const OracleTask& task, const TokenSequence&, const TokenSequence& continuation) {
  if (task.id != "target-density") throw ConfigError("unknown oracle task '" + task.id + "'");
  OracleScore s;
  if (continuation.empty()) {
    s.empty_continuation = true;
    return s;
  }
  const auto eos = std::find(continuation.begin(), continuation.end(), Vocabulary::kEos);
  const auto body = static_cast<std::size_t>(eos - continuation.begin());
  const auto hits = static_cast<std::size_t>(std::count(continuation.begin(), eos, task.target));
  double v = body == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(body);
  if (eos != continuation.end()) v += task.eos_bonus;
  s.value = std::min(v, 1.0);
  return s;
}

double oracle_reward(const OracleTask& task, const TokenSequence& prompt, const TokenSequence& continuation) {
  return oracle_score(task, prompt, continuation).value;
}

double mean_oracle_reward(const OracleTask& task, const lm::PolicyParams& policy,
                          const std::vector<TokenSequence>& prompts, double temperature, int max_len,
                          std::uint64_t seed) {
  if (prompts.empty()) throw ConfigError("mean_oracle_reward: no prompts");
  std::vector<double> r(prompts.size());
  parallel_for(prompts.size(), [&](std::size_t i) {
    const auto s = lm::sample(policy, prompts[i], temperature, max_len, derive_seed(seed, i));
    r[i] = oracle_reward(task, prompts[i], s.continuation);
  });
  double sum = 0.0;
  for (const double v : r) sum += v;
  return sum / static_cast<double>(r.size());
}

std::vector<data::Conversation> toy_prompts(std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x70));
  std::uniform_int_distribution<int> len(2, 6), digit(0, 9);
  std::vector<data::Conversation> out(n);
  for (auto& c : out) {
    std::string text;
    const int l = len(rng);
    for (int k = 0; k < l; ++k) text.push_back(static_cast<char>('0' + digit(rng)));
    c.push_back({data::Role::user, text});
  }
  return out;
}

std::vector<lm::Demonstration> toy_demonstrations(const std::vector<data::Conversation>& prompts, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x64));
  std::uniform_int_distribution<int> len(3, 8), letter(0, 3);
  std::vector<lm::Demonstration> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) {
    TokenSequence response;
    const int l = len(rng);
    for (int k = 0; k < l; ++k) response.push_back('a' + letter(rng));
    out.push_back({data::render_prompt(p), response});
  }
  return out;
}

data::PromptPool make_pool(const std::vector<data::Conversation>& prompts, std::string tag) {
  data::PromptPool pool;
  pool.pool_tag = std::move(tag);
  for (const auto& p : prompts) pool.prompts.push_back({p, pool.pool_tag});
  return pool;
}

namespace {

bool usable(const lm::SampleResult& s) {
  if (s.truncated || s.continuation.size() < 2) return false;
  return std::all_of(s.continuation.begin(), s.continuation.end() - 1,
                     [](lm::TokenId t) { return t < Vocabulary::kByteCount; });
}

}  // namespace

std::vector<data::PreferencePair> make_synthetic_preferences(const OracleTask& task, const lm::PolicyParams& sampler,
                                                             const std::vector<data::Conversation>& prompts,
                                                             std::size_t n_pairs, int max_len, std::uint64_t seed) {
  if (n_pairs == 0) throw ConfigError("make_synthetic_preferences: n_pairs must be >= 1");
  if (prompts.empty()) throw ConfigError("make_synthetic_preferences: no prompts");
  std::vector<TokenSequence> rendered;
  for (const auto& p : prompts) rendered.push_back(data::render_prompt(p));

  struct Attempt {
    lm::SampleResult a, b;
    double ra = 0.0, rb = 0.0;
  };
  constexpr std::size_t kBlock = 64;
  const std::size_t max_attempts = 50 * n_pairs;
  std::vector<data::PreferencePair> out;
  std::vector<Attempt> block(kBlock);
  for (std::size_t base = 0; base < max_attempts && out.size() < n_pairs; base += kBlock) {
    parallel_for(kBlock, [&](std::size_t k) {
      const std::size_t attempt = base + k;
      const std::size_t i = attempt % prompts.size();
      Attempt& at = block[k];
      at.a = lm::sample(sampler, rendered[i], 1.0, max_len, derive_seed(seed, attempt, 0));
      at.b = lm::sample(sampler, rendered[i], 1.0, max_len, derive_seed(seed, attempt, 1));
      at.ra = oracle_reward(task, rendered[i], at.a.continuation);
      at.rb = oracle_reward(task, rendered[i], at.b.continuation);
    });
    for (std::size_t k = 0; k < kBlock && out.size() < n_pairs && base + k < max_attempts; ++k) {
      const Attempt& at = block[k];
      if (!usable(at.a) || !usable(at.b) || at.ra == at.rb) continue;
      const bool a_wins = at.ra > at.rb;
      data::PreferencePair pair;
      pair.prompt = prompts[(base + k) % prompts.size()];
      pair.chosen = lm::decode_response(a_wins ? at.a.continuation : at.b.continuation);
      pair.rejected = lm::decode_response(a_wins ? at.b.continuation : at.a.continuation);
      pair.source_tag = "synthetic:" + task.id;
      out.push_back(std::move(pair));
    }
  }
  return out;
}

Scorer oracle_scorer(const OracleTask& task) {
  return [task](const TokenSequence& p, const TokenSequence& c) { return oracle_reward(task, p, c); };
}

Scorer reward_model_scorer(const rm::RewardModelParams& reward) {
  return [&reward](const TokenSequence& p, const TokenSequence& c) {
    return static_cast<double>(rm::score(reward, p, c));
  };
}

std::size_t select_best(std::span<const double> scores, std::size_t n) {
  if (n == 0 || n > scores.size()) throw ConfigError("select_best: n out of range");
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (scores[j] > scores[best]) best = j;
  return best;
}

std::vector<BonSelection> best_of_n(const lm::PolicyParams& policy, const Scorer& scorer,
                                    const std::vector<TokenSequence>& prompts, std::size_t n, double temperature,
                                    int max_len, std::uint64_t seed) {
  if (n == 0) throw ConfigError("best_of_n: n must be >= 1");
  std::vector<BonSelection> out(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    out[i].prompt = prompts[i];
    out[i].candidates.resize(n);
  }
  parallel_for(prompts.size() * n, [&](std::size_t k) {
    const std::size_t i = k / n, j = k % n;
    const auto s = lm::sample(policy, prompts[i], temperature, max_len, derive_seed(seed, i, j));
    Candidate& c = out[i].candidates[j];
    c.continuation = s.continuation;
    c.truncated = s.truncated;
    c.score = scorer(prompts[i], s.continuation);
  });
  std::vector<double> scores(n);
  for (auto& sel : out) {
    for (std::size_t j = 0; j < n; ++j) scores[j] = sel.candidates[j].score;
    sel.selected = select_best(scores, n);
  }
  return out;
}

template <typename T>
double sequence_kl(const lm::ModelParams<T>& policy, const lm::ModelParams<T>& reference, const TokenSequence& prompt,
                   const TokenSequence& continuation) {
  if (continuation.empty()) return 0.0;
  const auto inputs = lm::frame(prompt, TokenSequence(continuation.begin(), continuation.end() - 1));
  lm::ForwardOptions opts;
  opts.logits_from = static_cast<int>(prompt.size());
  const auto ap = lm::forward(policy, std::span<const lm::TokenId>(inputs), opts);
  const auto aq = lm::forward(reference, std::span<const lm::TokenId>(inputs), opts);
  std::vector<T> lp(Vocabulary::kSize), lq(Vocabulary::kSize);
  double total = 0.0;
  for (int row = opts.logits_from; row < ap.rows; ++row) {
    lm::log_softmax(ap.logits_row(row), std::span<T>(lp));
    lm::log_softmax(aq.logits_row(row), std::span<T>(lq));
    double kl = 0.0;
    for (int v = 0; v < Vocabulary::kSize; ++v) {
      const double a = static_cast<double>(lp[v]);
      kl += std::exp(a) * (a - static_cast<double>(lq[v]));
    }
    total += std::max(kl, 0.0);
  }
  return total;
}

double mean_kl_to_ref(const lm::PolicyParams& policy, const lm::PolicyParams& reference,
                      const std::vector<TokenSequence>& prompts, std::uint64_t seed, int max_len) {
  if (prompts.empty()) throw ConfigError("mean_kl_to_ref: no prompts");
  std::vector<double> kl(prompts.size());
  parallel_for(prompts.size(), [&](std::size_t i) {
    const auto s = lm::sample(policy, prompts[i], 1.0, max_len, derive_seed(seed, i));
    kl[i] = sequence_kl(policy, reference, prompts[i], s.continuation);
  });
  double sum = 0.0;
  for (const double v : kl) sum += v;
  return sum / static_cast<double>(kl.size());
}

namespace {

std::string printable(const TokenSequence& tokens) {
  std::string s;
  for (const auto t : tokens) {
    if (t < Vocabulary::kByteCount) s.push_back(static_cast<char>(t));
    else if (t == Vocabulary::kEos) s += "<eos>";
    else s += "<bos>";
  }
  return s;
}

}  // namespace

void write_bon_report(const std::filesystem::path& path, const std::vector<BonSelection>& selections,
                      bool include_candidates) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& sel : selections) {
    nlohmann::json j;
    j["prompt"] = printable(sel.prompt);
    j["continuation"] = printable(sel.best().continuation);
    j["score"] = sel.best().score;
    j["n"] = sel.candidates.size();
    if (include_candidates) {
      auto arr = nlohmann::json::array();
      for (const auto& c : sel.candidates)
        arr.push_back({{"continuation", printable(c.continuation)}, {"score", c.score}, {"truncated", c.truncated}});
      j["candidates"] = std::move(arr);
    }
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

template double sequence_kl(const lm::ModelParams<float>&, const lm::ModelParams<float>&, const TokenSequence&,
                            const TokenSequence&);
template double sequence_kl(const lm::ModelParams<double>&, const lm::ModelParams<double>&, const TokenSequence&,
                            const TokenSequence&);

}  // namespace preflearn::eval
