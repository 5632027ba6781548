#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>

#include "oracles.hpp"
#include "preflearn/common/errors.hpp"
#include "preflearn/data/pipeline.hpp"
#include "preflearn/eval/eval.hpp"
#include "preflearn/lm/vocabulary.hpp"

using namespace preflearn;
using namespace preflearn::eval;
using lm::Vocabulary;
using preflearn::testing::random_params;
using preflearn::testing::random_tokens;
using preflearn::testing::tiny_config;

TEST(Oracle, Density) {
  const OracleTask t;
  EXPECT_NEAR(oracle_reward(t, {}, {'a', 'a', 'b', 'c', Vocabulary::kEos}), 0.5 + 0.1, 1e-15);
  EXPECT_NEAR(oracle_reward(t, {}, {'a', 'b'}), 0.5, 1e-15);
  EXPECT_EQ(oracle_reward(t, {}, {'a', 'a', Vocabulary::kEos}), 1.0);
  EXPECT_NEAR(oracle_reward(t, {}, {Vocabulary::kEos}), 0.1, 1e-15);
  EXPECT_NEAR(oracle_reward(t, {}, {'b', Vocabulary::kEos, 'a', 'a'}), 0.1, 1e-15);
  const auto empty = oracle_score(t, {}, {});
  EXPECT_TRUE(empty.empty_continuation);
  EXPECT_EQ(empty.value, 0.0);
  OracleTask bad;
  bad.id = "nope";
  EXPECT_THROW(oracle_score(bad, {}, {'a'}), ConfigError);
}

TEST(Oracle, RangeProperty) {
  std::mt19937_64 rng(1);
  const OracleTask t;
  for (int i = 0; i < 500; ++i) {
    auto c = random_tokens(rng, rng() % 10, Vocabulary::kEos);
    const double v = oracle_reward(t, {}, c);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Toy, PromptsAndDemonstrations) {
  const auto prompts = toy_prompts(50, 3);
  EXPECT_EQ(prompts, toy_prompts(50, 3));
  for (const auto& p : prompts) {
    ASSERT_EQ(p.size(), 1u);
    EXPECT_GE(p[0].content.size(), 2u);
    EXPECT_LE(p[0].content.size(), 6u);
    for (char ch : p[0].content) EXPECT_TRUE(ch >= '0' && ch <= '9');
  }
  const auto demos = toy_demonstrations(prompts, 4);
  ASSERT_EQ(demos.size(), prompts.size());
  for (const auto& d : demos) {
    EXPECT_GE(d.response.size(), 3u);
    EXPECT_LE(d.response.size(), 8u);
    for (auto tok : d.response) EXPECT_TRUE(tok >= 'a' && tok <= 'd');
  }
  EXPECT_EQ(make_pool(prompts, "toy").prompts.size(), 50u);
}

TEST(Synthetic, PairsAreOrderedByOracle) {
  lm::ModelConfig cfg = tiny_config();
  cfg.context = 24;
  const auto sampler = random_params<float>(cfg, 4, 0.3);
  const auto prompts = toy_prompts(8, 1);
  const OracleTask t;
  const auto pairs = make_synthetic_preferences(t, sampler, prompts, 20, 8, 2);
  EXPECT_LE(pairs.size(), 20u);
  for (const auto& p : pairs) {
    EXPECT_GT(oracle_reward(t, {}, data::render_response(p.chosen)), oracle_reward(t, {}, data::render_response(p.rejected)));
    EXPECT_FALSE(p.chosen.empty());
    EXPECT_NE(p.chosen, p.rejected);
  }
  EXPECT_EQ(pairs, make_synthetic_preferences(t, sampler, prompts, 20, 8, 2));
}

TEST(BestOfN, SelectBest) {
  const std::vector<double> s{0.1, 0.5, 0.5, 0.9};
  EXPECT_EQ(select_best(s, 1), 0u);
  EXPECT_EQ(select_best(s, 3), 1u);
  EXPECT_EQ(select_best(s, 4), 3u);
}

TEST(BestOfN, SelectionAndMonotonicity) {
  lm::ModelConfig cfg = tiny_config();
  cfg.context = 24;
  const auto policy = random_params<float>(cfg, 5, 0.3);
  std::vector<lm::TokenSequence> prompts;
  for (const auto& c : toy_prompts(10, 9)) prompts.push_back(data::render_prompt(c));
  const auto scorer = oracle_scorer(OracleTask{});
  const auto sel = best_of_n(policy, scorer, prompts, 8, 0.7, 10, 3);
  ASSERT_EQ(sel.size(), prompts.size());
  for (const auto& s : sel) {
    ASSERT_EQ(s.candidates.size(), 8u);
    std::vector<double> scores;
    for (const auto& c : s.candidates) {
      EXPECT_EQ(c.score, scorer(s.prompt, c.continuation));
      scores.push_back(c.score);
    }
    EXPECT_EQ(s.selected, select_best(scores, 8));
    double prev = -1e300;
    for (std::size_t n = 1; n <= 8; ++n) {
      const double best = scores[select_best(scores, n)];
      EXPECT_GE(best, prev);
      prev = best;
    }
  }
  EXPECT_THROW(best_of_n(policy, scorer, prompts, 0), ConfigError);
}

TEST(BestOfN, ReportIsJsonLines) {
  BonSelection s{{'1'}, 1, {{{'b', Vocabulary::kEos}, false, 0.1}, {{'a', Vocabulary::kEos}, false, 1.0}}};
  const auto path = std::filesystem::temp_directory_path() / "pl_bon.jsonl";
  write_bon_report(path, {s, s}, true);
  std::ifstream in(path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["score"].get<double>(), 1.0);
    EXPECT_EQ(j["candidates"].size(), 2u);
    ++n;
  }
  EXPECT_EQ(n, 2);
}

TEST(Kl, MatchesReferenceAndVanishesAtReference) {
  const auto p = random_params<double>(tiny_config(), 11);
  const auto q = random_params<double>(tiny_config(), 12);
  const lm::TokenSequence prompt{5, 6}, cont{7, 8, Vocabulary::kEos};
  const auto inputs = lm::frame(prompt, {7, 8});
  const auto lp = preflearn::testing::reference_logits(p, inputs);
  const auto lq = preflearn::testing::reference_logits(q, inputs);
  double expected = 0;
  for (std::size_t row = prompt.size(); row < inputs.size(); ++row) {
    const auto a = preflearn::testing::reference_log_softmax(lp[row]);
    const auto b = preflearn::testing::reference_log_softmax(lq[row]);
    for (std::size_t v = 0; v < a.size(); ++v) expected += std::exp(a[v]) * (a[v] - b[v]);
  }
  EXPECT_NEAR(sequence_kl(p, q, prompt, cont), expected, 1e-10);
  EXPECT_EQ(sequence_kl(p, p, prompt, cont), 0.0);
  EXPECT_EQ(sequence_kl(p, q, prompt, {}), 0.0);

  const auto pf = p.cast<float>();
  EXPECT_EQ(mean_kl_to_ref(pf, pf, {{1, 2}, {3}}, 1, 6), 0.0);
  EXPECT_GT(mean_kl_to_ref(pf, q.cast<float>(), {{1, 2}, {3}}, 1, 6), 0.0);
}
