#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "preflearn/common/errors.hpp"
#include "preflearn/lm/gradcheck.hpp"
#include "preflearn/lm/vocabulary.hpp"
#include "preflearn/rm/reward_model.hpp"

using namespace preflearn;
using namespace preflearn::rm;
using preflearn::testing::random_params;
using preflearn::testing::random_tokens;
using preflearn::testing::tiny_config;

namespace {

using lm::Vocabulary;

data::TokenizedPair random_pair(std::mt19937_64& rng) {
  data::TokenizedPair p;
  p.prompt = random_tokens(rng, 1 + rng() % 3);
  p.chosen = random_tokens(rng, 1 + rng() % 3);
  p.chosen.push_back(Vocabulary::kEos);
  p.rejected = random_tokens(rng, 1 + rng() % 3);
  p.rejected.push_back(Vocabulary::kEos);
  return p;
}

RewardParams<double> random_reward(std::uint64_t seed) {
  RewardParams<double> r(random_params<double>(tiny_config(), seed));
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& h : r.head) h = n(rng);
  return r;
}

double oracle_bt(double margin) { return std::log1p(std::exp(-margin)); }

}  // namespace

TEST(RewardModel, ZeroHeadGivesLn2) {
  RewardParams<double> r(random_params<double>(tiny_config(), 3));
  std::mt19937_64 rng(1);
  const std::vector<data::TokenizedPair> batch{random_pair(rng), random_pair(rng)};
  EXPECT_NEAR(bt_loss_and_grad(r, std::span<const data::TokenizedPair>(batch), std::span<double>()), std::log(2.0),
              1e-12);
}

TEST(RewardModel, MarginLn3GivesLn4Over3) {
  auto r = random_reward(5);
  r.head_bias() = 0.0;
  std::mt19937_64 rng(2);
  const auto pair = random_pair(rng);
  const double d = score(r, pair.prompt, pair.chosen) - score(r, pair.prompt, pair.rejected);
  ASSERT_GT(std::abs(d), 1e-6);
  for (std::size_t i = 0; i + 1 < r.head.size(); ++i) r.head[i] *= std::log(3.0) / d;
  const std::vector<data::TokenizedPair> batch{pair};
  EXPECT_NEAR(bt_loss_and_grad(r, std::span<const data::TokenizedPair>(batch), std::span<double>()),
              std::log(4.0 / 3.0), 1e-9);
}

TEST(RewardModel, LossMatchesScoreOracle) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 5; ++i) {
    const auto r = random_reward(20 + i);
    std::vector<data::TokenizedPair> batch{random_pair(rng), random_pair(rng), random_pair(rng)};
    double expected = 0;
    for (const auto& p : batch) expected += oracle_bt(score(r, p.prompt, p.chosen) - score(r, p.prompt, p.rejected));
    expected /= batch.size();
    EXPECT_NEAR(bt_loss_and_grad(r, std::span<const data::TokenizedPair>(batch), std::span<double>()), expected,
                1e-12);
  }
}

TEST(RewardModel, ShiftInvariance) {
  auto r = random_reward(9);
  std::mt19937_64 rng(9);
  const std::vector<data::TokenizedPair> batch{random_pair(rng), random_pair(rng)};
  const double before = bt_loss_and_grad(r, std::span<const data::TokenizedPair>(batch), std::span<double>());
  r.head_bias() += 7.0;
  EXPECT_NEAR(bt_loss_and_grad(r, std::span<const data::TokenizedPair>(batch), std::span<double>()), before, 1e-12);
}

TEST(RewardModel, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (int inst = 0; inst < 3; ++inst) {
    const auto r = random_reward(40 + inst);
    const std::vector<data::TokenizedPair> batch{random_pair(rng), random_pair(rng)};
    std::vector<double> grad(r.size(), 0.0);
    bt_loss_and_grad(r, std::span<const data::TokenizedPair>(batch), std::span<double>(grad));
    const auto x = r.flatten();
    const auto num = lm::finite_diff_gradient(
        [&](std::span<const double> v) {
          auto q = r;
          q.assign_flat(v);
          return bt_loss_and_grad(q, std::span<const data::TokenizedPair>(batch), std::span<double>());
        },
        x, 1e-5);
    EXPECT_LT(lm::max_relative_error(grad, num), 1e-4);
  }
}

TEST(RewardModel, ScoredRow) {
  const lm::TokenSequence prompt{1, 2, 3};
  EXPECT_EQ(scored_row(prompt, {4, 5, Vocabulary::kEos}), 6);
  EXPECT_EQ(scored_row(prompt, {4, Vocabulary::kEos, 9}), 5);
  EXPECT_EQ(scored_row(prompt, {4, 5}), 5);
  EXPECT_EQ(scored_row(prompt, {}), 3);
}

TEST(RewardModel, TokensAfterEosIgnored) {
  const auto r = random_reward(6);
  const lm::TokenSequence prompt{10, 11};
  EXPECT_EQ(score(r, prompt, {12, Vocabulary::kEos}), score(r, prompt, {12, Vocabulary::kEos, 40, 41}));
}

TEST(RewardModel, TooLongThrows) {
  const auto r = random_reward(6);
  EXPECT_THROW(score(r, lm::TokenSequence(20, 1), {Vocabulary::kEos}), LengthError);
}

TEST(RewardModel, PairwiseAccuracy) {
  const std::vector<std::pair<double, double>> s{{1, 0}, {0, 1}, {2, 2}, {3, 1}};
  EXPECT_DOUBLE_EQ(pairwise_accuracy(s), 2.5 / 4);
  EXPECT_THROW(pairwise_accuracy(std::span<const std::pair<double, double>>()), ConfigError);
}

TEST(RewardModel, TrainingLearnsSimplePreference) {
  std::vector<data::PreferencePair> pairs;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 64; ++i) {
    const std::string prompt(1, static_cast<char>('0' + i % 10));
    pairs.push_back({{{data::Role::user, prompt}}, std::string(1 + rng() % 3, 'a'), std::string(1 + rng() % 3, 'z'), ""});
  }
  lm::ModelConfig cfg = tiny_config();
  cfg.d_model = 8;
  cfg.d_ff = 16;
  auto train = lm::TrainConfig::reward_model_defaults();
  train.learning_rate = 1e-2;
  train.batch_size = 8;
  train.epochs = 5;
  const auto init = lm::PolicyParams::initialized(cfg, 7);
  std::vector<double> losses;
  const auto r = train_reward_model(train, init, pairs, [&](const lm::TrainStepInfo& s) { losses.push_back(s.loss); });
  EXPECT_GT(pairwise_accuracy(r, pairs), 0.9);
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_TRUE(r == train_reward_model(train, init, pairs));
  EXPECT_THROW(train_reward_model(train, init, {}), ConfigError);
}

TEST(RewardModel, CheckpointRoundTrip) {
  const auto r = random_reward(77).cast<float>();
  const auto path = std::filesystem::temp_directory_path() / "pl_rm.ckpt";
  save_reward_model(path, r, "value");
  EXPECT_TRUE(load_reward_model(path) == r);
}
