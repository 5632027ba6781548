#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "preflearn/common/errors.hpp"
#include "preflearn/lm/checkpoint.hpp"
#include "preflearn/lm/gradcheck.hpp"
#include "preflearn/lm/logprobs.hpp"
#include "preflearn/lm/optimizer.hpp"
#include "preflearn/lm/sampling.hpp"
#include "preflearn/lm/sft.hpp"
#include "preflearn/lm/vocabulary.hpp"

using namespace preflearn;
using namespace preflearn::lm;
using preflearn::testing::random_params;
using preflearn::testing::tiny_config;

TEST(Vocabulary, EncodeDecode) {
  EXPECT_EQ(encode("ab"), (TokenSequence{97, 98}));
  EXPECT_TRUE(encode("").empty());
  EXPECT_EQ(decode({104, 105}), "hi");
  EXPECT_EQ(decode({}), "");
  EXPECT_NE(Vocabulary::kBos, Vocabulary::kEos);
  EXPECT_FALSE(Vocabulary::is_byte(Vocabulary::kBos));
  EXPECT_FALSE(Vocabulary::is_byte(Vocabulary::kEos));
}

TEST(Vocabulary, DecodeRejectsSpecialTokens) {
  try {
    decode({104, 256});
    FAIL();
  } catch (const InvalidTokenError& e) {
    EXPECT_EQ(e.position(), 1u);
  }
  EXPECT_THROW(decode({Vocabulary::kEos}), InvalidTokenError);
}

TEST(Vocabulary, RandomRoundTrip) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(0, 40), byte(0, 255);
  for (int i = 0; i < 1000; ++i) {
    std::string s(static_cast<std::size_t>(len(rng)), '\0');
    for (auto& c : s) c = static_cast<char>(byte(rng));
    ASSERT_EQ(decode(encode(s)), s);
  }
}

TEST(Vocabulary, DecodeResponseStopsAtEos) {
  EXPECT_EQ(decode_response({'o', 'k', Vocabulary::kEos, 'x'}), "ok");
}

TEST(Forward, ZeroHeadIsUniform) {
  ModelConfig cfg = tiny_config();
  auto p = random_params<float>(cfg, 3);
  for (auto& v : p.tensor("head.w")) v = 0;
  for (auto& v : p.tensor("head.b")) v = 0;
  const auto table = forward_logprobs(p, {1, 2, 3});
  EXPECT_EQ(table.rows, 4);
  for (float v : table.values) EXPECT_NEAR(v, -std::log(258.0), 1e-5);
}

TEST(Forward, RowsAreNormalized) {
  auto p = random_params<float>(tiny_config(), 5, 1.0);
  std::mt19937_64 rng(5);
  const auto table = forward_logprobs(p, preflearn::testing::random_tokens(rng, 10));
  for (int t = 0; t < table.rows; ++t) {
    double z = 0;
    for (float v : table.row(t)) z += std::exp(static_cast<double>(v));
    EXPECT_NEAR(std::log(z), 0.0, 1e-6);
  }
}

TEST(Forward, MatchesReferenceImplementation) {
  ModelConfig cfg;
  cfg.context = 16;
  const auto p = PolicyParams::initialized(cfg, 21);
  const auto pd = p.cast<double>();
  std::mt19937_64 rng(21);
  const auto seq = preflearn::testing::random_tokens(rng, 12);
  const auto table = forward_logprobs(p, seq);
  const auto logits = preflearn::testing::reference_logits(pd, frame(seq));
  for (int t = 0; t < table.rows; ++t) {
    const auto ref = preflearn::testing::reference_log_softmax(logits[t]);
    for (int v = 0; v < Vocabulary::kSize; ++v)
      ASSERT_NEAR(table.at(t, v), ref[v], 1e-4 * std::abs(ref[v])) << "row " << t << " token " << v;
  }
}

TEST(Forward, PrefixRowsAreBitwiseStable) {
  const auto p = random_params<float>(tiny_config(), 9);
  const std::vector<TokenId> full{Vocabulary::kBos, 5, 6, 7, 8, 9};
  const auto a = forward(p, std::span<const TokenId>(full));
  const auto b = forward(p, std::span<const TokenId>(full).first(3));
  for (int r = 0; r < 3; ++r) {
    const auto ra = a.logits_row(r), rb = b.logits_row(r);
    ASSERT_TRUE(std::equal(ra.begin(), ra.end(), rb.begin()));
  }
}

TEST(Forward, TooLongThrows) {
  const auto p = random_params<float>(tiny_config(), 1);
  EXPECT_THROW(forward_logprobs(p, TokenSequence(12, 1)), LengthError);
  EXPECT_NO_THROW(forward_logprobs(p, TokenSequence(11, 1)));
}

TEST(Forward, InvalidTokenThrows) {
  const auto p = random_params<float>(tiny_config(), 1);
  EXPECT_THROW(forward_logprobs(p, {1, 300}), InvalidTokenError);
}

TEST(Params, InitializationStatistics) {
  ModelConfig cfg;
  const auto p = PolicyParams::initialized(cfg, 4);
  const auto w = p.tensor("block0.mlp.w_fc");
  double s = 0, s2 = 0;
  for (float v : w) s += v, s2 += static_cast<double>(v) * v;
  const double n = static_cast<double>(w.size());
  EXPECT_NEAR(s / n, 0.0, 0.002);
  EXPECT_NEAR(std::sqrt(s2 / n), 0.02, 0.001);
  for (float v : p.tensor("head.b")) EXPECT_EQ(v, 0.0f);
  for (float v : p.tensor("lnf.g")) EXPECT_EQ(v, 1.0f);
  EXPECT_TRUE(p.all_finite());
  EXPECT_EQ(PolicyParams(cfg).size(), p.size());
}

TEST(Sampling, SameSeedSameOutput) {
  const auto p = random_params<float>(tiny_config(), 2);
  const auto a = sample(p, {1, 2}, 1.0, 6, 99);
  const auto b = sample(p, {1, 2}, 1.0, 6, 99);
  EXPECT_EQ(a.continuation, b.continuation);
  EXPECT_EQ(a.rollout_logprobs, b.rollout_logprobs);
  EXPECT_EQ(a.truncated, b.truncated);
}

TEST(Sampling, GreedyPicksForcedEos) {
  auto p = random_params<float>(tiny_config(), 2);
  p.tensor("head.b")[Vocabulary::kEos] = 100.0f;
  const auto s = sample(p, {1, 2}, 0.0, 5, 0);
  EXPECT_EQ(s.continuation, TokenSequence{Vocabulary::kEos});
  EXPECT_FALSE(s.truncated);
}

TEST(Sampling, TruncatesWithoutEos) {
  auto p = random_params<float>(tiny_config(), 2);
  p.tensor("head.b")[Vocabulary::kEos] = -100.0f;
  const auto s = sample(p, {1}, 1.0, 3, 7);
  EXPECT_EQ(s.continuation.size(), 3u);
  EXPECT_TRUE(s.truncated);
}

TEST(Sampling, GreedyFollowsArgmaxOfLogprobs) {
  const auto p = random_params<float>(tiny_config(), 8, 1.0);
  const TokenSequence prompt{3, 4};
  const auto s = sample(p, prompt, 0.0, 6, 0);
  TokenSequence seq = prompt;
  for (std::size_t t = 0; t < s.continuation.size(); ++t) {
    const auto table = forward_logprobs(p, seq);
    EXPECT_EQ(static_cast<TokenId>(argmax_lowest(table.row(table.rows - 1))), s.continuation[t]);
    seq.push_back(s.continuation[t]);
  }
}

TEST(Sampling, ArgmaxTieBreaksLow) {
  const std::vector<float> v{1.0f, 3.0f, 3.0f, 2.0f};
  EXPECT_EQ(argmax_lowest(v), 1u);
}

TEST(Sampling, RolloutLogprobsMatchTeacherForcing) {
  const auto p = random_params<float>(tiny_config(), 12, 1.0);
  const TokenSequence prompt{7, 8, 9};
  const auto s = sample(p, prompt, 0.7, 6, 3);
  const auto pass = score_continuation(p, prompt, s.continuation);
  ASSERT_EQ(pass.token_logprobs.size(), s.rollout_logprobs.size());
  for (std::size_t t = 0; t < s.rollout_logprobs.size(); ++t) EXPECT_EQ(pass.token_logprobs[t], s.rollout_logprobs[t]);
}

TEST(Sampling, PreconditionErrors) {
  const auto p = random_params<float>(tiny_config(), 1);
  EXPECT_THROW(sample(p, {1, 2}, -1.0, 3, 0), ConfigError);
  EXPECT_THROW(sample(p, TokenSequence(8, 1), 1.0, 4, 0), LengthError);
}

TEST(GradCheck, Quadratic) {
  const auto g = finite_diff_gradient([](std::span<const double> x) { return x[0] * x[0]; }, std::vector<double>{3.0}, 1e-4);
  EXPECT_NEAR(g[0], 6.0, 1e-6);
}

TEST(GradCheck, ConstantHasZeroGradient) {
  const auto g = finite_diff_gradient([](std::span<const double>) { return 4.0; }, std::vector<double>{1, 2, 3}, 1e-4);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(GradCheck, Errors) {
  const std::vector<double> x{1.0};
  EXPECT_THROW(finite_diff_gradient([](std::span<const double> v) { return v[0]; }, x, 0.0), ConfigError);
  EXPECT_THROW(finite_diff_gradient([](std::span<const double> v) { return std::log(v[0] - 1.0); }, x, 1e-3),
               NumericalError);
}

TEST(GradCheck, RelativeErrorIsNormWise) {
  const std::vector<double> a{1.0, 1e-9}, n{1.0, 2e-9};
  EXPECT_LT(max_relative_error(a, n), 1e-8);
  EXPECT_EQ(max_relative_error(std::vector<double>{0.0}, std::vector<double>{0.0}), 0.0);
}

TEST(Sft, CrossEntropyGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (int inst = 0; inst < 3; ++inst) {
    const auto p = random_params<double>(tiny_config(), 100 + inst);
    const std::vector<Demonstration> demos{{preflearn::testing::random_tokens(rng, 3), preflearn::testing::random_tokens(rng, 3)},
                                           {preflearn::testing::random_tokens(rng, 2), preflearn::testing::random_tokens(rng, 4)}};
    std::vector<double> grad(p.size(), 0.0);
    sft_loss_and_grad(p, std::span<const Demonstration>(demos), std::span<double>(grad));
    const auto num = finite_diff_gradient(
        [&](const ModelParams<double>& q) { return sft_loss_and_grad(q, std::span<const Demonstration>(demos), std::span<double>()); },
        p, 1e-5);
    EXPECT_LT(max_relative_error(grad, num), 1e-4);
  }
}

TEST(Sft, UniformModelLoss) {
  const PolicyParams zero(tiny_config());
  const std::vector<Demonstration> demos{{{1, 2}, {3, 4, 5}}};
  const double loss = sft_loss_and_grad(zero, std::span<const Demonstration>(demos), std::span<float>());
  EXPECT_NEAR(loss, std::log(258.0), 1e-6);
}

TEST(Sft, OverfitsSingleDemonstration) {
  ModelConfig cfg;
  cfg.context = 16;
  auto train = TrainConfig::sft_defaults();
  train.batch_size = 1;
  train.epochs = 500;
  const std::vector<Demonstration> demos{{encode("hi"), encode("there")}};
  double last = 0;
  const auto p = train_sft(train, PolicyParams::initialized(cfg, 1), demos,
                           [&](const TrainStepInfo& s) { last = s.loss; });
  EXPECT_LT(last, 0.1);
  EXPECT_LT(sft_loss_and_grad(p, std::span<const Demonstration>(demos), std::span<float>()), 0.1);
}

TEST(Sft, DeterministicAndInputUntouched) {
  const auto init = random_params<float>(tiny_config(), 4, 0.1);
  const auto copy = init;
  std::vector<Demonstration> demos;
  for (int i = 0; i < 10; ++i) demos.push_back({{static_cast<TokenId>(48 + i)}, encode("ab")});
  auto cfg = TrainConfig::sft_defaults();
  cfg.batch_size = 3;
  cfg.epochs = 2;
  const auto a = train_sft(cfg, init, demos);
  const auto b = train_sft(cfg, init, demos);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(init == copy);
  EXPECT_FALSE(a == init);
  EXPECT_THROW(train_sft(cfg, init, {}), ConfigError);
}

TEST(Optimizer, AdamWFirstStepMovesByLearningRate) {
  AdamWConfig c;
  c.weight_decay = 0.1;
  AdamW opt(c, {2});
  std::vector<float> x{1.0f, -2.0f};
  const std::vector<float> g{0.5f, -3.0f};
  std::span<float> xs(x);
  std::span<const float> gs(g);
  opt.step(std::span<const std::span<float>>(&xs, 1), std::span<const std::span<const float>>(&gs, 1), 0.01);
  // bias-corrected first step: m_hat / sqrt(v_hat) = sign(g)
  EXPECT_NEAR(x[0], 1.0 - 0.01 * 0.1 * 1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1e-6);
  EXPECT_NEAR(x[1], -2.0 + 0.01 * 0.1 * 2.0 + 0.01, 1e-6);
}

TEST(Optimizer, Schedule) {
  const auto s = LrSchedule::make(1.0, 100, 0.1, true, 0.1);
  EXPECT_NEAR(s.at(0), 0.1, 1e-12);
  EXPECT_NEAR(s.at(9), 1.0, 1e-12);
  EXPECT_NEAR(s.at(99), 0.1 + 0.9 / 90.0, 1e-12);
  const auto flat = LrSchedule::make(2.0, 50, 0.1, false, 0.0);
  EXPECT_EQ(flat.at(30), 2.0);
}

TEST(Optimizer, ClipGradNorm) {
  std::vector<float> a{3.0f}, b{4.0f};
  const std::span<float> g[2] = {a, b};
  EXPECT_NEAR(clip_grad_norm(std::span<const std::span<float>>(g), 1.0), 5.0, 1e-6);
  EXPECT_NEAR(a[0], 0.6f, 1e-6);
  EXPECT_NEAR(b[0], 0.8f, 1e-6);
}

TEST(Checkpoint, RoundTrip) {
  const auto p = random_params<float>(tiny_config(), 6);
  const auto path = std::filesystem::temp_directory_path() / "preflearn_lm_test.ckpt";
  save_policy(path, p);
  const auto q = load_policy(path);
  EXPECT_TRUE(p == q);
  EXPECT_EQ(q.config(), p.config());
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsShapeMismatch) {
  auto ck = to_checkpoint(random_params<float>(tiny_config(), 6));
  ck.arrays[0].data.pop_back();
  EXPECT_THROW(policy_from_checkpoint(ck), Error);
}
