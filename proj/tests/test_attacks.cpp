#include <gtest/gtest.h>

#include "inkmark/attacks.hpp"
#include "inkmark/binary.hpp"
#include "inkmark/error.hpp"
#include "inkmark/redgreen.hpp"

using namespace inkmark;

namespace {

WatermarkKey key_for(Scheme s, std::uint64_t seed = 1) {
  return WatermarkKey::from_seed(seed, "atk", s, "2024-01-01T00:00:00Z");
}

// Records the context it is handed.
struct Recorder final : Sampler {
  std::vector<std::vector<TokenId>> contexts;
  TokenId next(const TokenDistribution& p, const GenerationContext& c) override {
    contexts.push_back(c.history());
    return static_cast<TokenId>(contexts.size() % p.size());
  }
};

}  // namespace

TEST(Attacks, SubstitutionReplacesTheRoundedCount) {
  std::vector<TokenId> text(101);
  for (std::size_t i = 0; i < text.size(); ++i) text[i] = 5000 + static_cast<TokenId>(i);
  Rng rng(1);
  const auto out = substitution_attack(text, 0.25, 10, rng);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (out[i] != text[i]) {
      ++changed;
      EXPECT_LT(out[i], 10U);
    }
  }
  EXPECT_EQ(changed, 25U);  // round(25.25)
  EXPECT_EQ(substitution_attack(text, 0.0, 10, rng), text);
  EXPECT_THROW(substitution_attack(text, 1.5, 10, rng), ParameterError);
}

TEST(Attacks, SubstitutionErodesTheRedGreenSignal) {
  const auto key = key_for(Scheme::RedGreen);
  const SyntheticModel model(0.001, 1000);
  RedGreenWatermarker wm(key, {0.5, 0.0, 1, RedGreenMode::Hard}, 1000);
  Rng rng(2);
  RedGreenSampler s(wm, rng);
  std::vector<TokenId> text{3};
  const auto gen = generate(model, text, s, 200);
  text.insert(text.end(), gen.begin(), gen.end());
  RedGreenDetector det(key, 0.5, 1, 1000);
  const double z0 = det.detect(text, 4).z_score;
  const double z1 = det.detect(substitution_attack(text, 0.3, 1000, rng), 4).z_score;
  const double z2 = det.detect(substitution_attack(text, 0.9, 1000, rng), 4).z_score;
  EXPECT_GT(z0, z1);
  EXPECT_GT(z1, z2);
  EXPECT_LT(z2, 4.0);
}

TEST(Attacks, EmojiContextsAndStripping) {
  const SyntheticModel model(0.5, 20, 0, PeakPlacement::Successor);
  Recorder rec;
  const std::vector<TokenId> prompt{4};
  const auto r = emoji_attack(model, 19, prompt, rec, 5);
  ASSERT_EQ(r.raw.size(), 10U);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r.raw[2 * i + 1], 19U);
    // The sampler sees the interleaved output so far.
    std::vector<TokenId> expect{4};
    expect.insert(expect.end(), r.raw.begin(), r.raw.begin() + static_cast<std::ptrdiff_t>(2 * i));
    EXPECT_EQ(rec.contexts[i], expect);
  }
  EXPECT_EQ(r.stripped, (std::vector<TokenId>{1, 2, 3, 4, 5}));
  EXPECT_THROW(emoji_attack(model, 20, prompt, rec, 5), ParameterError);
}

TEST(Attacks, EmojiAttackDefeatsRedGreenWithUnitContext) {
  const auto key = key_for(Scheme::RedGreen, 3);
  const std::size_t v = 1000;
  const SyntheticModel model(0.001, v);
  RedGreenWatermarker wm(key, {0.5, 0.0, 1, RedGreenMode::Hard}, v);
  Rng rng(4);
  RedGreenSampler s(wm, rng);
  const auto r = emoji_attack(model, 999, std::vector<TokenId>{1}, s, 200);
  RedGreenDetector det(key, 0.5, 1, v);
  EXPECT_TRUE(det.detect(r.raw, 4).verdict);
  EXPECT_FALSE(det.detect(r.stripped, 4).verdict);
}

TEST(Attacks, PrefixSpecificationUsesOneSessionPerToken) {
  const SyntheticModel model(0.5, 16, 0, PeakPlacement::Successor);
  std::vector<Recorder*> sessions;
  const SessionFactory factory = [&]() -> std::unique_ptr<Sampler> {
    auto r = std::make_unique<Recorder>();
    sessions.push_back(r.get());
    return r;
  };
  const std::vector<TokenId> prompt{7, 8};
  const auto r = prefix_specification_attack(model, factory, prompt, 6);
  EXPECT_EQ(r.prompts_issued, 6U);
  EXPECT_EQ(r.tokens.size(), 6U);
  EXPECT_EQ(sessions.size(), 6U);
}

TEST(Attacks, PrefixSpecificationNeverActivatesTheBinaryScheme) {
  const auto key = key_for(Scheme::Binary, 5);
  const SyntheticModel model(0.05, 256, 0, PeakPlacement::Successor);
  const BinaryCodec codec(256);
  std::uint64_t n = 0;
  const SessionFactory factory = [&]() -> std::unique_ptr<Sampler> {
    struct Owned final : Sampler {
      Rng rng;
      BinaryInjector inj;
      Owned(const WatermarkKey& k, const BinaryCodec& c, std::uint64_t seed) : rng(seed), inj(k, c, 16.0, rng) {}
      TokenId next(const TokenDistribution& p, const GenerationContext& c) override { return inj.next(p, c); }
    };
    return std::make_unique<Owned>(key, codec, derive_seed(9, n++));
  };
  const auto r = prefix_specification_attack(model, factory, std::vector<TokenId>{}, 80);
  const BinaryDetector det(key, codec);
  EXPECT_FALSE(det.detect_at_fpr(r.tokens, 1e-3).verdict);
  // The same request served whole is detected.
  Rng rng(10);
  const auto whole = inject_binary(model, {}, key, codec, 16.0, rng, 80);
  EXPECT_TRUE(det.detect_at_fpr(whole.tokens, 1e-3).verdict);
}
