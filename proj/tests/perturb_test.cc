#include <gtest/gtest.h>

#include <algorithm>

#include "natkit/perturb.h"
#include "test_util.h"

namespace natkit {
namespace {

std::vector<TokenSequence> Corpus(int sentences, int length, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenSequence> c;
  for (int i = 0; i < sentences; ++i) c.push_back(testing::RandomSequence(length, kNumReserved, kNumReserved + 50, rng));
  return c;
}

PerturbSpec Spec(PerturbMode mode, double p, int window = 0, std::uint64_t seed = 7) {
  PerturbSpec s;
  s.mode = mode;
  s.p = p;
  s.window = window;
  s.seed = seed;
  return s;
}

TEST(Perturb, Identities) {
  TokenSequence x{5, 6, 7, 8};
  for (auto mode : {PerturbMode::kDelete, PerturbMode::kReplaceUnk, PerturbMode::kSwap}) {
    EXPECT_EQ(Perturb(x, Spec(mode, 0.0, 3)), x);
  }
  EXPECT_TRUE(Perturb(x, Spec(PerturbMode::kDelete, 1.0)).empty());
  EXPECT_EQ(Perturb(x, Spec(PerturbMode::kReplaceUnk, 1.0)), TokenSequence(4, kUnkId));
}

TEST(Perturb, Errors) {
  EXPECT_THROW(Perturb({5}, Spec(PerturbMode::kSwap, 0.1, 0)), std::invalid_argument);
  EXPECT_THROW(Perturb({5}, Spec(PerturbMode::kDelete, 1.5)), std::invalid_argument);
  EXPECT_THROW(Perturb({5}, Spec(PerturbMode::kDelete, -0.1)), std::invalid_argument);
  EXPECT_THROW(ParsePerturbMode("shuffle"), std::invalid_argument);
  EXPECT_EQ(ParsePerturbMode("replace_unk"), PerturbMode::kReplaceUnk);
}

TEST(Perturb, RatesOverManyTokens) {
  auto corpus = Corpus(5000, 20, 1);  // 10^5 tokens
  long unk = 0, kept = 0, total = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto id = "s" + std::to_string(i);
    const auto r = Perturb(corpus[i], Spec(PerturbMode::kReplaceUnk, 0.1), id);
    ASSERT_EQ(r.size(), corpus[i].size());
    unk += std::count(r.begin(), r.end(), kUnkId);
    kept += static_cast<long>(Perturb(corpus[i], Spec(PerturbMode::kDelete, 0.1), id).size());
    total += static_cast<long>(corpus[i].size());
  }
  EXPECT_NEAR(double(unk) / total, 0.1, 0.005);
  EXPECT_NEAR(1.0 - double(kept) / total, 0.1, 0.005);
}

TEST(Perturb, SwapPreservesMultisetWithinWindow) {
  auto corpus = Corpus(2000, 15, 2);
  for (bool symmetric : {false, true}) {
    long moved = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      auto spec = Spec(PerturbMode::kSwap, 0.3, 3);
      spec.symmetric = symmetric;
      auto r = Perturb(corpus[i], spec, std::to_string(i));
      ASSERT_EQ(r.size(), corpus[i].size());
      auto a = corpus[i], b = r;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      EXPECT_EQ(a, b);
      moved += r != corpus[i];
    }
    EXPECT_GT(moved, 0);
  }
  // One swap at p = 1 on a two-token sequence exchanges them, then the
  // second position has no right partner.
  EXPECT_EQ(Perturb({5, 6}, Spec(PerturbMode::kSwap, 1.0, 3)), (TokenSequence{6, 5}));
}

TEST(Perturb, DeterministicPerStream) {
  auto corpus = Corpus(100, 12, 3);
  for (auto mode : {PerturbMode::kDelete, PerturbMode::kReplaceUnk, PerturbMode::kSwap}) {
    std::vector<TokenSequence> forward, backward(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) forward.push_back(Perturb(corpus[i], Spec(mode, 0.2, 3), std::to_string(i)));
    for (std::size_t i = corpus.size(); i-- > 0;) backward[i] = Perturb(corpus[i], Spec(mode, 0.2, 3), std::to_string(i));
    EXPECT_EQ(forward, backward);
    bool differs = false;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      differs |= Perturb(corpus[i], Spec(mode, 0.2, 3, 8), std::to_string(i)) != forward[i];
    EXPECT_TRUE(differs);
  }
}

TEST(Perturb, SpecJsonRecordsSettings) {
  auto j = Spec(PerturbMode::kSwap, 0.1, 3).ToJson();
  EXPECT_NE(j.find("\"mode\":\"swap\""), std::string::npos);
  EXPECT_NE(j.find("\"window\":3"), std::string::npos);
}

}  // namespace
}  // namespace natkit
