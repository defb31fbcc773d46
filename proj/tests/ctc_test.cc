#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "natkit/ctc.h"
#include "test_util.h"

namespace natkit {
namespace {

// Small alphabets: symbol 0 is the blank throughout.
constexpr TokenId kB = 0;

TEST(Collapse, Examples) {
  // thank=1, you=2
  EXPECT_EQ(Collapse(TokenSequence{kB, 1, 1, 2}, kB), (TokenSequence{1, 2}));
  EXPECT_EQ(Collapse(TokenSequence{1, kB, 2, kB}, kB), (TokenSequence{1, 2}));
  EXPECT_EQ(Collapse(TokenSequence{1, kB, 1}, kB), (TokenSequence{1, 1}));
  EXPECT_EQ(Collapse(TokenSequence{}, kB), TokenSequence{});
}

TEST(Collapse, NeverContainsBlankAndIsIdempotent) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    TokenSequence a = testing::RandomSequence(static_cast<int>(rng.UniformRange(0, 10)), 0, 3, rng);
    TokenSequence c = Collapse(a, kB);
    EXPECT_EQ(std::count(c.begin(), c.end(), kB), 0);
    EXPECT_EQ(c, testing::OracleCollapse(a, kB));
    // Re-encoding with separating blanks collapses back to the same string.
    TokenSequence padded;
    for (TokenId t : c) {
      padded.push_back(t);
      padded.push_back(kB);
    }
    EXPECT_EQ(Collapse(padded, kB), c);
  }
}

TEST(EnumerateAlignments, Examples) {
  // a=1, b=2
  auto a = EnumerateAlignments({1}, 2, 3, kB);
  std::sort(a.begin(), a.end());
  EXPECT_EQ(a, (std::vector<TokenSequence>{{0, 1}, {1, 0}, {1, 1}}));
  EXPECT_EQ(EnumerateAlignments({1, 2}, 2, 3, kB), (std::vector<TokenSequence>{{1, 2}}));
  EXPECT_TRUE(EnumerateAlignments({1, 1}, 2, 3, kB).empty());
  EXPECT_EQ(EnumerateAlignments({1, 1}, 3, 3, kB).size(), 1u);
  EXPECT_THROW(EnumerateAlignments({1}, 9, 2, kB), std::invalid_argument);
  EXPECT_THROW(EnumerateAlignments({1}, 8, 8, kB), std::invalid_argument);
}

TEST(EnumerateAlignments, MatchesFilteredEnumeration) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(1, 6));
    TokenSequence y = testing::RandomSequence(static_cast<int>(rng.UniformRange(0, 3)), 1, 2, rng);
    std::vector<TokenSequence> expected;
    testing::ForEachSequence(M, 3, [&](const TokenSequence& a) {
      if (testing::OracleCollapse(a, kB) == y) expected.push_back(a);
    });
    auto got = EnumerateAlignments(y, M, 3, kB);
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, expected);
  }
}

TEST(CtcLogProb, UniformClosedForm) {
  auto l = EmissionLattice::FromLogits(Matrix::Zero(2, 3));
  EXPECT_NEAR(std::exp(CtcLogProbGrad(l, {1}, kB).log_prob), 1.0 / 3, 1e-15);
}

TEST(CtcLogProb, MatchesBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(1, 6));
    const int W = static_cast<int>(rng.UniformRange(2, 4));
    auto l = testing::RandomLattice(M, W, rng);
    TokenSequence y = testing::RandomSequence(static_cast<int>(rng.UniformRange(0, M)), 1, W - 1, rng);
    if (MinAlignmentLength(y) > M) {
      EXPECT_THROW(CtcLogProbGrad(l, y, kB), InfeasibleLengthError);
      continue;
    }
    const double oracle = testing::OracleCtcProb(l, y, kB);
    EXPECT_NEAR(std::exp(CtcLogProbGrad(l, y, kB).log_prob), oracle, 1e-9);
  }
}

TEST(CtcLogProb, PartitionSumsToOne) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(1, 4));
    auto l = testing::RandomLattice(M, 3, rng);
    double total = 0.0;
    for (int len = 0; len <= M; ++len) {
      testing::ForEachSequence(len, 2, [&](const TokenSequence& body) {
        TokenSequence y;
        for (TokenId t : body) y.push_back(t + 1);
        if (MinAlignmentLength(y) <= M) total += std::exp(CtcLogProbGrad(l, y, kB).log_prob);
      });
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(CtcLogProb, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(3, 7));
    Matrix logits = testing::RandomLogits(M, 4, rng);
    TokenSequence y = testing::RandomSequence(static_cast<int>(rng.UniformRange(1, 3)), 1, 3, rng);
    if (MinAlignmentLength(y) > M) continue;
    auto f = [&](const Matrix& x) { return CtcLogProbGrad(EmissionLattice::FromLogits(x), y, kB).log_prob; };
    CtcResult r = CtcLogProbGrad(EmissionLattice::FromLogits(logits), y, kB);
    EXPECT_LT(testing::MaxRelError(r.grad, testing::NumericGrad(logits, f)), 1e-5);
  }
}

TEST(CtcLogProb, Errors) {
  auto l = EmissionLattice::FromLogits(Matrix::Zero(2, 3));
  EXPECT_THROW(CtcLogProbGrad(l, {1, 1}, kB), InfeasibleLengthError);
  EXPECT_THROW(CtcLogProbGrad(l, {0}, kB), std::invalid_argument);
  EXPECT_THROW(CtcLogProbGrad(l, {7}, kB), std::invalid_argument);
  EXPECT_EQ(MinAlignmentLength({1, 1, 2}), 4);
}

TEST(CtcDecode, OneHotGreedy) {
  Matrix lp = Matrix::Constant(3, 3, kNegInf);
  lp(0, 1) = lp(1, 0) = lp(2, 2) = 0.0;
  auto l = EmissionLattice::FromLogProbs(lp);
  EXPECT_EQ(CtcDecode(l, CtcStrategy::kGreedy, 1, kB).tokens, (TokenSequence{1, 2}));
  EXPECT_EQ(CtcDecode(l, CtcStrategy::kPrefixBeam, 5, kB).tokens, (TokenSequence{1, 2}));
  EXPECT_THROW(CtcDecode(l, CtcStrategy::kPrefixBeam, 0, kB), std::invalid_argument);
}

// argmax over collapsed strings of the summed alignment mass
std::pair<TokenSequence, double> ExhaustiveCollapsedArgmax(const EmissionLattice& l) {
  std::map<TokenSequence, double> mass;
  const Matrix p = l.probs();
  testing::ForEachSequence(static_cast<int>(l.positions()), static_cast<int>(l.width()), [&](const TokenSequence& a) {
    double prod = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) prod *= p(static_cast<Eigen::Index>(i), a[i]);
    mass[testing::OracleCollapse(a, kB)] += prod;
  });
  std::pair<TokenSequence, double> best{{}, -1.0};
  for (const auto& [y, m] : mass) {
    if (m > best.second) best = {y, m};
  }
  return best;
}

TEST(CtcDecode, WidePrefixBeamIsExact) {
  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(1, 6));
    auto l = testing::RandomLattice(M, 3, rng);
    auto [best, mass] = ExhaustiveCollapsedArgmax(l);
    CtcDecodeResult r = CtcDecode(l, CtcStrategy::kPrefixBeam, 729, kB);
    EXPECT_EQ(r.tokens, best) << "trial " << trial;
    EXPECT_NEAR(std::exp(r.log_prob), mass, 1e-9);
  }
}

TEST(CtcDecode, PrefixBeamBeatsGreedyOnAdversarialLattice) {
  // Oracle search for a lattice whose best path is "a a" (collapsing to
  // "a") while "a b" carries the most collapsed mass.
  Rng rng(17);
  bool found = false;
  for (int trial = 0; trial < 20000 && !found; ++trial) {
    auto l = testing::RandomLattice(3, 3, rng, 1.0);
    TokenSequence path;
    for (int m = 0; m < 3; ++m) path.push_back(static_cast<TokenId>(ArgMax(RowSpan(l.log_probs(), m))));
    if (path != TokenSequence{1, 1, 1} && path != TokenSequence{1, 1, kB}) continue;
    auto [best, mass] = ExhaustiveCollapsedArgmax(l);
    if (best != TokenSequence{1, 2}) continue;
    found = true;
    EXPECT_EQ(CtcDecode(l, CtcStrategy::kGreedy, 1, kB).tokens, (TokenSequence{1}));
    EXPECT_EQ(CtcDecode(l, CtcStrategy::kPrefixBeam, 5, kB).tokens, (TokenSequence{1, 2}));
  }
  EXPECT_TRUE(found);
}

TEST(CtcDecode, PrefixBeamFindsHigherMassThanGreedy) {
  // Search random lattices for one where greedy's collapsed output is not
  // the mass argmax; prefix beam must then return the argmax.
  Rng rng(7);
  int found = 0;
  for (int trial = 0; trial < 2000 && found < 5; ++trial) {
    auto l = testing::RandomLattice(3, 3, rng, 0.7);
    auto [best, mass] = ExhaustiveCollapsedArgmax(l);
    TokenSequence greedy = CtcDecode(l, CtcStrategy::kGreedy, 1, kB).tokens;
    if (greedy == best) continue;
    ++found;
    EXPECT_EQ(CtcDecode(l, CtcStrategy::kPrefixBeam, 27, kB).tokens, best);
  }
  EXPECT_GT(found, 0);
}

}  // namespace
}  // namespace natkit
