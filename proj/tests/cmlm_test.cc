#include <gtest/gtest.h>

#include <cmath>

#include "natkit/cmlm.h"
#include "test_util.h"

namespace natkit {
namespace {

constexpr int kWidth = 8;  // reserved ids plus content 5, 6, 7

// Lattice rows with the given argmax token and its probability.
EmissionLattice Peaked(const std::vector<std::pair<TokenId, double>>& rows) {
  Matrix lp(static_cast<Eigen::Index>(rows.size()), kWidth);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double rest = (1.0 - rows[i].second) / (kWidth - 1);
    lp.row(static_cast<Eigen::Index>(i)).setConstant(std::log(rest));
    lp(static_cast<Eigen::Index>(i), rows[i].first) = std::log(rows[i].second);
  }
  return EmissionLattice::FromLogProbs(lp);
}

// Ignores the observation entirely.
class FixedScorer : public ConditionalLatticeScorer {
 public:
  explicit FixedScorer(EmissionLattice l) : l_(std::move(l)) {}
  EmissionLattice Score(const TokenSequence&, const TokenSequence&) const override { return l_; }

 private:
  EmissionLattice l_;
};

// Fully masked: [5 (.9), 6 (.4), 5 (.8)]; with positions 0 and 2 observed,
// position 1 becomes 7.
class CorrectingScorer : public ConditionalLatticeScorer {
 public:
  EmissionLattice Score(const TokenSequence&, const TokenSequence& observed) const override {
    ++calls;
    if (observed[1] == kMaskId && observed[0] != kMaskId && observed[2] != kMaskId) {
      return Peaked({{5, 0.9}, {7, 0.9}, {5, 0.8}});
    }
    return Peaked({{5, 0.9}, {6, 0.4}, {5, 0.8}});
  }
  mutable int calls = 0;
};

TEST(SampleMask, SizeStatistics) {
  Rng rng(1);
  const int n = 20000;
  double frac = 0.0;
  for (int i = 0; i < n; ++i) {
    MaskSet m = SampleMask(4, rng);
    ASSERT_GE(m.size(), 1u);
    ASSERT_LE(m.size(), 4u);
    for (std::size_t j = 1; j < m.size(); ++j) ASSERT_LT(m[j - 1], m[j]);
    frac += m.size() / 4.0;
  }
  EXPECT_NEAR(frac / n, 0.625, 0.02);
  EXPECT_THROW(SampleMask(0, rng), std::invalid_argument);
}

TEST(SampleMask, Deterministic) {
  Rng a(5), b(5);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(SampleMask(7, a), SampleMask(7, b));
}

TEST(CmlmLoss, ExamplesAndZeroRows) {
  auto uniform = EmissionLattice::FromLogits(Matrix::Zero(3, kWidth));
  LossGrad lg = CmlmLossGrad(uniform, {5, 6, 7}, {0, 2});
  EXPECT_NEAR(lg.loss, 2 * std::log(double(kWidth)), 1e-12);
  EXPECT_TRUE(lg.grad.row(1).isZero(0.0));
  EXPECT_FALSE(lg.grad.row(0).isZero(0.0));

  auto peaked = Peaked({{5, 1.0}, {6, 1.0}, {7, 1.0}});
  EXPECT_NEAR(CmlmLossGrad(peaked, {5, 6, 7}, {0, 1, 2}).loss, 0.0, 1e-12);
  EXPECT_THROW(CmlmLossGrad(uniform, {5, 6, 7}, {}), std::invalid_argument);
  EXPECT_THROW(CmlmLossGrad(uniform, {5, 6, 7}, {2, 1}), std::invalid_argument);
  EXPECT_THROW(CmlmLossGrad(uniform, {5, 6, 7}, {3}), std::invalid_argument);
}

TEST(CmlmLoss, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix logits = testing::RandomLogits(5, kWidth, rng);
    TokenSequence y = testing::RandomSequence(5, 5, 7, rng);
    MaskSet m = SampleMask(5, rng);
    auto f = [&](const Matrix& x) { return CmlmLossGrad(EmissionLattice::FromLogits(x), y, m).loss; };
    LossGrad lg = CmlmLossGrad(EmissionLattice::FromLogits(logits), y, m);
    EXPECT_LT(testing::MaxRelError(lg.grad, testing::NumericGrad(logits, f)), 1e-6);
  }
}

TEST(ApplyMask, ReplacesOnlyMaskedSlots) {
  EXPECT_EQ(ApplyMask({5, 6, 7}, {1}), (TokenSequence{5, kMaskId, 7}));
}

TEST(MaskPredict, OneIterationEqualsArgmax) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = static_cast<int>(rng.UniformRange(1, 8));
    auto l = testing::RandomLattice(T, kWidth, rng);
    FixedScorer s(l);
    EXPECT_EQ(MaskPredictDecode(s, {}, T, 1).tokens, NatArgmaxDecode(l));
  }
}

TEST(MaskPredict, ObservationFreeScorerIsFixedPoint) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int T = static_cast<int>(rng.UniformRange(1, 8));
    auto l = testing::RandomLattice(T, kWidth, rng);
    FixedScorer s(l);
    EXPECT_EQ(MaskPredictDecode(s, {}, T, 10).tokens, NatArgmaxDecode(l));
  }
}

TEST(MaskPredict, SecondIterationCorrectsLeastConfident) {
  CorrectingScorer s;
  MaskPredictResult r = MaskPredictDecode(s, {}, 3, 2);
  EXPECT_EQ(r.tokens, (TokenSequence{5, 7, 5}));
  EXPECT_EQ(r.remask_counts, (std::vector<int>{1, 0}));
  EXPECT_EQ(s.calls, 2);
  EXPECT_EQ(MaskPredictDecode(s, {}, 3, 1).tokens, (TokenSequence{5, 6, 5}));
}

TEST(MaskPredict, RemaskScheduleShrinksToZero) {
  Rng rng(6);
  for (int T : {1, 3, 7, 12}) {
    for (int K : {1, 2, 5, 10}) {
      Matrix logits = testing::RandomLogits(T, kWidth, rng);
      logits.col(kMaskId).setConstant(-50.0);
      FixedScorer s(EmissionLattice::FromLogits(logits));
      MaskPredictResult r = MaskPredictDecode(s, {}, T, K);
      ASSERT_EQ(r.remask_counts.size(), static_cast<std::size_t>(K));
      for (int t = 1; t <= K; ++t) EXPECT_EQ(r.remask_counts[t - 1], T * (K - t) / K);
      for (std::size_t i = 1; i < r.remask_counts.size(); ++i) EXPECT_LE(r.remask_counts[i], r.remask_counts[i - 1]);
      EXPECT_EQ(r.remask_counts.back(), 0);
      EXPECT_EQ(std::count(r.tokens.begin(), r.tokens.end(), kMaskId), 0);
    }
  }
  FixedScorer s(testing::RandomLattice(2, kWidth, rng));
  EXPECT_THROW(MaskPredictDecode(s, {}, 2, 0), std::invalid_argument);
  EXPECT_THROW(MaskPredictDecode(s, {}, 3, 1), std::runtime_error);
}

}  // namespace
}  // namespace natkit
