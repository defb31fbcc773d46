#include <gtest/gtest.h>

#include <cmath>

#include "natkit/dat.h"
#include "test_util.h"

namespace natkit {
namespace {

// Vocab for these tests: 0 = BOS, 1 = EOS, content from 2.
constexpr TokenId kBos = 0, kEos = 1;

TransitionMatrix RandomTransition(int M, Rng& rng, double scale = 1.5) {
  return TransitionMatrix::FromLogits(testing::RandomLogits(M, M, rng, scale));
}

double OraclePathSum(const EmissionLattice& em, const TransitionMatrix& e, const TokenSequence& y) {
  TokenSequence aug{kBos};
  aug.insert(aug.end(), y.begin(), y.end());
  aug.push_back(kEos);
  double total = 0.0;
  testing::ForEachPath(static_cast<int>(em.positions()), static_cast<int>(aug.size()), [&](const std::vector<int>& a) {
    double p = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      p *= std::exp(em.at(a[i], aug[i]));
      if (i + 1 < a.size()) p *= std::exp(e.at(a[i], a[i + 1]));
    }
    total += p;
  });
  return total;
}

TEST(Transition, SupportAndNormalization) {
  Rng rng(1);
  auto e2 = RandomTransition(2, rng);
  EXPECT_EQ(e2.at(0, 1), 0.0);
  auto e = RandomTransition(4, rng);
  for (int i = 0; i < 4; ++i) {
    double row = 0.0;
    for (int j = 0; j < 4; ++j) {
      if (j <= i) EXPECT_EQ(e.at(i, j), kNegInf);
      row += std::exp(e.at(i, j));
    }
    if (i < 3) EXPECT_NEAR(row, 1.0, 1e-9);
    else EXPECT_EQ(row, 0.0);
  }
  Matrix bad = e.log_probs();
  bad(2, 1) = -1.0;
  EXPECT_THROW(TransitionMatrix::FromLogProbs(bad), std::invalid_argument);
}

TEST(Transition, JsonRoundTrip) {
  Rng rng(2);
  auto e = RandomTransition(5, rng);
  auto back = TransitionMatrix::FromJson(e.ToJson());
  EXPECT_EQ(back.log_probs(), e.log_probs());
  EXPECT_NE(e.ToJson().find("null"), std::string::npos);
}

TEST(Transition, StarReducesToPlain) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(2, 9)), d = static_cast<int>(rng.UniformRange(1, 6));
    Matrix H = testing::RandomLogits(M, d, rng).cwiseAbs();
    DatParams p{testing::RandomLogits(d, d, rng).cwiseAbs(), testing::RandomLogits(d, d, rng).cwiseAbs(),
                Matrix::Identity(d, d), Matrix::Identity(d, d)};
    auto plain = BuildTransition(H, p, TransitionVariant::kPlain);
    auto star = BuildTransition(H, p, TransitionVariant::kStar);
    EXPECT_TRUE(plain.log_probs() == star.log_probs());
  }
}

TEST(Transition, ShapeErrors) {
  DatParams p{Matrix::Identity(3, 3), Matrix::Identity(2, 2), std::nullopt, std::nullopt};
  EXPECT_THROW(BuildTransition(Matrix::Zero(4, 3), p, TransitionVariant::kPlain), std::invalid_argument);
  DatParams q{Matrix::Identity(3, 3), Matrix::Identity(3, 3), Matrix::Identity(3, 3), std::nullopt};
  EXPECT_THROW(q.Check(), std::invalid_argument);
  DatParams r{Matrix::Identity(3, 3), Matrix::Identity(3, 3), std::nullopt, std::nullopt};
  EXPECT_THROW(BuildTransition(Matrix::Zero(4, 3), r, TransitionVariant::kStar), std::invalid_argument);
}

TEST(Transition, BackwardMatchesFiniteDifferences) {
  Rng rng(4);
  for (auto variant : {TransitionVariant::kPlain, TransitionVariant::kStar}) {
    for (int trial = 0; trial < 5; ++trial) {
      const int M = 5, d = 3;
      Matrix H = testing::RandomLogits(M, d, rng);
      DatParams p{testing::RandomLogits(d, d, rng), testing::RandomLogits(d, d, rng), testing::RandomLogits(d, d, rng),
                  testing::RandomLogits(d, d, rng)};
      Matrix W = testing::RandomLogits(M, M, rng);
      auto objective = [&](const Matrix& h, const DatParams& q) {
        auto e = BuildTransition(h, q, variant);
        double s = 0.0;
        for (int i = 0; i < M; ++i)
          for (int j = i + 1; j < M; ++j) s += W(i, j) * e.at(i, j);
        return s;
      };
      TransitionCache cache;
      auto e = BuildTransition(H, p, variant, &cache);
      Matrix g_log_e = Matrix::Zero(M, M);
      for (int i = 0; i < M; ++i)
        for (int j = i + 1; j < M; ++j) g_log_e(i, j) = W(i, j);
      TransitionGrads g = TransitionBackward(H, p, cache, TransitionLogitGrad(e, g_log_e));

      EXPECT_LT(testing::MaxRelError(g.states, testing::NumericGrad(H, [&](const Matrix& x) { return objective(x, p); })),
                1e-5);
      EXPECT_LT(testing::MaxRelError(g.w_q, testing::NumericGrad(p.w_q, [&](const Matrix& x) {
                  DatParams q = p;
                  q.w_q = x;
                  return objective(H, q);
                })),
                1e-5);
      EXPECT_LT(testing::MaxRelError(g.w_k, testing::NumericGrad(p.w_k, [&](const Matrix& x) {
                  DatParams q = p;
                  q.w_k = x;
                  return objective(H, q);
                })),
                1e-5);
      if (variant == TransitionVariant::kStar) {
        EXPECT_LT(testing::MaxRelError(g.w_q_star, testing::NumericGrad(*p.w_q_star, [&](const Matrix& x) {
                    DatParams q = p;
                    q.w_q_star = x;
                    return objective(H, q);
                  })),
                  1e-5);
        EXPECT_LT(testing::MaxRelError(g.w_k_star, testing::NumericGrad(*p.w_k_star, [&](const Matrix& x) {
                    DatParams q = p;
                    q.w_k_star = x;
                    return objective(H, q);
                  })),
                  1e-5);
      }
    }
  }
}

TEST(EnumeratePaths, Examples) {
  EXPECT_EQ(EnumeratePaths(3, 3), (std::vector<Path>{{0, 1, 2}}));
  EXPECT_EQ(EnumeratePaths(4, 3), (std::vector<Path>{{0, 1, 3}, {0, 2, 3}}));
  EXPECT_EQ(EnumeratePaths(10, 5).size(), 56u);
  EXPECT_EQ(EnumeratePaths(2, 2), (std::vector<Path>{{0, 1}}));
  EXPECT_TRUE(EnumeratePaths(3, 4).empty());
  EXPECT_THROW(EnumeratePaths(60, 10), std::invalid_argument);
  for (int M = 2; M <= 10; ++M) {
    for (int L = 2; L <= M; ++L) {
      std::size_t count = 0;
      testing::ForEachPath(M, L, [&](const std::vector<int>&) { ++count; });
      EXPECT_EQ(EnumeratePaths(M, L).size(), count);
      EXPECT_EQ(static_cast<double>(count), testing::Binomial(M - 2, L - 2));
    }
  }
}

TEST(DatLogProb, SinglePath) {
  Rng rng(5);
  auto em = testing::RandomLattice(3, 4, rng);
  auto e = RandomTransition(3, rng);
  const double expected = em.at(0, kBos) + e.at(0, 1) + em.at(1, 3) + e.at(1, 2) + em.at(2, kEos);
  EXPECT_NEAR(DatLogProbGrad(em, e, {3}, kBos, kEos).log_prob, expected, 1e-12);
  EXPECT_NEAR(DatPathLogProb(em, e, {kBos, 3, kEos}, {0, 1, 2}), expected, 1e-12);
}

TEST(DatLogProb, MatchesBruteForce) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(2, 10));
    const int T = static_cast<int>(rng.UniformRange(0, 4));
    auto em = testing::RandomLattice(M, 4, rng);
    auto e = RandomTransition(M, rng);
    TokenSequence y = testing::RandomSequence(T, 2, 3, rng);
    if (M < T + 2) {
      EXPECT_THROW(DatLogProbGrad(em, e, y, kBos, kEos), InfeasibleLengthError);
      continue;
    }
    EXPECT_NEAR(std::exp(DatLogProbGrad(em, e, y, kBos, kEos).log_prob), OraclePathSum(em, e, y), 1e-9);
  }
}

TEST(DatLogProb, TotalMassOverTargets) {
  // Summing over every target (all token choices at every vertex of every
  // path) gives the total path mass into the last vertex, which is 1 here
  // because every path ends at M-1 and rows are normalized... up to the
  // emission of BOS/EOS at the endpoints.
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(2, 5));
    const int W = 3;
    auto em = testing::RandomLattice(M, W, rng);
    auto e = RandomTransition(M, rng);
    double total = 0.0;
    for (int T = 0; T <= M - 2; ++T) {
      // Targets over the full alphabet, including BOS/EOS ids in the interior.
      testing::ForEachSequence(T, W, [&](const TokenSequence& y) {
        total += std::exp(DatLogProbGrad(em, e, y, kBos, kEos).log_prob);
      });
    }
    const double endpoint = std::exp(em.at(0, kBos) + em.at(M - 1, kEos));
    EXPECT_NEAR(total, endpoint, 1e-9);
    EXPECT_LE(total, 1.0 + 1e-12);
  }
}

TEST(DatLogProb, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(3, 8));
    const int T = static_cast<int>(rng.UniformRange(1, M - 2));
    Matrix el = testing::RandomLogits(M, 5, rng);
    Matrix tl = testing::RandomLogits(M, M, rng);
    TokenSequence y = testing::RandomSequence(T, 2, 4, rng);
    DatResult r = DatLogProbGrad(EmissionLattice::FromLogits(el), TransitionMatrix::FromLogits(tl), y, kBos, kEos);
    auto fe = [&](const Matrix& x) {
      return DatLogProbGrad(EmissionLattice::FromLogits(x), TransitionMatrix::FromLogits(tl), y, kBos, kEos).log_prob;
    };
    auto ft = [&](const Matrix& x) {
      return DatLogProbGrad(EmissionLattice::FromLogits(el), TransitionMatrix::FromLogits(x), y, kBos, kEos).log_prob;
    };
    EXPECT_LT(testing::MaxRelError(r.grad_emission, testing::NumericGrad(el, fe)), 1e-5);
    EXPECT_LT(testing::MaxRelError(r.grad_transition, testing::NumericGrad(tl, ft)), 1e-5);
  }
}

void ExpectValidPath(const Path& p, int M) {
  ASSERT_GE(p.size(), 2u);
  EXPECT_EQ(p.front(), 0);
  EXPECT_EQ(p.back(), M - 1);
  for (std::size_t i = 1; i < p.size(); ++i) EXPECT_LT(p[i - 1], p[i]);
}

TEST(DatDecode, TwoVerticesAllAgree) {
  Rng rng(9);
  auto em = testing::RandomLattice(2, 4, rng);
  auto e = RandomTransition(2, rng);
  for (auto s : {DatStrategy::kGreedy, DatStrategy::kLookahead, DatStrategy::kViterbi, DatStrategy::kBeam}) {
    DatDecodeOptions o;
    o.strategy = s;
    auto r = DatDecode(em, e, o);
    EXPECT_EQ(r.path, (Path{0, 1}));
    EXPECT_TRUE(r.tokens.empty());
  }
}

// Best joint score over every path, by enumeration.
double ExhaustiveBestJoint(const EmissionLattice& em, const TransitionMatrix& e, Path* best_path) {
  const int M = static_cast<int>(em.positions());
  double best = kNegInf;
  for (int L = 2; L <= M; ++L) {
    testing::ForEachPath(M, L, [&](const std::vector<int>& p) {
      double s = DatJointScore(em, e, p);
      if (s > best) {
        best = s;
        if (best_path) *best_path = p;
      }
    });
  }
  return best;
}

TEST(DatDecode, ViterbiAndWideBeamAreExact) {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(2, 6));
    auto em = testing::RandomLattice(M, 4, rng);
    auto e = RandomTransition(M, rng);
    Path best_path;
    const double best = ExhaustiveBestJoint(em, e, &best_path);
    DatDecodeOptions o;
    o.strategy = DatStrategy::kViterbi;
    auto v = DatDecode(em, e, o);
    ExpectValidPath(v.path, M);
    EXPECT_NEAR(v.score, best, 1e-12);
    EXPECT_EQ(v.path, best_path);
    o.strategy = DatStrategy::kBeam;
    o.beam_size = 4096;
    auto b = DatDecode(em, e, o);
    EXPECT_EQ(b.path, v.path);
    EXPECT_EQ(b.tokens, v.tokens);
    EXPECT_NEAR(b.score, v.score, 1e-12);
  }
}

TEST(DatDecode, ViterbiDominatesGreedy) {
  Rng rng(11);
  int strict = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(2, 12));
    auto em = testing::RandomLattice(M, 5, rng);
    auto e = RandomTransition(M, rng);
    DatDecodeOptions o;
    o.strategy = DatStrategy::kGreedy;
    auto g = DatDecode(em, e, o);
    o.strategy = DatStrategy::kLookahead;
    auto l = DatDecode(em, e, o);
    o.strategy = DatStrategy::kViterbi;
    auto v = DatDecode(em, e, o);
    ExpectValidPath(g.path, M);
    ExpectValidPath(l.path, M);
    EXPECT_GE(v.score, g.score);
    EXPECT_GE(v.score, l.score);
    if (v.score > g.score) ++strict;
  }
  EXPECT_GT(strict, 0);
}

TEST(DatDecode, GreedyTakesArgmaxJumps) {
  // Vertex 0 prefers jumping to 1, whose emissions are flat; 2 is peaked.
  Matrix tl = Matrix::Zero(4, 4);
  tl(0, 1) = 2.0;
  auto e = TransitionMatrix::FromLogits(tl);
  Matrix el = Matrix::Zero(4, 4);
  el(2, 3) = 6.0;
  auto em = EmissionLattice::FromLogits(el);
  DatDecodeOptions o;
  o.strategy = DatStrategy::kGreedy;
  auto g = DatDecode(em, e, o);
  EXPECT_EQ(g.path[1], 1);
  o.strategy = DatStrategy::kViterbi;
  auto v = DatDecode(em, e, o);
  EXPECT_GT(v.score, g.score);
}

TEST(DatDecode, MaxLenBoundsOutput) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto em = testing::RandomLattice(10, 4, rng);
    auto e = RandomTransition(10, rng);
    for (auto s : {DatStrategy::kGreedy, DatStrategy::kLookahead, DatStrategy::kViterbi, DatStrategy::kBeam}) {
      DatDecodeOptions o;
      o.strategy = s;
      o.max_len = 2;
      auto r = DatDecode(em, e, o);
      ExpectValidPath(r.path, 10);
      EXPECT_LE(r.tokens.size(), 2u);
    }
  }
  auto em = testing::RandomLattice(3, 4, rng);
  auto e = RandomTransition(3, rng);
  DatDecodeOptions o;
  o.strategy = DatStrategy::kBeam;
  o.beam_size = 0;
  EXPECT_THROW(DatDecode(em, e, o), std::invalid_argument);
  o.max_len = 0;
  EXPECT_THROW(DatDecode(em, e, o), std::invalid_argument);
}

TEST(DatDecode, LayeredViterbiMatchesBoundedEnumeration) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int M = static_cast<int>(rng.UniformRange(3, 7));
    auto em = testing::RandomLattice(M, 3, rng);
    auto e = RandomTransition(M, rng);
    const int max_len = static_cast<int>(rng.UniformRange(1, M - 2));
    const double penalty = rng.Uniform() - 0.5;
    double best = kNegInf;
    for (int L = 2; L <= max_len + 2; ++L) {
      testing::ForEachPath(M, L, [&](const std::vector<int>& p) {
        best = std::max(best, DatJointScore(em, e, p) + penalty * (L - 2));
      });
    }
    DatDecodeOptions o;
    o.strategy = DatStrategy::kViterbi;
    o.max_len = max_len;
    o.length_penalty = penalty;
    auto r = DatDecode(em, e, o);
    EXPECT_NEAR(r.score + penalty * static_cast<double>(r.tokens.size()), best, 1e-12);
  }
}

}  // namespace
}  // namespace natkit
