#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "natkit/core.h"
#include "natkit/corpus.h"
#include "natkit/random.h"
#include "test_util.h"

namespace natkit {
namespace {

TEST(LogSumExp, Examples) {
  const double a[] = {std::log(0.5)};
  EXPECT_DOUBLE_EQ(LogSumExp(a), std::log(0.5));
  const double b[] = {0.0, 0.0};
  EXPECT_NEAR(LogSumExp(b), std::log(2.0), 1e-15);
  const double c[] = {std::log(0.1), std::log(0.2), std::log(0.7)};
  EXPECT_NEAR(LogSumExp(c), 0.0, 1e-12);
  EXPECT_EQ(LogSumExp(std::span<const double>{}), kNegInf);
}

TEST(LogSumExp, AllNegInfStaysNegInf) {
  const double v[] = {kNegInf, kNegInf};
  EXPECT_EQ(LogSumExp(v), kNegInf);
  EXPECT_EQ(LogAdd(kNegInf, kNegInf), kNegInf);
  EXPECT_DOUBLE_EQ(LogAdd(kNegInf, -3.0), -3.0);
}

TEST(LogSumExp, ShiftAndPermutationProperties) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng.UniformInt(8));
    for (double& x : v) x = 20.0 * rng.Normal();
    const double base = LogSumExp(v);
    const double c = 50.0 * rng.Normal();
    std::vector<double> shifted = v;
    for (double& x : shifted) x += c;
    EXPECT_NEAR(LogSumExp(shifted), base + c, 1e-9 * (1 + std::abs(base + c)));
    std::reverse(v.begin(), v.end());
    EXPECT_NEAR(LogSumExp(v), base, 1e-12 * (1 + std::abs(base)));
  }
}

TEST(LogSumExp, NoOverflowAtRangeEdges) {
  const double hi[] = {709.0, 709.0, 709.0};
  EXPECT_NEAR(LogSumExp(hi), 709.0 + std::log(3.0), 1e-9);
  const double lo[] = {-745.0, -745.0};
  EXPECT_NEAR(LogSumExp(lo), -745.0 + std::log(2.0), 1e-9);
  EXPECT_TRUE(std::isfinite(LogSumExp(hi)));
}

TEST(Vocabulary, ReservedAndLookup) {
  Vocabulary v = Vocabulary::WithReserved({"a", "b"});
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.Surface(kBosId), "<s>");
  EXPECT_EQ(v.Surface(kBlankId), "<blank>");
  EXPECT_EQ(v.Id("a"), 5);
  EXPECT_EQ(v.Id("zzz"), kUnkId);
  EXPECT_FALSE(v.Find("zzz").has_value());
  EXPECT_EQ(v.Decode(v.Encode({"b", "a"})), (std::vector<std::string>{"b", "a"}));
  EXPECT_THROW(v.CheckIds(TokenSequence{7}, "test"), std::invalid_argument);
}

TEST(Vocabulary, RejectsDuplicatesAndMissingReserved) {
  EXPECT_THROW(Vocabulary::WithReserved({"a", "a"}), std::invalid_argument);
  EXPECT_THROW(Vocabulary(std::vector<std::string>{"<s>", "</s>", "<unk>"}), std::invalid_argument);
}

TEST(Lattice, FromLogitsIsNormalized) {
  Rng rng(3);
  Matrix logits = testing::RandomLogits(5, 7, rng, 30.0);
  EmissionLattice l = EmissionLattice::FromLogits(logits);
  EXPECT_TRUE(ValidateLattice(l.log_probs()).empty());
  for (Eigen::Index r = 0; r < l.positions(); ++r) EXPECT_NEAR(l.probs().row(r).sum(), 1.0, 1e-12);
}

TEST(Lattice, ValidateReportsIssues) {
  Matrix zeros = Matrix::Zero(2, 3);
  auto issues = ValidateLattice(zeros);
  ASSERT_EQ(issues.size(), 2u);
  EXPECT_EQ(issues[0].kind, LatticeIssue::Kind::kRowNotNormalized);
  EXPECT_NEAR(issues[0].deviation, std::log(3.0), 1e-12);

  Matrix uniform = Matrix::Constant(2, 5, -std::log(5.0));
  auto width = ValidateLattice(uniform, 4);
  ASSERT_EQ(width.size(), 1u);
  EXPECT_EQ(width[0].kind, LatticeIssue::Kind::kWidthMismatch);

  EXPECT_EQ(ValidateLattice(Matrix(0, 3)).front().kind, LatticeIssue::Kind::kEmpty);
  EXPECT_THROW(EmissionLattice::FromLogProbs(zeros), std::invalid_argument);
}

TEST(Lattice, SoftmaxBackwardMatchesFiniteDifferences) {
  Rng rng(5);
  Matrix logits = testing::RandomLogits(3, 4, rng);
  Matrix w = testing::RandomLogits(3, 4, rng);
  auto f = [&](const Matrix& x) { return (LogSoftmaxRows(x).array() * w.array()).sum(); };
  Matrix analytic = LogSoftmaxBackward(LogSoftmaxRows(logits), w);
  EXPECT_LT(testing::MaxRelError(analytic, testing::NumericGrad(logits, f)), 1e-6);
}

TEST(ArgMax, TiesGoToLowestIndex) {
  const double v[] = {0.1, 0.5, 0.5, 0.2};
  EXPECT_EQ(ArgMax(v), 1);
}

TEST(Rng, FrozenStreams) {
  // Reference values from the published SplitMix64 and FNV-1a definitions.
  std::uint64_t state = 0;
  EXPECT_EQ(SplitMix64(state), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(Fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(Fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.Next(), b.Next());
  Rng s1 = Rng::ForStream(7, "sent-1"), s2 = Rng::ForStream(7, "sent-2");
  EXPECT_NE(s1.Next(), s2.Next());
}

TEST(Rng, UniformIntIsUnbiased) {
  Rng rng(9);
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[rng.UniformInt(6)];
  for (int c : counts) EXPECT_NEAR(c / double(n), 1.0 / 6, 0.01);
  for (int i = 0; i < 1000; ++i) {
    const auto x = rng.UniformRange(-2, 2);
    EXPECT_GE(x, -2);
    EXPECT_LE(x, 2);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(13);
  double sum = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.Normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Corpus, RoundTrip) {
  Vocabulary v = Vocabulary::WithReserved({"a", "b", "c"});
  std::istringstream in(
      "{\"id\": \"s1\", \"src\": [\"a\", \"b\"], \"ref\": [\"c\"]}\n"
      "\n"
      "{\"id\": \"s2\", \"src\": [\"c\"], \"hyp\": [\"a\", \"a\"], \"ref\": null}\n");
  Corpus c = ReadCorpus(in, v);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].source, (TokenSequence{5, 6}));
  EXPECT_FALSE(c[0].hypothesis.has_value());
  EXPECT_EQ(*c[1].hypothesis, (TokenSequence{5, 5}));
  EXPECT_FALSE(c[1].reference.has_value());
  std::ostringstream out;
  WriteCorpus(out, c, v);
  std::istringstream again(out.str());
  Corpus c2 = ReadCorpus(again, v);
  EXPECT_EQ(c2[0].source, c[0].source);
  EXPECT_EQ(*c2[1].hypothesis, *c[1].hypothesis);
}

TEST(Corpus, Errors) {
  Vocabulary v = Vocabulary::WithReserved({"a"});
  std::istringstream dup("{\"id\": \"x\", \"src\": [\"a\"]}\n{\"id\": \"x\", \"src\": [\"a\"]}\n");
  EXPECT_THROW(ReadCorpus(dup, v), DataError);
  std::istringstream bad("{\"id\": \"x\", \"src\": [\"a\"\n");
  EXPECT_THROW(ReadCorpus(bad, v), DataError);
  std::istringstream no_src("{\"id\": \"x\"}\n");
  EXPECT_THROW(ReadCorpus(no_src, v), DataError);
  EXPECT_THROW(ReadCorpusFile("/nonexistent/file.jsonl", v), DataError);
}

TEST(Corpus, VocabularyFile) {
  Vocabulary v = Vocabulary::WithReserved({"x", "y"});
  std::ostringstream out;
  WriteVocabulary(out, v);
  std::istringstream in(out.str());
  Vocabulary back = ReadVocabulary(in);
  EXPECT_EQ(back.tokens(), v.tokens());
}

}  // namespace
}  // namespace natkit
