#include "natkit/dat.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace natkit {

namespace {

double Binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::vector<double> MaxEmission(const EmissionLattice& emissions) {
  std::vector<double> best(static_cast<std::size_t>(emissions.positions()));
  for (Eigen::Index m = 0; m < emissions.positions(); ++m) {
    best[static_cast<std::size_t>(m)] = emissions.log_probs().row(m).maxCoeff();
  }
  return best;
}

TokenSequence InteriorArgmax(const EmissionLattice& emissions, const Path& path) {
  TokenSequence tokens;
  for (std::size_t i = 1; i + 1 < path.size(); ++i) {
    tokens.push_back(static_cast<TokenId>(ArgMax(RowSpan(emissions.log_probs(), path[i]))));
  }
  return tokens;
}

void CheckShapes(const EmissionLattice& emissions, const TransitionMatrix& transition) {
  if (emissions.positions() != transition.size()) {
    std::ostringstream msg;
    msg << "DAT: emissions have " << emissions.positions() << " vertices, transition matrix " << transition.size();
    throw std::invalid_argument(msg.str());
  }
  if (transition.size() < 2) throw std::invalid_argument("DAT: need at least two vertices");
}

}  // namespace

TransitionMatrix TransitionMatrix::FromLogits(const Matrix& logits) {
  if (logits.rows() != logits.cols() || logits.rows() < 2) {
    throw std::invalid_argument("transition logits must be square with at least two vertices");
  }
  const Eigen::Index m = logits.rows();
  Matrix log_e = Matrix::Constant(m, m, kNegInf);
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    const Eigen::Index n = m - i - 1;
    double z = LogSumExp(std::span<const double>(logits.data() + i * m + i + 1, static_cast<std::size_t>(n)));
    log_e.row(i).tail(n) = logits.row(i).tail(n).array() - z;
  }
  return TransitionMatrix(std::move(log_e));
}

TransitionMatrix TransitionMatrix::FromLogProbs(Matrix log_e, double tolerance) {
  if (log_e.rows() != log_e.cols() || log_e.rows() < 2) {
    throw std::invalid_argument("transition matrix must be square with at least two vertices");
  }
  const Eigen::Index m = log_e.rows();
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      if (log_e(i, j) != kNegInf) {
        std::ostringstream msg;
        msg << "transition matrix has mass on non-forward cell (" << i << ", " << j << ")";
        throw std::invalid_argument(msg.str());
      }
    }
    if (i + 1 < m) {
      double z = LogSumExp(RowSpan(log_e, i));
      if (!(std::abs(z) <= tolerance)) {
        throw std::invalid_argument("transition row " + std::to_string(i) + " is not normalized");
      }
    }
  }
  return TransitionMatrix(std::move(log_e));
}

std::string TransitionMatrix::ToJson() const {
  nlohmann::json doc;
  doc["m"] = size();
  nlohmann::json values = nlohmann::json::array();
  for (Eigen::Index i = 0; i < size(); ++i) {
    for (Eigen::Index j = 0; j < size(); ++j) {
      if (log_e_(i, j) == kNegInf) {
        values.push_back(nullptr);
      } else {
        values.push_back(log_e_(i, j));
      }
    }
  }
  doc["log_e"] = std::move(values);
  return doc.dump();
}

TransitionMatrix TransitionMatrix::FromJson(const std::string& text) {
  auto doc = nlohmann::json::parse(text);
  const auto m = doc.at("m").get<Eigen::Index>();
  const auto& values = doc.at("log_e");
  if (m < 2 || values.size() != static_cast<std::size_t>(m * m)) {
    throw std::invalid_argument("transition JSON: log_e must hold m*m entries");
  }
  Matrix log_e(m, m);
  for (Eigen::Index k = 0; k < m * m; ++k) {
    const auto& v = values[static_cast<std::size_t>(k)];
    log_e(k / m, k % m) = v.is_null() ? kNegInf : v.get<double>();
  }
  return FromLogProbs(std::move(log_e));
}

Matrix TransitionLogitGrad(const TransitionMatrix& transition, const Matrix& grad_log_e) {
  const Eigen::Index m = transition.size();
  Matrix grad = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    const Eigen::Index n = m - i - 1;
    double total = grad_log_e.row(i).tail(n).sum();
    grad.row(i).tail(n) =
        grad_log_e.row(i).tail(n).array() - transition.log_probs().row(i).tail(n).array().exp() * total;
  }
  return grad;
}

void DatParams::Check() const {
  const Eigen::Index d = w_q.rows();
  if (d < 1 || w_q.cols() != d || w_k.rows() != d || w_k.cols() != d) {
    throw std::invalid_argument("DAT params: W_Q and W_K must both be d x d");
  }
  if (w_q_star.has_value() != w_k_star.has_value()) {
    throw std::invalid_argument("DAT params: W_Q* and W_K* must be present together");
  }
  if (w_q_star && (w_q_star->rows() != d || w_q_star->cols() != d || w_k_star->rows() != d ||
                   w_k_star->cols() != d)) {
    throw std::invalid_argument("DAT params: star matrices must be d x d");
  }
}

TransitionMatrix BuildTransition(const Matrix& states, const DatParams& params, TransitionVariant variant,
                                 TransitionCache* cache) {
  params.Check();
  const Eigen::Index d = params.hidden();
  if (states.cols() != d) {
    std::ostringstream msg;
    msg << "DAT: states have width " << states.cols() << " but W_Q is " << d << " x " << d;
    throw std::invalid_argument(msg.str());
  }
  if (states.rows() < 2) throw std::invalid_argument("DAT: need at least two vertex states");
  if (variant == TransitionVariant::kStar && !params.has_star()) {
    throw std::invalid_argument("DAT: star variant requested without W_Q*/W_K*");
  }
  TransitionCache local;
  TransitionCache& c = cache ? *cache : local;
  c.variant = variant;
  c.q = states * params.w_q;
  c.k = states * params.w_k;
  if (variant == TransitionVariant::kStar) {
    c.q_out = c.q.cwiseMax(0.0) * *params.w_q_star;
    c.k_out = c.k.cwiseMax(0.0) * *params.w_k_star;
  } else {
    c.q_out = c.q;
    c.k_out = c.k;
  }
  c.logits = (c.q_out * c.k_out.transpose()) / std::sqrt(static_cast<double>(d));
  return TransitionMatrix::FromLogits(c.logits);
}

TransitionGrads TransitionBackward(const Matrix& states, const DatParams& params, const TransitionCache& cache,
                                   const Matrix& grad_logits) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.hidden()));
  // Masked cells never reach the loss.
  Matrix g = grad_logits.triangularView<Eigen::StrictlyUpper>();
  g *= scale;
  Matrix grad_q_out = g * cache.k_out;
  Matrix grad_k_out = g.transpose() * cache.q_out;

  TransitionGrads out;
  Matrix grad_q, grad_k;
  if (cache.variant == TransitionVariant::kStar) {
    Matrix relu_q = cache.q.cwiseMax(0.0);
    Matrix relu_k = cache.k.cwiseMax(0.0);
    out.w_q_star = relu_q.transpose() * grad_q_out;
    out.w_k_star = relu_k.transpose() * grad_k_out;
    grad_q = (grad_q_out * params.w_q_star->transpose()).array() * (cache.q.array() > 0.0).cast<double>();
    grad_k = (grad_k_out * params.w_k_star->transpose()).array() * (cache.k.array() > 0.0).cast<double>();
  } else {
    grad_q = std::move(grad_q_out);
    grad_k = std::move(grad_k_out);
  }
  out.w_q = states.transpose() * grad_q;
  out.w_k = states.transpose() * grad_k;
  out.states = grad_q * params.w_q.transpose() + grad_k * params.w_k.transpose();
  return out;
}

std::vector<Path> EnumeratePaths(int vertices, int length) {
  if (vertices < 2) throw std::invalid_argument("EnumeratePaths: need at least two vertices");
  if (length < 2 || length > vertices) return {};
  if (Binomial(vertices - 2, length - 2) > 1e6) {
    throw std::invalid_argument("EnumeratePaths: path count exceeds the oracle guard");
  }
  std::vector<Path> out;
  // Interior vertices are a (length-2)-combination of {1, .., vertices-2}.
  const int k = length - 2;
  std::vector<int> pick(static_cast<std::size_t>(k));
  std::iota(pick.begin(), pick.end(), 1);
  while (true) {
    Path p;
    p.reserve(static_cast<std::size_t>(length));
    p.push_back(0);
    p.insert(p.end(), pick.begin(), pick.end());
    p.push_back(vertices - 1);
    out.push_back(std::move(p));
    int i = k - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == vertices - 2 - (k - 1 - i)) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

DatResult DatLogProbGrad(const EmissionLattice& emissions, const TransitionMatrix& transition,
                         const TokenSequence& target, TokenId bos, TokenId eos) {
  CheckShapes(emissions, transition);
  const Eigen::Index M = transition.size();
  CheckIdsInRange(target, static_cast<std::size_t>(emissions.width()), "DAT target");
  TokenSequence y;
  y.reserve(target.size() + 2);
  y.push_back(bos);
  y.insert(y.end(), target.begin(), target.end());
  y.push_back(eos);
  CheckIdsInRange(y, static_cast<std::size_t>(emissions.width()), "DAT BOS/EOS");
  const auto L = static_cast<Eigen::Index>(y.size());
  if (M < L) {
    std::ostringstream msg;
    msg << "DAT: target of length " << target.size() << " needs at least " << L << " vertices, got " << M;
    throw InfeasibleLengthError(msg.str());
  }
  const Matrix& em = emissions.log_probs();
  const Matrix& E = transition.log_probs();

  // fwd(i, j): log mass of prefixes y_0..y_i ending at vertex j, emission included.
  Matrix fwd = Matrix::Constant(L, M, kNegInf);
  fwd(0, 0) = em(0, y[0]);
  std::vector<double> terms;
  for (Eigen::Index i = 1; i < L; ++i) {
    // Vertex j can host token i only if i <= j and the rest still fits.
    for (Eigen::Index j = i; j <= M - L + i; ++j) {
      terms.clear();
      for (Eigen::Index k = i - 1; k < j; ++k) {
        if (fwd(i - 1, k) != kNegInf) terms.push_back(fwd(i - 1, k) + E(k, j));
      }
      double acc = LogSumExp(terms);
      if (acc != kNegInf) fwd(i, j) = acc + em(j, y[static_cast<std::size_t>(i)]);
    }
  }
  // bwd(i, j): log mass of completing from token i at vertex j, excluding em(j, y_i).
  Matrix bwd = Matrix::Constant(L, M, kNegInf);
  bwd(L - 1, M - 1) = 0.0;
  for (Eigen::Index i = L - 2; i >= 0; --i) {
    for (Eigen::Index j = i; j <= M - L + i; ++j) {
      terms.clear();
      for (Eigen::Index k = j + 1; k <= M - L + i + 1; ++k) {
        if (bwd(i + 1, k) != kNegInf) {
          terms.push_back(E(j, k) + em(k, y[static_cast<std::size_t>(i + 1)]) + bwd(i + 1, k));
        }
      }
      bwd(i, j) = LogSumExp(terms);
    }
  }

  DatResult out;
  out.log_prob = fwd(L - 1, M - 1);
  Matrix occ_em = Matrix::Zero(M, emissions.width());
  Matrix occ_tr = Matrix::Zero(M, M);
  if (out.log_prob != kNegInf) {
    for (Eigen::Index i = 0; i < L; ++i) {
      const TokenId tok = y[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < M; ++j) {
        if (fwd(i, j) == kNegInf || bwd(i, j) == kNegInf) continue;
        occ_em(j, tok) += std::exp(fwd(i, j) + bwd(i, j) - out.log_prob);
      }
    }
    for (Eigen::Index i = 1; i < L; ++i) {
      const TokenId tok = y[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 1; j < M; ++j) {
        if (bwd(i, j) == kNegInf) continue;
        const double tail = em(j, tok) + bwd(i, j) - out.log_prob;
        for (Eigen::Index k = 0; k < j; ++k) {
          if (fwd(i - 1, k) == kNegInf) continue;
          occ_tr(k, j) += std::exp(fwd(i - 1, k) + E(k, j) + tail);
        }
      }
    }
  }
  out.grad_emission = LogSoftmaxBackward(em, occ_em);
  out.grad_transition = TransitionLogitGrad(transition, occ_tr);
  return out;
}

double DatPathLogProb(const EmissionLattice& emissions, const TransitionMatrix& transition,
                      const TokenSequence& augmented_target, const Path& path) {
  if (path.size() != augmented_target.size()) throw std::invalid_argument("path/target length mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    lp += emissions.at(path[i], augmented_target[i]);
    if (i + 1 < path.size()) lp += transition.at(path[i], path[i + 1]);
  }
  return lp;
}

double DatJointScore(const EmissionLattice& emissions, const TransitionMatrix& transition, const Path& path) {
  double score = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    score += emissions.log_probs().row(path[i]).maxCoeff();
    if (i + 1 < path.size()) score += transition.at(path[i], path[i + 1]);
  }
  return score;
}

namespace {

Path WalkLocally(const EmissionLattice& emissions, const TransitionMatrix& transition, int max_len,
                 bool lookahead) {
  const auto M = static_cast<int>(transition.size());
  const std::vector<double> best_em = MaxEmission(emissions);
  Path path{0};
  int cur = 0;
  while (cur != M - 1) {
    int next = M - 1;
    if (static_cast<int>(path.size()) - 1 < max_len) {
      double best = kNegInf;
      for (int j = cur + 1; j < M; ++j) {
        double s = transition.at(cur, j) + (lookahead ? best_em[static_cast<std::size_t>(j)] : 0.0);
        if (s > best) {
          best = s;
          next = j;
        }
      }
    }
    path.push_back(next);
    cur = next;
  }
  return path;
}

Path Viterbi(const EmissionLattice& emissions, const TransitionMatrix& transition, int max_len,
             double length_penalty) {
  const auto M = static_cast<int>(transition.size());
  const std::vector<double> best_em = MaxEmission(emissions);
  const Matrix& E = transition.log_probs();
  const bool unconstrained = max_len >= M - 2 && length_penalty == 0.0;
  if (unconstrained) {
    std::vector<double> score(static_cast<std::size_t>(M), kNegInf);
    std::vector<int> back(static_cast<std::size_t>(M), -1);
    score[0] = best_em[0];
    for (int j = 1; j < M; ++j) {
      for (int k = 0; k < j; ++k) {
        double s = score[static_cast<std::size_t>(k)] + E(k, j);
        if (s > score[static_cast<std::size_t>(j)]) {
          score[static_cast<std::size_t>(j)] = s;
          back[static_cast<std::size_t>(j)] = k;
        }
      }
      score[static_cast<std::size_t>(j)] += best_em[static_cast<std::size_t>(j)];
    }
    Path path;
    for (int v = M - 1; v >= 0; v = back[static_cast<std::size_t>(v)]) path.push_back(v);
    std::reverse(path.begin(), path.end());
    return path;
  }
  // Layered by number of transitions so the emitted length can be bounded.
  const int max_steps = std::min(M - 1, max_len + 1);
  Matrix score = Matrix::Constant(max_steps + 1, M, kNegInf);
  Eigen::MatrixXi back = Eigen::MatrixXi::Constant(max_steps + 1, M, -1);
  score(0, 0) = best_em[0];
  for (int n = 1; n <= max_steps; ++n) {
    for (int j = n; j < M; ++j) {
      for (int k = n - 1; k < j; ++k) {
        double s = score(n - 1, k) + E(k, j);
        if (s > score(n, j)) {
          score(n, j) = s;
          back(n, j) = k;
        }
      }
      if (score(n, j) != kNegInf) score(n, j) += best_em[static_cast<std::size_t>(j)];
    }
  }
  int best_n = -1;
  double best = kNegInf;
  for (int n = 1; n <= max_steps; ++n) {
    double s = score(n, M - 1) + length_penalty * (n - 1);
    if (score(n, M - 1) != kNegInf && (best_n < 0 || s > best)) {
      best = s;
      best_n = n;
    }
  }
  Path path;
  for (int n = best_n, v = M - 1; n >= 0; v = back(n, v), --n) path.push_back(v);
  std::reverse(path.begin(), path.end());
  return path;
}

struct DatHyp {
  Path path;
  TokenSequence tokens;
  double score = 0.0;
};

bool BetterDatHyp(const DatHyp& a, const DatHyp& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.path != b.path) return a.path < b.path;
  return a.tokens < b.tokens;
}

DatHyp Beam(const EmissionLattice& emissions, const TransitionMatrix& transition, int beam_size, int max_len) {
  const auto M = static_cast<int>(transition.size());
  const std::vector<double> best_em = MaxEmission(emissions);
  const Matrix& em = emissions.log_probs();
  const auto width = static_cast<std::size_t>(emissions.width());
  const std::size_t top_k = std::min<std::size_t>(width, static_cast<std::size_t>(beam_size));

  // Per-vertex token candidates: log-prob descending, then id ascending.
  std::vector<std::vector<TokenId>> top_tokens(static_cast<std::size_t>(M));
  for (int j = 0; j < M; ++j) {
    std::vector<TokenId> ids(width);
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) { return em(j, a) > em(j, b); });
    ids.resize(top_k);
    top_tokens[static_cast<std::size_t>(j)] = std::move(ids);
  }

  std::vector<DatHyp> live{DatHyp{{0}, {}, best_em[0]}};
  std::optional<DatHyp> best_finished;
  while (!live.empty()) {
    std::vector<DatHyp> candidates;
    for (const auto& hyp : live) {
      const int cur = hyp.path.back();
      const bool must_finish = static_cast<int>(hyp.tokens.size()) >= max_len;
      for (int j = must_finish ? M - 1 : cur + 1; j < M; ++j) {
        const double step = transition.at(cur, j);
        if (step == kNegInf) continue;
        if (j == M - 1) {
          DatHyp done = hyp;
          done.path.push_back(j);
          done.score += step + best_em[static_cast<std::size_t>(j)];
          if (!best_finished || BetterDatHyp(done, *best_finished)) best_finished = std::move(done);
          continue;
        }
        for (TokenId w : top_tokens[static_cast<std::size_t>(j)]) {
          DatHyp next = hyp;
          next.path.push_back(j);
          next.tokens.push_back(w);
          next.score += step + em(j, w);
          candidates.push_back(std::move(next));
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(), BetterDatHyp);
    if (candidates.size() > static_cast<std::size_t>(beam_size)) candidates.resize(static_cast<std::size_t>(beam_size));
    live = std::move(candidates);
    // All increments are log-probabilities (<= 0), so live hypotheses can only lose ground.
    if (best_finished && !live.empty() && best_finished->score > live.front().score) break;
  }
  if (!best_finished) throw std::runtime_error("DAT beam search produced no complete path");
  return *best_finished;
}

}  // namespace

DatDecodeResult DatDecode(const EmissionLattice& emissions, const TransitionMatrix& transition,
                          const DatDecodeOptions& options) {
  CheckShapes(emissions, transition);
  if (options.max_len < 1) throw std::invalid_argument("DAT decode: max_len must be >= 1");
  DatDecodeResult out;
  switch (options.strategy) {
    case DatStrategy::kGreedy:
    case DatStrategy::kLookahead:
      out.path = WalkLocally(emissions, transition, options.max_len, options.strategy == DatStrategy::kLookahead);
      break;
    case DatStrategy::kViterbi:
      out.path = Viterbi(emissions, transition, options.max_len, options.length_penalty);
      break;
    case DatStrategy::kBeam: {
      if (options.beam_size < 1) throw std::invalid_argument("DAT decode: beam_size must be >= 1");
      DatHyp best = Beam(emissions, transition, options.beam_size, options.max_len);
      out.path = std::move(best.path);
      out.tokens = std::move(best.tokens);
      out.score = best.score;
      return out;
    }
  }
  out.tokens = InteriorArgmax(emissions, out.path);
  out.score = DatJointScore(emissions, transition, out.path);
  return out;
}

}  // namespace natkit
