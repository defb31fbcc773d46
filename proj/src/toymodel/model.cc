#include "natkit/toymodel/model.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace natkit::toy {

namespace {

constexpr int kFormatVersion = 1;

Matrix Gaussian(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.Normal();
  return m;
}

nlohmann::json ConfigJson(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"hidden", c.hidden},           {"ff", c.ff},
          {"max_source_len", c.max_source_len}, {"upsample", c.upsample}, {"max_offset", c.max_offset},
          {"uniform_copy", c.uniform_copy},     {"dat_star", c.dat_star}};
}

ModelConfig ConfigFromJson(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.ff = j.at("ff").get<int>();
  c.max_source_len = j.at("max_source_len").get<int>();
  c.upsample = j.at("upsample").get<int>();
  c.max_offset = j.at("max_offset").get<int>();
  c.uniform_copy = j.at("uniform_copy").get<bool>();
  c.dat_star = j.at("dat_star").get<bool>();
  return c;
}

}  // namespace

int ModelConfig::PositionRows() const {
  return std::max(upsample * max_source_len, max_source_len + max_offset + 1);
}

void ModelConfig::Check() const {
  if (vocab_size < kNumReserved + 1) throw std::invalid_argument("model: vocabulary too small");
  if (hidden < 1 || ff < 1 || max_source_len < 1 || upsample < 1 || max_offset < 0) {
    throw std::invalid_argument("model: dimensions must be positive");
  }
}

ModelParams ModelParams::Zeros(const ModelConfig& config) {
  config.Check();
  ModelParams p(config);
  const int V = config.vocab_size, d = config.hidden, f = config.ff, P = config.PositionRows();
  const int n_len = 2 * config.max_offset + 1;
  p.embed = Matrix::Zero(V, d);
  p.pos = Matrix::Zero(P, d);
  p.pos_rev = Matrix::Zero(P, d);
  p.tgt_embed = Matrix::Zero(V, d);
  p.w1 = Matrix::Zero(d, f);
  p.b1 = Matrix::Zero(1, f);
  p.w2 = Matrix::Zero(f, d);
  p.b2 = Matrix::Zero(1, d);
  p.w_out = Matrix::Zero(d, V);
  p.b_out = Matrix::Zero(1, V);
  p.w_len = Matrix::Zero(d, n_len);
  p.b_len = Matrix::Zero(1, n_len);
  p.w_q = Matrix::Zero(d, d);
  p.w_k = Matrix::Zero(d, d);
  if (config.dat_star) {
    p.w_q_star = Matrix::Zero(d, d);
    p.w_k_star = Matrix::Zero(d, d);
  }
  return p;
}

ModelParams ModelParams::Init(const ModelConfig& config, Rng& rng) {
  ModelParams p = Zeros(config);
  const double d = config.hidden, f = config.ff;
  p.embed = Gaussian(p.embed.rows(), p.embed.cols(), 1.0 / std::sqrt(d), rng);
  p.pos = Gaussian(p.pos.rows(), p.pos.cols(), 1.0 / std::sqrt(d), rng);
  p.pos_rev = Gaussian(p.pos_rev.rows(), p.pos_rev.cols(), 1.0 / std::sqrt(d), rng);
  p.tgt_embed = Gaussian(p.tgt_embed.rows(), p.tgt_embed.cols(), 1.0 / std::sqrt(d), rng);
  p.w1 = Gaussian(p.w1.rows(), p.w1.cols(), 1.0 / std::sqrt(d), rng);
  p.w2 = Gaussian(p.w2.rows(), p.w2.cols(), 1.0 / std::sqrt(f), rng);
  p.w_out = Gaussian(p.w_out.rows(), p.w_out.cols(), 1.0 / std::sqrt(d), rng);
  p.w_len = Gaussian(p.w_len.rows(), p.w_len.cols(), 1.0 / std::sqrt(d), rng);
  p.w_q = Gaussian(p.w_q.rows(), p.w_q.cols(), 1.0 / std::sqrt(d), rng);
  p.w_k = Gaussian(p.w_k.rows(), p.w_k.cols(), 1.0 / std::sqrt(d), rng);
  if (config.dat_star) {
    p.w_q_star = Gaussian(p.w_q_star.rows(), p.w_q_star.cols(), 1.0 / std::sqrt(d), rng);
    p.w_k_star = Gaussian(p.w_k_star.rows(), p.w_k_star.cols(), 1.0 / std::sqrt(d), rng);
  }
  return p;
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::Blocks() {
  std::vector<std::pair<std::string, Matrix*>> out = {
      {"embed", &embed}, {"pos", &pos},     {"pos_rev", &pos_rev}, {"tgt_embed", &tgt_embed}, {"w1", &w1}, {"b1", &b1},
      {"w2", &w2},       {"b2", &b2},       {"w_out", &w_out},     {"b_out", &b_out}, {"w_len", &w_len},
      {"b_len", &b_len}, {"w_q", &w_q},     {"w_k", &w_k}};
  if (config_.dat_star) {
    out.emplace_back("w_q_star", &w_q_star);
    out.emplace_back("w_k_star", &w_k_star);
  }
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::Blocks() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, m] : const_cast<ModelParams*>(this)->Blocks()) out.emplace_back(name, m);
  return out;
}

std::size_t ModelParams::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& [name, m] : Blocks()) n += static_cast<std::size_t>(m->size());
  return n;
}

DatParams ModelParams::Dat() const {
  DatParams p{w_q, w_k, std::nullopt, std::nullopt};
  if (config_.dat_star) {
    p.w_q_star = w_q_star;
    p.w_k_star = w_k_star;
  }
  return p;
}

void ModelParams::AddScaled(const ModelParams& other, double scale) {
  auto mine = Blocks();
  auto theirs = other.Blocks();
  if (mine.size() != theirs.size()) throw std::invalid_argument("AddScaled: parameter layouts differ");
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i].second += scale * *theirs[i].second;
}

double ModelParams::SquaredNorm() const {
  double n = 0.0;
  for (const auto& [name, m] : Blocks()) n += m->squaredNorm();
  return n;
}

std::string ModelParams::ToJson() const {
  nlohmann::json doc;
  doc["format"] = "natkit-toymodel";
  doc["version"] = kFormatVersion;
  doc["config"] = ConfigJson(config_);
  nlohmann::json blocks = nlohmann::json::object();
  for (const auto& [name, m] : Blocks()) {
    blocks[name] = {{"rows", m->rows()},
                    {"cols", m->cols()},
                    {"data", std::vector<double>(m->data(), m->data() + m->size())}};
  }
  doc["blocks"] = std::move(blocks);
  return doc.dump();
}

ModelParams ModelParams::FromJson(const std::string& text) {
  auto doc = nlohmann::json::parse(text);
  if (!doc.contains("version")) throw std::invalid_argument("model JSON: missing version");
  if (doc["version"].get<int>() != kFormatVersion) {
    throw std::invalid_argument("model JSON: unsupported version " + doc["version"].dump());
  }
  ModelParams p = Zeros(ConfigFromJson(doc.at("config")));
  const auto& blocks = doc.at("blocks");
  for (auto& [name, m] : p.Blocks()) {
    const auto& b = blocks.at(name);
    if (b.at("rows").get<Eigen::Index>() != m->rows() || b.at("cols").get<Eigen::Index>() != m->cols()) {
      throw std::invalid_argument("model JSON: block '" + name + "' has the wrong shape");
    }
    auto data = b.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != m->size()) {
      throw std::invalid_argument("model JSON: block '" + name + "' has the wrong size");
    }
    std::copy(data.begin(), data.end(), m->data());
  }
  return p;
}

PositionPlan ExactPlan(int source_length, int target_length) {
  PositionPlan plan(static_cast<std::size_t>(target_length));
  for (int m = 0; m < target_length; ++m) {
    plan[static_cast<std::size_t>(m)] = {m, target_length - 1 - m,
                                         static_cast<int>(static_cast<long>(m) * source_length / target_length)};
  }
  return plan;
}

PositionPlan UpsampledPlan(int source_length, int upsample) {
  const int M = source_length * upsample;
  PositionPlan plan(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) plan[static_cast<std::size_t>(m)] = {m, M - 1 - m, m / upsample};
  return plan;
}

PositionPlan ArStepPlan(int source_length, int step) {
  return {PositionFeature{step, -1, step < source_length ? step : -1}};
}

ForwardResult Forward(const ModelParams& params, const TokenSequence& source, const PositionPlan& plan,
                      std::span<const TokenId> observed) {
  const ModelConfig& cfg = params.config();
  if (source.empty()) throw std::invalid_argument("model: empty source");
  if (static_cast<int>(source.size()) > cfg.max_source_len) {
    std::ostringstream msg;
    msg << "model: source length " << source.size() << " exceeds max_source_len " << cfg.max_source_len;
    throw std::invalid_argument(msg.str());
  }
  if (plan.empty()) throw std::invalid_argument("model: no decoder positions");
  CheckIdsInRange(source, static_cast<std::size_t>(cfg.vocab_size), "model source");
  CheckIdsInRange(observed, static_cast<std::size_t>(cfg.vocab_size), "model observed target");
  const int P = cfg.PositionRows();

  ForwardCache cache;
  cache.pooled = Vector::Zero(cfg.hidden);
  // Summed in sorted order so any permutation of the source pools bit-identically.
  TokenSequence sorted_source = source;
  std::sort(sorted_source.begin(), sorted_source.end());
  for (TokenId t : sorted_source) cache.pooled += params.embed.row(t).transpose();
  cache.pooled /= static_cast<double>(source.size());
  cache.observed = Vector::Zero(cfg.hidden);
  cache.observed_count = static_cast<int>(observed.size());
  for (TokenId t : observed) cache.observed += params.tgt_embed.row(t).transpose();
  if (!observed.empty()) cache.observed /= static_cast<double>(observed.size());

  const auto M = static_cast<Eigen::Index>(plan.size());
  cache.u.resize(M, cfg.hidden);
  const Eigen::RowVectorXd base = (cache.pooled + cache.observed).transpose();
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto& f = plan[static_cast<std::size_t>(m)];
    if (f.pos < 0 || f.pos >= P || f.pos_rev >= P) {
      throw std::invalid_argument("model: decoder position " + std::to_string(f.pos) + " exceeds position table");
    }
    cache.u.row(m) = base + params.pos.row(f.pos);
    if (f.pos_rev >= 0) cache.u.row(m) += params.pos_rev.row(f.pos_rev);
    if (cfg.uniform_copy && f.aligned >= 0) cache.u.row(m) += params.embed.row(source[static_cast<std::size_t>(f.aligned)]);
  }
  Matrix a1 = cache.u * params.w1;
  a1.rowwise() += params.b1.row(0);
  cache.z = a1.array().tanh();
  cache.states = cache.u + cache.z * params.w2;
  cache.states.rowwise() += params.b2.row(0);
  Matrix logits = cache.states * params.w_out;
  logits.rowwise() += params.b_out.row(0);
  Vector len_logits = params.w_len.transpose() * cache.pooled + params.b_len.row(0).transpose();

  Matrix states = cache.states;
  return ForwardResult{EmissionLattice::FromLogits(logits), std::move(states),
                       LengthDistribution::FromLogits(len_logits), std::move(cache)};
}

void Backward(const ModelParams& params, const TokenSequence& source, const PositionPlan& plan,
              std::span<const TokenId> observed, const ForwardCache& cache, const BackwardInputs& inputs,
              ModelParams& grads) {
  const ModelConfig& cfg = params.config();
  const auto M = static_cast<Eigen::Index>(plan.size());
  Matrix d_states = Matrix::Zero(M, cfg.hidden);
  if (inputs.grad_logits) {
    const Matrix& g = *inputs.grad_logits;
    grads.w_out.noalias() += cache.states.transpose() * g;
    grads.b_out.row(0) += g.colwise().sum();
    d_states.noalias() += g * params.w_out.transpose();
  }
  if (inputs.grad_states) d_states += *inputs.grad_states;

  // H = u + tanh(u W1 + b1) W2 + b2
  grads.w2.noalias() += cache.z.transpose() * d_states;
  grads.b2.row(0) += d_states.colwise().sum();
  Matrix d_a1 = (d_states * params.w2.transpose()).array() * (1.0 - cache.z.array().square());
  grads.w1.noalias() += cache.u.transpose() * d_a1;
  grads.b1.row(0) += d_a1.colwise().sum();
  Matrix d_u = d_states + d_a1 * params.w1.transpose();

  Eigen::RowVectorXd d_base = d_u.colwise().sum();
  Eigen::RowVectorXd d_pooled = d_base;
  if (inputs.grad_length_logits) {
    const Vector& g = *inputs.grad_length_logits;
    grads.w_len.noalias() += cache.pooled * g.transpose();
    grads.b_len.row(0) += g.transpose();
    d_pooled += (params.w_len * g).transpose();
  }
  for (TokenId t : source) grads.embed.row(t) += d_pooled / static_cast<double>(source.size());
  if (!observed.empty()) {
    for (TokenId t : observed) grads.tgt_embed.row(t) += d_base / static_cast<double>(observed.size());
  }
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto& f = plan[static_cast<std::size_t>(m)];
    grads.pos.row(f.pos) += d_u.row(m);
    if (f.pos_rev >= 0) grads.pos_rev.row(f.pos_rev) += d_u.row(m);
    if (cfg.uniform_copy && f.aligned >= 0) grads.embed.row(source[static_cast<std::size_t>(f.aligned)]) += d_u.row(m);
  }
}

}  // namespace natkit::toy
