// natkit command-line driver.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "natkit/corpus.h"
#include "natkit/metrics.h"
#include "natkit/mqm.h"
#include "natkit/parallel.h"
#include "natkit/perturb.h"
#include "natkit/random.h"
#include "natkit/toymodel/decode.h"
#include "natkit/toymodel/objectives.h"
#include "natkit/toymodel/task.h"
#include "natkit/toymodel/train.h"

namespace {

using nlohmann::json;
using namespace natkit;
using namespace natkit::toy;

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheckFailed = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string format = "json";
  std::string manifest;
};

// Files read and written by the current run, for the manifest.
struct RunIo {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write to '" + path + "' failed");
}

std::string Hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

std::string Fixed2(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << v;
  return ss.str();
}

// Output text either to a file or to stdout.
void Emit(const std::string& path, const std::string& text, RunIo& io) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  WriteFile(path, text);
  io.outputs.push_back(path);
}

std::string DumpJson(const json& j) { return j.dump(2) + "\n"; }

// Collects every token surface in JSONL corpora so free text gets ids.
Vocabulary OpenVocabulary(const std::vector<std::string>& paths) {
  std::set<std::string> surfaces;
  const Vocabulary reserved = Vocabulary::WithReserved({});
  for (const auto& path : paths) {
    std::istringstream in(ReadFile(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json doc;
      try {
        doc = json::parse(line);
      } catch (const json::exception& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      for (const char* key : {"src", "hyp", "ref"}) {
        if (!doc.contains(key) || !doc[key].is_array()) continue;
        for (const auto& tok : doc[key]) {
          if (tok.is_string() && !reserved.Find(tok.get<std::string>())) surfaces.insert(tok.get<std::string>());
        }
      }
    }
  }
  return Vocabulary::WithReserved(std::vector<std::string>(surfaces.begin(), surfaces.end()));
}

Vocabulary ModelVocabulary(const ModelParams& params, const std::string& vocab_path, RunIo& io) {
  if (vocab_path.empty()) return MakeToyVocabulary(params.config().vocab_size);
  io.inputs.push_back(vocab_path);
  Vocabulary v = ReadVocabularyFile(vocab_path);
  if (static_cast<int>(v.size()) != params.config().vocab_size) {
    throw DataError("vocabulary size " + std::to_string(v.size()) + " does not match the model (" +
                    std::to_string(params.config().vocab_size) + ")");
  }
  return v;
}

ModelParams LoadModel(const std::string& path, RunIo& io) {
  io.inputs.push_back(path);
  try {
    return ModelParams::FromJson(ReadFile(path));
  } catch (const json::exception& e) {
    throw DataError("model '" + path + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError("model '" + path + "': " + e.what());
  }
}

Corpus LoadCorpus(const std::string& path, const Vocabulary& vocab, RunIo& io) {
  io.inputs.push_back(path);
  return ReadCorpusFile(path, vocab);
}

std::string CorpusText(const Corpus& corpus, const Vocabulary& vocab) {
  std::ostringstream out;
  WriteCorpus(out, corpus, vocab);
  return out.str();
}

std::vector<TokenSequence> Field(const Corpus& corpus, const std::string& field, const std::string& what) {
  std::vector<TokenSequence> out;
  for (const auto& e : corpus) {
    const std::optional<TokenSequence>* slot = nullptr;
    if (field == "src") {
      out.push_back(e.source);
      continue;
    }
    slot = field == "hyp" ? &e.hypothesis : &e.reference;
    if (!slot->has_value()) throw DataError(what + ": entry '" + e.id + "' has no \"" + field + "\"");
    out.push_back(**slot);
  }
  return out;
}

json CountsJson(const std::map<int, long>& counts) {
  json j = json::object();
  for (const auto& [n, c] : counts) j[std::to_string(n)] = c;
  return j;
}

// Simple aligned text table.
std::string Table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out << "  ";
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
      } else {
        out << std::right << std::setw(static_cast<int>(width[c])) << cells[c];
      }
    }
    out << "\n";
  };
  line(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  line(rule);
  for (const auto& r : rows) line(r);
  return out.str();
}

// ---- subcommands ---------------------------------------------------------

struct TrainArgs {
  std::string task = "copy";
  int vocab_size = 12;
  int min_len = 3;
  int max_len = 8;
  int pairs = 2000;
  std::string corpus;
  std::string vocab;
  std::string init;
  std::string write_corpus;
  std::string objective = "nat";
  double lr = 0.1;
  int epochs = 10;
  int batch = 16;
  double clip = 5.0;
  int hidden = 16;
  int ff = 32;
  int max_source_len = 16;
  int upsample = 8;
  int max_offset = 20;
  int ctc_upsample = 3;
  int dat_upsample = 8;
  int mgmo_samples = 8;
  double mgmo_alpha = 1.0;
  bool length_loss = false;
  bool no_uniform_copy = false;
  bool dat_star = false;
  std::string out;
};

ObjectiveOptions MakeObjectiveOptions(const TrainArgs& a) {
  ObjectiveOptions o;
  o.ctc_upsample = a.ctc_upsample;
  o.dat_upsample = a.dat_upsample;
  o.mgmo_samples = a.mgmo_samples;
  o.mgmo_alpha = a.mgmo_alpha;
  o.add_length_loss = a.length_loss;
  return o;
}

int RunTrain(const TrainArgs& a, const Globals& g, RunIo& io) {
  if (a.out.empty()) throw UsageError("train: --out is required");
  const Objective objective = ParseObjective(a.objective);
  Corpus corpus;
  ModelParams init;
  Vocabulary vocab = Vocabulary::WithReserved({});
  if (!a.init.empty()) init = LoadModel(a.init, io);
  if (!a.corpus.empty()) {
    if (a.init.empty()) {
      vocab = a.vocab.empty() ? MakeToyVocabulary(a.vocab_size) : ReadVocabularyFile(a.vocab);
      if (!a.vocab.empty()) io.inputs.push_back(a.vocab);
    } else {
      vocab = ModelVocabulary(init, a.vocab, io);
    }
    corpus = LoadCorpus(a.corpus, vocab, io);
  } else {
    TaskSpec spec;
    spec.kind = ParseTaskKind(a.task);
    spec.vocab_size = a.init.empty() ? a.vocab_size : init.config().vocab_size;
    spec.min_len = a.min_len;
    spec.max_len = a.max_len;
    spec.pairs = a.pairs;
    Rng task_rng = Rng::ForStream(g.seed, "task");
    corpus = MakeToyTask(spec, task_rng);
    vocab = MakeToyVocabulary(spec.vocab_size);
    if (!a.write_corpus.empty()) Emit(a.write_corpus, CorpusText(corpus, vocab), io);
  }
  if (a.init.empty()) {
    ModelConfig mc;
    mc.vocab_size = static_cast<int>(vocab.size());
    mc.hidden = a.hidden;
    mc.ff = a.ff;
    mc.max_source_len = a.max_source_len;
    mc.upsample = a.upsample;
    mc.max_offset = a.max_offset;
    mc.uniform_copy = !a.no_uniform_copy;
    mc.dat_star = a.dat_star || objective == Objective::kDatStar;
    Rng init_rng = Rng::ForStream(g.seed, "init");
    init = ModelParams::Init(mc, init_rng);
  }
  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.objective = objective;
  tc.clip_norm = a.clip;
  tc.seed = g.seed;
  tc.options = MakeObjectiveOptions(a);
  std::cerr << "training " << ToString(objective) << " on " << corpus.size() << " pairs, "
            << init.ParameterCount() << " parameters\n";
  TrainResult r = Train(corpus, init, tc, [](int epoch, double loss) {
    std::cerr << "epoch " << epoch << " loss " << std::setprecision(6) << loss << "\n";
  });
  WriteFile(a.out, r.params.ToJson());
  io.outputs.push_back(a.out);

  if (g.format == "table") {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t e = 0; e < r.loss_history.size(); ++e) {
      rows.push_back({std::to_string(e + 1), Fixed2(r.loss_history[e])});
    }
    std::cout << Table({"epoch", "loss"}, rows);
  } else {
    json out = {{"objective", ToString(objective)},
                {"pairs", corpus.size()},
                {"parameter_count", init.ParameterCount()},
                {"loss_history", r.loss_history},
                {"model", a.out}};
    std::cout << DumpJson(out);
  }
  return kExitOk;
}

struct DecodeArgs {
  std::string model;
  std::string vocab;
  std::string method = "nat";
  std::string strategy;
  int beam = 5;
  int iterations = 10;
  int ctc_upsample = 3;
  int dat_upsample = 8;
  int max_len = 64;
  std::string input;
  std::string output;
};

DecodeConfig MakeDecodeConfig(const DecodeArgs& a) {
  DecodeConfig c;
  c.method = ParseMethod(a.method);
  c.beam_size = a.beam;
  c.cmlm_iterations = a.iterations;
  c.ctc_upsample = a.ctc_upsample;
  c.dat_upsample = a.dat_upsample;
  c.max_len = a.max_len;
  const std::string& s = a.strategy;
  switch (c.method) {
    case Method::kAt:
      if (s.empty() || s == "beam") {
        c.at_strategy = AtStrategy::kBeam;
      } else if (s == "greedy") {
        c.at_strategy = AtStrategy::kGreedy;
      } else {
        throw UsageError("at decoding supports --strategy greedy|beam");
      }
      break;
    case Method::kCtc:
      if (s.empty() || s == "greedy") {
        c.ctc_strategy = CtcStrategy::kGreedy;
      } else if (s == "prefix-beam" || s == "beam") {
        c.ctc_strategy = CtcStrategy::kPrefixBeam;
      } else {
        throw UsageError("ctc decoding supports --strategy greedy|prefix-beam");
      }
      break;
    case Method::kDat:
    case Method::kDatStar:
      if (s.empty() || s == "lookahead") {
        c.dat_strategy = DatStrategy::kLookahead;
      } else if (s == "greedy") {
        c.dat_strategy = DatStrategy::kGreedy;
      } else if (s == "viterbi") {
        c.dat_strategy = DatStrategy::kViterbi;
      } else if (s == "beam") {
        c.dat_strategy = DatStrategy::kBeam;
      } else {
        throw UsageError("dat decoding supports --strategy greedy|lookahead|viterbi|beam");
      }
      break;
    case Method::kNat:
    case Method::kCmlm:
      if (!s.empty()) throw UsageError(std::string(ToString(c.method)) + " decoding takes no --strategy");
      break;
  }
  return c;
}

int RunDecode(const DecodeArgs& a, const Globals& g, RunIo& io) {
  DecodeConfig config = MakeDecodeConfig(a);
  ModelParams params = LoadModel(a.model, io);
  Vocabulary vocab = ModelVocabulary(params, a.vocab, io);
  Corpus corpus = LoadCorpus(a.input, vocab, io);
  Corpus decoded = DecodeCorpus(params, corpus, config, g.threads);
  Emit(a.output, CorpusText(decoded, vocab), io);
  return kExitOk;
}

struct LossArgs {
  std::string model;
  std::string vocab;
  std::string objective = "nat";
  int ctc_upsample = 3;
  int dat_upsample = 8;
  int mgmo_samples = 8;
  double mgmo_alpha = 1.0;
  bool length_loss = false;
  std::string input;
};

int RunLoss(const LossArgs& a, const Globals& g, RunIo& io) {
  const Objective objective = ParseObjective(a.objective);
  ModelParams params = LoadModel(a.model, io);
  Vocabulary vocab = ModelVocabulary(params, a.vocab, io);
  Corpus corpus = LoadCorpus(a.input, vocab, io);
  if (corpus.empty()) throw DataError("loss: empty corpus");
  ObjectiveOptions o;
  o.ctc_upsample = a.ctc_upsample;
  o.dat_upsample = a.dat_upsample;
  o.mgmo_samples = a.mgmo_samples;
  o.mgmo_alpha = a.mgmo_alpha;
  o.add_length_loss = a.length_loss;
  std::vector<double> losses(corpus.size());
  ParallelFor(corpus.size(), g.threads, [&](std::size_t i) {
    Rng rng = Rng::ForStream(g.seed, corpus[i].id);
    PreparedInstance inst = Prepare(objective, params, corpus[i], rng, o);
    losses[i] = LossAndGrad(params, inst, o, nullptr);
  });
  double total = 0.0;
  for (double l : losses) total += l;
  const double mean = total / static_cast<double>(losses.size());
  if (g.format == "table") {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < corpus.size(); ++i) rows.push_back({corpus[i].id, Fixed2(losses[i])});
    rows.push_back({"mean", Fixed2(mean)});
    std::cout << Table({"id", "loss"}, rows);
  } else {
    json per = json::array();
    for (std::size_t i = 0; i < corpus.size(); ++i) per.push_back({{"id", corpus[i].id}, {"loss", losses[i]}});
    std::cout << DumpJson({{"objective", ToString(objective)}, {"mean", mean}, {"sentences", per}});
  }
  return kExitOk;
}

struct MetricsArgs {
  bool repetition = false;
  bool bleu = false;
  int nmin = 2;
  int nmax = 10;
  std::string field = "hyp";
  std::string input;
};

int RunMetrics(const MetricsArgs& a, const Globals& g, RunIo& io) {
  Vocabulary vocab = OpenVocabulary({a.input});
  Corpus corpus = LoadCorpus(a.input, vocab, io);
  if (corpus.empty()) throw DataError("metrics: empty corpus");
  const bool all = !a.repetition && !a.bleu;
  std::vector<TokenSequence> hyps = Field(corpus, a.field, "metrics");
  json out = json::object();
  out["sentences"] = corpus.size();
  std::vector<std::vector<std::string>> rows;
  if (a.repetition || all) {
    RepetitionReport rep = MakeRepetitionReport(hyps, a.nmin, a.nmax);
    out["repetition"] = {{"unigram_ratio", rep.unigram_ratio}, {"ngram_counts", CountsJson(rep.ngram_counts)}};
    rows.push_back({"unigram repetition %", Fixed2(rep.unigram_ratio)});
    for (const auto& [n, c] : rep.ngram_counts) rows.push_back({"repeated " + std::to_string(n) + "-grams", std::to_string(c)});
  }
  const bool have_refs = std::all_of(corpus.begin(), corpus.end(), [](const auto& e) { return e.reference.has_value(); });
  if (a.bleu || (all && have_refs)) {
    if (a.field == "ref") throw UsageError("metrics: --bleu needs a hypothesis field other than ref");
    const double bleu = CorpusBleu(hyps, Field(corpus, "ref", "metrics --bleu"));
    out["bleu"] = bleu;
    rows.push_back({"BLEU", Fixed2(bleu)});
  }
  if (g.format == "table") {
    std::cout << Table({"metric", "value"}, rows);
  } else {
    std::cout << DumpJson(out);
  }
  return kExitOk;
}

struct MqmArgs {
  std::vector<std::string> inputs;
  bool per100 = false;
};

int RunMqm(const MqmArgs& a, const Globals& g, RunIo& io) {
  json files = json::object();
  std::vector<std::vector<std::string>> rows;
  const MqmWeights weights;
  for (const auto& path : a.inputs) {
    io.inputs.push_back(path);
    std::istringstream in(ReadFile(path));
    std::vector<MqmAnnotation> ann = ReadMqmAnnotations(in);
    std::map<std::string, double> per_segment;
    for (const auto& x : ann) per_segment[x.id] += weights.WeightOf(x);
    const double score = MqmScore(ann, weights);
    json entry = {{"score", score}, {"annotations", ann.size()}, {"segments", per_segment.size()},
                  {"per_segment", per_segment}};
    std::vector<std::string> row = {path, Fixed2(score), std::to_string(ann.size())};
    if (a.per100) {
      const double v = per_segment.empty() ? 0.0 : 100.0 * score / static_cast<double>(per_segment.size());
      entry["per_100_segments"] = v;
      row.push_back(Fixed2(v));
    }
    files[path] = entry;
    rows.push_back(row);
  }
  if (g.format == "table") {
    std::vector<std::string> header = {"file", "score", "errors"};
    if (a.per100) header.push_back("per 100 segments");
    std::cout << Table(header, rows);
  } else {
    std::cout << DumpJson({{"weights",
                            {{"major_non_translation", weights.major_non_translation},
                             {"major_other", weights.major_other},
                             {"minor_fluency_punctuation", weights.minor_fluency_punctuation},
                             {"minor_other", weights.minor_other}}},
                           {"files", files}});
  }
  return kExitOk;
}

struct PerturbArgs {
  std::string mode = "delete";
  double p = 0.1;
  int window = 0;
  bool symmetric = false;
  std::string field = "src";
  std::string input;
  std::string output;
};

int RunPerturb(const PerturbArgs& a, const Globals& g, RunIo& io) {
  PerturbSpec spec;
  spec.mode = ParsePerturbMode(a.mode);
  spec.p = a.p;
  spec.window = a.window;
  spec.seed = g.seed;
  spec.symmetric = a.symmetric;
  try {
    spec.Check();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Vocabulary vocab = OpenVocabulary({a.input});
  Corpus corpus = LoadCorpus(a.input, vocab, io);
  json meta = json::parse(spec.ToJson());
  meta["field"] = a.field;
  std::vector<std::string> lines(corpus.size());
  ParallelFor(corpus.size(), g.threads, [&](std::size_t i) {
    CorpusEntry e = corpus[i];
    if (a.field == "src") {
      e.source = Perturb(e.source, spec, e.id);
    } else {
      auto& slot = a.field == "hyp" ? e.hypothesis : e.reference;
      if (!slot) throw DataError("perturb: entry '" + e.id + "' has no \"" + a.field + "\"");
      *slot = Perturb(*slot, spec, e.id);
    }
    json line = json::parse(CorpusLineJson(e, vocab));
    line["perturb"] = meta;
    lines[i] = line.dump() + "\n";
  });
  std::string text;
  for (const auto& l : lines) text += l;
  Emit(a.output, text, io);
  return kExitOk;
}

struct GradcheckArgs {
  bool all = false;
  std::vector<std::string> objectives;
  double step = 1e-5;
  double threshold = 1e-4;
  double floor = 1e-6;
  bool fixed_floor = false;
  int instances = 20;
  int coords = 24;
};

int RunGradcheck(const GradcheckArgs& a, const Globals& g, RunIo&) {
  std::vector<Objective> objectives;
  if (a.all || a.objectives.empty()) {
    objectives = AllObjectives();
  } else {
    for (const auto& name : a.objectives) objectives.push_back(ParseObjective(name));
  }
  if (!(a.step > 0.0)) throw UsageError("gradcheck: --step must be positive");
  ModelConfig mc;
  mc.vocab_size = 10;
  mc.hidden = 6;
  mc.ff = 8;
  mc.max_source_len = 5;
  mc.upsample = 3;
  mc.max_offset = 4;
  mc.dat_star = true;
  TaskSpec spec;
  spec.vocab_size = mc.vocab_size;
  spec.min_len = 1;
  spec.max_len = 4;
  spec.pairs = a.instances;
  ObjectiveOptions oo;
  oo.ctc_upsample = 2;
  oo.dat_upsample = 3;
  oo.mgmo_samples = 4;
  oo.add_length_loss = true;
  GradCheckOptions gc;
  gc.step = a.step;
  gc.threshold = a.threshold;
  gc.floor = a.floor;
  gc.resolution_floor = !a.fixed_floor;
  gc.coords_per_block = a.coords;

  json results = json::array();
  std::vector<std::vector<std::string>> rows;
  bool all_pass = true;
  for (Objective obj : objectives) {
    Rng rng = Rng::ForStream(g.seed, std::string("gradcheck/") + ToString(obj));
    Corpus instances = MakeToyTask(spec, rng);
    double worst = 0.0;
    int failed = 0;
    std::map<std::string, double> block_worst;
    std::vector<GradCheckReport> reports(instances.size());
    ParallelFor(instances.size(), g.threads, [&](std::size_t i) {
      Rng init_rng = Rng::ForStream(g.seed, std::string("gradcheck/init/") + ToString(obj) + "/" + std::to_string(i));
      ModelParams params = ModelParams::Init(mc, init_rng);
      GradCheckOptions opt = gc;
      opt.seed = g.seed + i;
      reports[i] = GradCheck(obj, params, instances[i], opt, oo);
    });
    for (const auto& rep : reports) {
      worst = std::max(worst, rep.max_rel_error);
      if (!rep.passed) ++failed;
      for (const auto& b : rep.blocks) block_worst[b.block] = std::max(block_worst[b.block], b.max_rel_error);
    }
    all_pass = all_pass && failed == 0;
    results.push_back({{"objective", ToString(obj)},
                       {"instances", instances.size()},
                       {"failed", failed},
                       {"max_rel_error", worst},
                       {"blocks", block_worst},
                       {"passed", failed == 0}});
    std::ostringstream err;
    err << std::scientific << std::setprecision(2) << worst;
    rows.push_back({ToString(obj), std::to_string(instances.size()), err.str(), failed == 0 ? "pass" : "FAIL"});
  }
  if (g.format == "table") {
    std::cout << Table({"objective", "instances", "max rel err", "status"}, rows);
  } else {
    std::cout << DumpJson({{"step", a.step}, {"threshold", a.threshold}, {"floor", a.floor},
                           {"resolution_floor", !a.fixed_floor}, {"objectives", results}, {"passed", all_pass}});
  }
  return all_pass ? kExitOk : kExitCheckFailed;
}

struct CompareArgs {
  std::vector<std::string> methods;  // name=path
  std::string ref;
  int nmin = 2;
  int nmax = 4;
};

int RunCompare(const CompareArgs& a, const Globals& g, RunIo& io) {
  if (a.methods.size() < 2) throw UsageError("compare: give at least two --method name=path");
  std::vector<std::pair<std::string, std::string>> named;
  std::vector<std::string> paths;
  for (const auto& m : a.methods) {
    auto eq = m.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == m.size()) {
      throw UsageError("compare: --method expects name=path, got '" + m + "'");
    }
    named.emplace_back(m.substr(0, eq), m.substr(eq + 1));
    paths.push_back(m.substr(eq + 1));
  }
  if (!a.ref.empty()) paths.push_back(a.ref);
  Vocabulary vocab = OpenVocabulary(paths);

  std::vector<Corpus> corpora;
  for (const auto& [name, path] : named) corpora.push_back(LoadCorpus(path, vocab, io));
  std::map<std::string, TokenSequence> ref_by_id;
  if (!a.ref.empty()) {
    for (const auto& e : LoadCorpus(a.ref, vocab, io)) {
      if (!e.reference) throw DataError("compare: reference file entry '" + e.id + "' has no \"ref\"");
      ref_by_id[e.id] = *e.reference;
    }
  } else {
    for (const auto& e : corpora[0]) {
      if (!e.reference) throw DataError("compare: entry '" + e.id + "' has no \"ref\" and no --ref was given");
      ref_by_id[e.id] = *e.reference;
    }
  }
  // Every corpus must cover exactly the reference ids.
  for (std::size_t c = 0; c < corpora.size(); ++c) {
    std::set<std::string> ids;
    std::vector<std::string> bad;
    for (const auto& e : corpora[c]) {
      ids.insert(e.id);
      if (!ref_by_id.count(e.id)) bad.push_back(e.id);
    }
    for (const auto& [id, r] : ref_by_id) {
      if (!ids.count(id)) bad.push_back(id);
    }
    if (!bad.empty()) {
      std::sort(bad.begin(), bad.end());
      std::string list;
      for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 10); ++i) list += (i ? ", " : "") + bad[i];
      if (bad.size() > 10) list += ", ... (" + std::to_string(bad.size()) + " in total)";
      throw DataError("compare: method '" + named[c].first + "' is misaligned with the references; ids: " + list);
    }
  }

  json methods = json::array();
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"method", "BLEU", "rep %"};
  for (int n = a.nmin; n <= a.nmax; ++n) header.push_back(std::to_string(n) + "-gram reps");
  for (std::size_t c = 0; c < corpora.size(); ++c) {
    std::vector<TokenSequence> hyps, refs;
    for (const auto& e : corpora[c]) {
      if (!e.hypothesis) throw DataError("compare: entry '" + e.id + "' of '" + named[c].first + "' has no \"hyp\"");
      hyps.push_back(*e.hypothesis);
      refs.push_back(ref_by_id.at(e.id));
    }
    const double bleu = CorpusBleu(hyps, refs);
    RepetitionReport rep = MakeRepetitionReport(hyps, a.nmin, a.nmax);
    methods.push_back({{"method", named[c].first},
                       {"bleu", bleu},
                       {"repetition_ratio", rep.unigram_ratio},
                       {"ngram_counts", CountsJson(rep.ngram_counts)}});
    std::vector<std::string> row = {named[c].first, Fixed2(bleu), Fixed2(rep.unigram_ratio)};
    for (const auto& [n, cnt] : rep.ngram_counts) row.push_back(std::to_string(cnt));
    rows.push_back(row);
  }
  std::vector<TokenSequence> all_refs;
  for (const auto& [id, r] : ref_by_id) all_refs.push_back(r);
  RepetitionReport ref_rep = MakeRepetitionReport(all_refs, a.nmin, a.nmax);
  std::vector<std::string> ref_row = {"(reference)", "", Fixed2(ref_rep.unigram_ratio)};
  for (const auto& [n, cnt] : ref_rep.ngram_counts) ref_row.push_back(std::to_string(cnt));
  rows.push_back(ref_row);
  if (g.format == "table") {
    std::cout << Table(header, rows);
  } else {
    std::cout << DumpJson({{"sentences", ref_by_id.size()},
                           {"methods", methods},
                           {"reference",
                            {{"repetition_ratio", ref_rep.unigram_ratio}, {"ngram_counts", CountsJson(ref_rep.ngram_counts)}}}});
  }
  return kExitOk;
}

// ---- manifest ------------------------------------------------------------

json OptionSnapshot(const CLI::App* sub) {
  json config = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
    const std::string key = opt->get_name();
    auto results = opt->results();
    if (opt->count() == 0) {
      config[key] = opt->get_default_str();
    } else if (results.size() == 1) {
      config[key] = results[0];
    } else {
      config[key] = results;
    }
  }
  return config;
}

json DigestMap(const std::vector<std::string>& paths) {
  json d = json::object();
  for (const auto& p : paths) d[p] = Hex64(Fnv1a64(ReadFile(p)));
  return d;
}

void WriteManifest(const std::vector<std::string>& args, const CLI::App* sub, const Globals& g, const RunIo& io,
                   double seconds, int exit_code) {
  json m = {{"command", sub->get_name()},
            {"argv", args},
            {"config", OptionSnapshot(sub)},
            {"seed", g.seed},
            {"threads", g.threads},
            {"format", g.format},
            {"inputs", io.inputs},
            {"outputs", io.outputs},
            {"output_digests", DigestMap(io.outputs)},
            {"toolkit_version", kVersion},
            {"exit_code", exit_code},
            {"wall_clock_seconds", seconds}};
  std::string path = g.manifest;
  if (path.empty() && !io.outputs.empty()) path = io.outputs.front() + ".manifest.json";
  if (path.empty()) {
    std::cerr << "manifest: " << m.dump() << "\n";
  } else {
    WriteFile(path, m.dump(2) + "\n");
  }
}

int Dispatch(const std::vector<std::string>& args);

int RunReplay(const std::string& manifest_path) {
  json m;
  try {
    m = json::parse(ReadFile(manifest_path));
  } catch (const json::exception& e) {
    throw DataError("manifest '" + manifest_path + "': " + e.what());
  }
  if (!m.contains("argv") || !m.contains("output_digests")) throw DataError("manifest lacks argv/output_digests");
  auto args = m["argv"].get<std::vector<std::string>>();
  if (!args.empty() && args.front() == "replay") throw DataError("manifest records a replay; refusing to recurse");
  const int code = Dispatch(args);
  if (code != m.value("exit_code", 0)) {
    std::cerr << "replay: exit code " << code << " differs from recorded " << m.value("exit_code", 0) << "\n";
    return kExitCheckFailed;
  }
  bool same = true;
  for (const auto& [path, digest] : m["output_digests"].items()) {
    const std::string now = Hex64(Fnv1a64(ReadFile(path)));
    if (now != digest.get<std::string>()) {
      std::cerr << "replay: " << path << " differs (" << now << " vs " << digest.get<std::string>() << ")\n";
      same = false;
    }
  }
  std::cerr << (same ? "replay: outputs identical\n" : "replay: outputs differ\n");
  return same ? kExitOk : kExitCheckFailed;
}

int Dispatch(const std::vector<std::string>& args) {
  CLI::App app{"natkit: non-autoregressive translation objectives, decoders and diagnostics"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for per-sentence work")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Output format")->capture_default_str()->check(CLI::IsMember({"json", "table"}));
  app.add_option("--manifest", g.manifest, "Run manifest path (default: <first output>.manifest.json)");

  RunIo io;
  std::function<int()> run;
  const auto objectives = CLI::IsMember({"at", "nat", "length", "ctc", "dat", "dat_star", "dat-star", "cmlm", "mgmo"});

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the toy model on a synthetic task or a corpus");
  train->add_option("--task", ta.task, "copy | reverse | multimodal_lexicon")
      ->capture_default_str()
      ->check(CLI::IsMember({"copy", "reverse", "multimodal_lexicon", "multimodal-lexicon"}));
  train->add_option("--vocab-size", ta.vocab_size, "Vocabulary size including reserved tokens")->capture_default_str();
  train->add_option("--min-len", ta.min_len)->capture_default_str();
  train->add_option("--max-len", ta.max_len)->capture_default_str();
  train->add_option("--pairs", ta.pairs)->capture_default_str();
  train->add_option("--corpus", ta.corpus, "Train on this JSONL corpus instead of a generated task");
  train->add_option("--vocab", ta.vocab, "Vocabulary file for --corpus");
  train->add_option("--init", ta.init, "Start from this model");
  train->add_option("--write-corpus", ta.write_corpus, "Save the generated task corpus");
  train->add_option("--objective", ta.objective, "at | nat | length | ctc | dat | dat_star | cmlm | mgmo")
      ->capture_default_str()
      ->check(objectives);
  train->add_option("--lr", ta.lr)->capture_default_str();
  train->add_option("--epochs", ta.epochs)->capture_default_str();
  train->add_option("--batch", ta.batch)->capture_default_str();
  train->add_option("--clip", ta.clip, "Global gradient norm bound, <= 0 disables")->capture_default_str();
  train->add_option("--hidden", ta.hidden)->capture_default_str();
  train->add_option("--ff", ta.ff)->capture_default_str();
  train->add_option("--max-source-len", ta.max_source_len)->capture_default_str();
  train->add_option("--upsample", ta.upsample, "Position table size factor")->capture_default_str();
  train->add_option("--max-offset", ta.max_offset)->capture_default_str();
  train->add_option("--ctc-upsample", ta.ctc_upsample)->capture_default_str();
  train->add_option("--dat-upsample", ta.dat_upsample)->capture_default_str();
  train->add_option("--mgmo-samples", ta.mgmo_samples)->capture_default_str();
  train->add_option("--mgmo-alpha", ta.mgmo_alpha)->capture_default_str();
  train->add_flag("--length-loss", ta.length_loss, "Also train the length head (nat, cmlm, mgmo)");
  train->add_flag("--no-uniform-copy", ta.no_uniform_copy, "Mean-pooled source only");
  train->add_flag("--dat-star", ta.dat_star, "Allocate the DAT* transition layers");
  train->add_option("--out", ta.out, "Model JSON output")->required();
  train->callback([&] { run = [&] { return RunTrain(ta, g, io); }; });

  DecodeArgs da;
  auto* decode = app.add_subcommand("decode", "Decode a corpus with a trained model");
  decode->add_option("--model", da.model)->required();
  decode->add_option("--vocab", da.vocab, "Vocabulary file (default: toy vocabulary)");
  decode->add_option("--method", da.method, "at | nat | ctc | dat | dat-star | cmlm")
      ->capture_default_str()
      ->check(CLI::IsMember({"at", "nat", "ctc", "dat", "dat-star", "dat_star", "cmlm"}));
  decode->add_option("--strategy", da.strategy,
                     "at: greedy|beam; ctc: greedy|prefix-beam; dat: greedy|lookahead|viterbi|beam");
  decode->add_option("--beam", da.beam)->capture_default_str()->check(CLI::PositiveNumber);
  decode->add_option("--iterations", da.iterations, "CMLM mask-predict iterations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  decode->add_option("--ctc-upsample", da.ctc_upsample)->capture_default_str();
  decode->add_option("--dat-upsample", da.dat_upsample)->capture_default_str();
  decode->add_option("--max-len", da.max_len)->capture_default_str();
  decode->add_option("input", da.input)->required();
  decode->add_option("output", da.output, "Output JSONL (default: stdout)");
  decode->callback([&] { run = [&] { return RunDecode(da, g, io); }; });

  LossArgs la;
  auto* loss = app.add_subcommand("loss", "Score a corpus under an objective");
  loss->add_option("--model", la.model)->required();
  loss->add_option("--vocab", la.vocab);
  loss->add_option("--objective", la.objective)->capture_default_str()->check(objectives);
  loss->add_option("--ctc-upsample", la.ctc_upsample)->capture_default_str();
  loss->add_option("--dat-upsample", la.dat_upsample)->capture_default_str();
  loss->add_option("--mgmo-samples", la.mgmo_samples)->capture_default_str();
  loss->add_option("--mgmo-alpha", la.mgmo_alpha)->capture_default_str();
  loss->add_flag("--length-loss", la.length_loss);
  loss->add_option("input", la.input)->required();
  loss->callback([&] { run = [&] { return RunLoss(la, g, io); }; });

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "Repetition report and corpus BLEU");
  metrics->add_flag("--repetition", ma.repetition);
  metrics->add_flag("--bleu", ma.bleu);
  metrics->add_option("--nmin", ma.nmin)->capture_default_str();
  metrics->add_option("--nmax", ma.nmax)->capture_default_str();
  metrics->add_option("--field", ma.field, "Sequence to analyse")
      ->capture_default_str()
      ->check(CLI::IsMember({"src", "hyp", "ref"}));
  metrics->add_option("input", ma.input)->required();
  metrics->callback([&] { run = [&] { return RunMetrics(ma, g, io); }; });

  MqmArgs qa;
  auto* mqm = app.add_subcommand("mqm", "Score MQM annotation files");
  mqm->add_flag("--per-100", qa.per100, "Also report the score per 100 annotated segments");
  mqm->add_option("inputs", qa.inputs)->required();
  mqm->callback([&] { run = [&] { return RunMqm(qa, g, io); }; });

  PerturbArgs pa;
  auto* perturb = app.add_subcommand("perturb", "Emit a noisy copy of a corpus");
  perturb->add_option("--mode", pa.mode, "delete | replace_unk | swap")
      ->capture_default_str()
      ->check(CLI::IsMember({"delete", "replace_unk", "replace-unk", "unk", "swap"}));
  perturb->add_option("--p", pa.p)->capture_default_str();
  perturb->add_option("--window", pa.window, "Swap distance bound")->capture_default_str();
  perturb->add_flag("--symmetric", pa.symmetric, "Swap partners on both sides");
  perturb->add_option("--field", pa.field)->capture_default_str()->check(CLI::IsMember({"src", "hyp", "ref"}));
  perturb->add_option("input", pa.input)->required();
  perturb->add_option("output", pa.output, "Output JSONL (default: stdout)");
  perturb->callback([&] { run = [&] { return RunPerturb(pa, g, io); }; });

  GradcheckArgs ga;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every objective gradient");
  gradcheck->add_flag("--all", ga.all);
  gradcheck->add_option("--objective", ga.objectives, "Repeatable")->check(objectives);
  gradcheck->add_option("--step", ga.step)->capture_default_str();
  gradcheck->add_option("--threshold", ga.threshold)->capture_default_str();
  gradcheck->add_option("--floor", ga.floor, "Relative error denominator floor")->capture_default_str();
  gradcheck->add_flag("--fixed-floor", ga.fixed_floor, "Do not raise the floor to the finite-difference resolution");
  gradcheck->add_option("--instances", ga.instances)->capture_default_str()->check(CLI::PositiveNumber);
  gradcheck->add_option("--coords", ga.coords, "Coordinates per parameter block")->capture_default_str();
  gradcheck->callback([&] { run = [&] { return RunGradcheck(ga, g, io); }; });

  CompareArgs ca;
  auto* compare = app.add_subcommand("compare", "Side-by-side BLEU and repetition for decoded corpora");
  compare->add_option("--method", ca.methods, "name=path, at least two")->required();
  compare->add_option("--ref", ca.ref, "Reference corpus (default: ref field of the first method)");
  compare->add_option("--nmin", ca.nmin)->capture_default_str();
  compare->add_option("--nmax", ca.nmax)->capture_default_str();
  compare->callback([&] { run = [&] { return RunCompare(ca, g, io); }; });

  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and verify its outputs");
  replay->add_option("manifest", replay_path)->required();
  replay->callback([&] { run = [&] { return RunReplay(replay_path); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const auto start = std::chrono::steady_clock::now();
  int code = kExitOk;
  try {
    code = run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << sub->help();
    return kExitUsage;
  } catch (const TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = kExitData;
  }
  if (sub->get_name() != "replay") {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
      WriteManifest(args, sub, g, io, seconds, code);
    } catch (const std::exception& e) {
      std::cerr << "error: manifest: " << e.what() << "\n";
      if (code == kExitOk) code = kExitData;
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return Dispatch(args);
}
