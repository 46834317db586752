// Copyright 2026 The TaxoForge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// End-to-end construction run: relation learning, root discovery, first-layer
// expansion, subtopic extraction, concept learning, Topic-Type co-clustering
// and export. Every stage leaves its artifacts in the output directory.

#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taxoforge/clustering.hpp"
#include "taxoforge/common.hpp"
#include "taxoforge/corpus.hpp"
#include "taxoforge/embedding.hpp"
#include "taxoforge/eval.hpp"
#include "taxoforge/relation.hpp"
#include "taxoforge/remote_scorer.hpp"
#include "taxoforge/taxonomy.hpp"

namespace taxoforge {

inline constexpr std::string_view kScorerUrlEnv = "TAXOFORGE_SCORER_URL";

class ConfigError : public Error {
 public:
  using Error::Error;
};

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage " + stage + " failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class ScorerBackend { kHeuristic, kOracle, kRemote };

inline std::string_view to_string(ScorerBackend b) {
  switch (b) {
    case ScorerBackend::kHeuristic: return "heuristic";
    case ScorerBackend::kOracle: return "oracle";
    case ScorerBackend::kRemote: return "remote";
  }
  return "?";
}

struct ScorerConfig {
  ScorerBackend backend = ScorerBackend::kHeuristic;
  std::string address = "http://127.0.0.1:8000";
  std::filesystem::path oracle_table;
  // Run by train-scorer for the remote backend; "{samples}" is replaced by
  // the training sample file path.
  std::string train_command;
  std::size_t max_batch = 256;
  RetryPolicy retry;
};

inline constexpr double kDefaultMeaningPreference = 0.8;
inline constexpr std::size_t kDefaultPipelineEpochs = 30;

struct ClusteringConfig {
  ApParams ap;
  // AP preferences; nullopt uses the median off-diagonal similarity. The
  // median always merges the closest pair of a small pool, so meaning
  // clusters default to an absolute cosine: candidates merge only when they
  // are near-synonyms.
  std::optional<double> meaning_preference = kDefaultMeaningPreference;
  std::optional<double> type_preference;
  std::size_t restarts = 10;
  std::size_t max_mentions = 50;
  bool topical_constraint = true;
};

struct RunConfig {
  std::filesystem::path corpus;
  std::filesystem::path seed_taxonomy;
  std::filesystem::path output_dir = "taxoforge-out";
  std::filesystem::path gold;
  std::filesystem::path synonyms;
  std::size_t min_count = kDefaultMinCount;
  ScorerConfig scorer;
  double relation_threshold = kDefaultRelationThreshold;
  double kl_threshold = kDefaultKlThreshold;
  double consistency_threshold = kDefaultConsistencyThreshold;
  std::size_t statement_cap = kDefaultStatementCap;
  std::size_t min_cooccur = kDefaultMinCooccur;
  std::size_t max_roots = kDefaultMaxRoots;
  std::optional<std::size_t> random_negatives;
  // Pipeline runs train longer than the library default; sibling candidates
  // stay near-parallel on small corpora after only a few epochs.
  TrainingConfig embedding = [] {
    TrainingConfig t;
    t.epochs = kDefaultPipelineEpochs;
    return t;
  }();
  ClusteringConfig clustering;
  std::size_t layers = 2;
  std::size_t top_k = kDefaultTopK;
  std::size_t workers = 1;
  std::uint64_t seed = 1;

  void validate(bool check_paths = true) const {
    auto unit = [](double v, const char* what) {
      if (!(v > 0.0 && v <= 1.0)) throw ConfigError(std::string(what) + " must be in (0, 1]");
    };
    unit(relation_threshold, "thresholds.relation");
    unit(kl_threshold, "thresholds.kl");
    unit(consistency_threshold, "thresholds.consistency");
    if (embedding.margin < 0) throw ConfigError("thresholds.margin must be non-negative");
    if (min_count < 1) throw ConfigError("min_count must be at least 1");
    if (statement_cap < 1) throw ConfigError("relation.statement_cap must be at least 1");
    if (max_roots < 1) throw ConfigError("relation.max_roots must be at least 1");
    if (layers < 1) throw ConfigError("layers must be at least 1");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (clustering.restarts < 1) throw ConfigError("clustering.restarts must be at least 1");
    if (!(clustering.ap.damping >= 0.5 && clustering.ap.damping < 1.0)) {
      throw ConfigError("clustering.damping must be in [0.5, 1)");
    }
    if (clustering.ap.max_iter < 1) throw ConfigError("clustering.max_iter must be at least 1");
    if (scorer.retry.retries < 0) throw ConfigError("scorer.retries must be non-negative");
    if (scorer.max_batch < 1) throw ConfigError("scorer.max_batch must be at least 1");
    try {
      embedding.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("embedding: ") + e.what());
    }
    if (scorer.backend == ScorerBackend::kOracle && scorer.oracle_table.empty()) {
      throw ConfigError("scorer.oracle_table is required for the oracle backend");
    }
    if (scorer.backend == ScorerBackend::kRemote) {
      try {
        (void)Endpoint::parse(scorer.address);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    }
    if (!check_paths) return;
    auto exists = [](const std::filesystem::path& p, const char* what) {
      if (p.empty()) throw ConfigError(std::string(what) + " is not set");
      if (!std::filesystem::exists(p)) throw ConfigError(std::string(what) + " does not exist: " + p.string());
    };
    exists(corpus, "corpus");
    exists(seed_taxonomy, "seed_taxonomy");
    if (scorer.backend == ScorerBackend::kOracle) exists(scorer.oracle_table, "scorer.oracle_table");
    if (!gold.empty()) exists(gold, "gold");
    if (!synonyms.empty()) exists(synonyms, "synonyms");
  }
};

namespace detail {

// Reads a JSON object field by field and rejects keys nobody asked for.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config " + where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_[key].is_null()) return;
    try {
      out = j_[key].get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key " + qualified(key) + " has the wrong type");
    }
  }

  void get_path(const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s;
  }

  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_[key].is_null()) return;
    try {
      out = j_[key].get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key " + qualified(key) + " has the wrong type");
    }
  }

  // Preference values: "median" or a number.
  void get_preference(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_[key].is_null()) return;
    const auto& v = j_[key];
    if (v.is_string() && v.get<std::string>() == "median") {
      out.reset();
    } else if (v.is_number()) {
      out = v.get<double>();
    } else {
      throw ConfigError("config key " + qualified(key) + " must be \"median\" or a number");
    }
  }

  ConfigReader child(const char* key) {
    seen_.insert(key);
    static const nlohmann::json kEmpty = nlohmann::json::object();
    return ConfigReader(j_.contains(key) ? j_[key] : kEmpty, qualified(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown config key " + qualified(k.c_str()));
    }
  }

 private:
  std::string where() const { return path_.empty() ? "root" : path_; }
  std::string qualified(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

// Relative paths resolve against `base_dir` (the config file's directory).
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  detail::ConfigReader r(j, "");
  r.get_path("corpus", c.corpus, base_dir);
  r.get_path("seed_taxonomy", c.seed_taxonomy, base_dir);
  r.get_path("output_dir", c.output_dir, base_dir);
  r.get_path("gold", c.gold, base_dir);
  r.get_path("synonyms", c.synonyms, base_dir);
  r.get("min_count", c.min_count);
  r.get("layers", c.layers);
  r.get("top_k", c.top_k);
  r.get("workers", c.workers);
  r.get("seed", c.seed);
  c.embedding.seed = c.seed;

  auto s = r.child("scorer");
  std::string backend = "heuristic";
  s.get("backend", backend);
  if (backend == "heuristic") c.scorer.backend = ScorerBackend::kHeuristic;
  else if (backend == "oracle") c.scorer.backend = ScorerBackend::kOracle;
  else if (backend == "remote") c.scorer.backend = ScorerBackend::kRemote;
  else throw ConfigError("scorer.backend must be heuristic, oracle or remote");
  s.get("address", c.scorer.address);
  s.get_path("oracle_table", c.scorer.oracle_table, base_dir);
  s.get("train_command", c.scorer.train_command);
  s.get("max_batch", c.scorer.max_batch);
  s.get("retries", c.scorer.retry.retries);
  int backoff_ms = static_cast<int>(c.scorer.retry.initial_backoff.count());
  s.get("backoff_ms", backoff_ms);
  c.scorer.retry.initial_backoff = std::chrono::milliseconds(backoff_ms);
  int timeout_s = static_cast<int>(c.scorer.retry.timeout.count());
  s.get("timeout_s", timeout_s);
  c.scorer.retry.timeout = std::chrono::seconds(timeout_s);
  s.finish();

  auto t = r.child("thresholds");
  t.get("relation", c.relation_threshold);
  t.get("kl", c.kl_threshold);
  t.get("consistency", c.consistency_threshold);
  t.get("margin", c.embedding.margin);
  t.finish();

  auto rel = r.child("relation");
  rel.get("statement_cap", c.statement_cap);
  rel.get("min_cooccur", c.min_cooccur);
  rel.get("max_roots", c.max_roots);
  rel.get_optional("random_negatives", c.random_negatives);
  rel.finish();

  auto e = r.child("embedding");
  e.get("dim", c.embedding.dim);
  e.get("window", c.embedding.window);
  e.get("negatives", c.embedding.negatives);
  e.get("lambda_l", c.embedding.weights.local);
  e.get("lambda_d", c.embedding.weights.document);
  e.get("lambda_p", c.embedding.weights.proximity);
  e.get("lr_start", c.embedding.lr_start);
  e.get("lr_end", c.embedding.lr_end);
  e.get("epochs", c.embedding.epochs);
  e.get("deterministic", c.embedding.deterministic);
  e.get("threads", c.embedding.threads);
  e.get("seed", c.embedding.seed);
  e.finish();

  auto cl = r.child("clustering");
  cl.get("damping", c.clustering.ap.damping);
  cl.get("max_iter", c.clustering.ap.max_iter);
  cl.get("convergence_iter", c.clustering.ap.convergence_iter);
  cl.get_preference("meaning_preference", c.clustering.meaning_preference);
  cl.get_preference("type_preference", c.clustering.type_preference);
  cl.get("restarts", c.clustering.restarts);
  cl.get("max_mentions", c.clustering.max_mentions);
  cl.get("topical_constraint", c.clustering.topical_constraint);
  cl.finish();
  r.finish();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

// TAXOFORGE_SCORER_URL replaces the scorer address when set and non-empty.
inline void apply_environment(RunConfig& config, const char* (*getenv_fn)(const char*) = nullptr) {
  const char* v = getenv_fn ? getenv_fn(kScorerUrlEnv.data()) : std::getenv(kScorerUrlEnv.data());
  if (v && *v) config.scorer.address = v;
}


// Stages in execution order. Subcommands run every stage up to theirs.
enum class Stage {
  kIngest,
  kLoadSeed,
  kBuildRelset,
  kTrainScorer,
  kDiscoverRoots,
  kExpand,
  kSubtopics,
  kTrainEmbed,
  kCluster,
  kExport,
};

inline std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kIngest: return "ingest";
    case Stage::kLoadSeed: return "load-seed";
    case Stage::kBuildRelset: return "build-relset";
    case Stage::kTrainScorer: return "train-scorer";
    case Stage::kDiscoverRoots: return "discover-roots";
    case Stage::kExpand: return "expand";
    case Stage::kSubtopics: return "subtopics";
    case Stage::kTrainEmbed: return "train-embed";
    case Stage::kCluster: return "cluster";
    case Stage::kExport: return "export";
  }
  return "?";
}

struct SubtopicGroup {
  std::string topic;
  std::vector<std::string> members;  // best relation score first
  double consistency = 0;
};

class Pipeline {
 public:
  explicit Pipeline(RunConfig config, std::ostream* log = nullptr) : config_(std::move(config)), log_(log) {
    config_.validate();
    report_["config"] = config_summary();
    report_["stages"] = nlohmann::ordered_json::array();
  }

  const RunConfig& config() const { return config_; }
  const Corpus& corpus() const { return *corpus_; }
  const CorpusIndex& index() const { return *index_; }
  const Taxonomy& taxonomy() const { return tax_; }
  const nlohmann::ordered_json& report() const { return report_; }
  const std::string& exported() const { return exported_; }
  const std::optional<EmbeddingTable>& final_embedding() const { return final_table_; }

  // Runs every stage up to and including `last`; the report is written even
  // when a stage fails.
  void run_until(Stage last) {
    std::filesystem::create_directories(config_.output_dir);
    try {
      for (int s = 0; s <= static_cast<int>(last); ++s) run_stage(static_cast<Stage>(s));
    } catch (...) {
      write_report();
      throw;
    }
    write_report();
  }

  void run() { run_until(Stage::kExport); }

 private:
  // ---- stage dispatch -----------------------------------------------------

  void run_stage(Stage s) {
    switch (s) {
      case Stage::kIngest: return stage(s, [&](auto& r) { ingest(r); });
      case Stage::kLoadSeed: return stage(s, [&](auto& r) { load_seed(r); });
      case Stage::kBuildRelset: return stage(s, [&](auto& r) { build_relset(r); });
      case Stage::kTrainScorer: return stage(s, [&](auto& r) { train_scorer(r); });
      case Stage::kDiscoverRoots: return stage(s, [&](auto& r) { discover(r); });
      case Stage::kExpand: return stage(s, [&](auto& r) { expand(r); });
      // With layers == 1 only the first layer is built.
      case Stage::kSubtopics:
        layer_ = 2;
        if (config_.layers >= 2) stage(s, [&](auto& r) { subtopics(r); });
        return;
      case Stage::kTrainEmbed:
        if (config_.layers >= 2) stage(s, [&](auto& r) { train_embed(r); });
        return;
      case Stage::kCluster:
        if (config_.layers < 2) return;
        stage(s, [&](auto& r) { cluster(r); });
        // Recursive deepening repeats the three stages under the nodes just added.
        for (layer_ = 3; layer_ <= config_.layers; ++layer_) {
          stage(Stage::kSubtopics, [&](auto& r) { subtopics(r); });
          stage(Stage::kTrainEmbed, [&](auto& r) { train_embed(r); });
          stage(Stage::kCluster, [&](auto& r) { cluster(r); });
        }
        return;
      case Stage::kExport: return stage(s, [&](auto& r) { finish(r); });
    }
  }

  template <class F>
  void stage(Stage s, F&& body) {
    const auto started = std::chrono::steady_clock::now();
    nlohmann::ordered_json record;
    record["stage"] = std::string(stage_name(s));
    if (s == Stage::kSubtopics || s == Stage::kTrainEmbed || s == Stage::kCluster) record["layer"] = layer_;
    log("[" + std::string(stage_name(s)) + "] start");
    try {
      body(record);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      record["error"] = e.what();
      report_["stages"].push_back(record);
      report_["failed_stage"] = std::string(stage_name(s));
      throw StageError(std::string(stage_name(s)), e.what());
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    record["millis"] = ms.count();
    report_["stages"].push_back(record);
    log("[" + std::string(stage_name(s)) + "] done in " + std::to_string(ms.count()) + " ms");
  }

  // ---- stages -------------------------------------------------------------

  void ingest(nlohmann::ordered_json& r) {
    std::ifstream in(config_.corpus);
    if (!in) throw Error("cannot open corpus " + config_.corpus.string());
    corpus_ = std::make_unique<Corpus>(taxoforge::ingest(in, config_.min_count));
    index_ = std::make_unique<CorpusIndex>(*corpus_);
    r["documents"] = corpus_->documents.size();
    r["sentences"] = corpus_->sentences.size();
    r["vocabulary"] = corpus_->vocabulary.size();
    std::ofstream bin(out("corpus.bin"), std::ios::binary);
    save_corpus(*corpus_, bin);
    std::ofstream vocab(out("vocabulary.tsv"));
    for (std::size_t i = 0; i < corpus_->vocabulary.size(); ++i) {
      vocab << corpus_->vocabulary.term(TermId(i)) << '\t' << corpus_->vocabulary.count(TermId(i)) << '\n';
    }
  }

  void load_seed(nlohmann::ordered_json& r) {
    tax_ = load_seed_file(config_.seed_taxonomy);
    for (std::size_t i = 0; i < tax_.size(); ++i) {
      for (const auto& t : tax_.node(NodeId(i)).cluster) {
        if (!corpus_->vocabulary.find(t)) throw Error("seed term '" + t + "' is not in the corpus vocabulary");
      }
    }
    r["nodes"] = tax_.size();
    r["roots"] = tax_.roots().size();
    r["first_layer_topics"] = first_layer_topics(tax_).size();
    make_scorer();
  }

  void build_relset(nlohmann::ordered_json& r) {
    TrainingSetOptions opts;
    opts.statement_cap = config_.statement_cap;
    opts.random_negatives = config_.random_negatives;
    opts.seed = config_.seed;
    training_ = build_training_set(tax_, *index_, opts);
    r["training_samples"] = training_.samples.size();
    r["positives"] = training_.positives;
    r["sibling_negatives"] = training_.sibling_negatives;
    r["random_negatives"] = training_.random_negatives;
    r["warnings"] = training_.warnings;
    std::ofstream f(out("relset.jsonl"));
    write_training_samples(training_.samples, corpus_->vocabulary, f);
  }

  void train_scorer(nlohmann::ordered_json& r) {
    r["backend"] = std::string(to_string(config_.scorer.backend));
    if (config_.scorer.backend != ScorerBackend::kRemote) {
      r["skipped"] = "local backend needs no training";
      return;
    }
    if (!config_.scorer.train_command.empty()) {
      std::string cmd = config_.scorer.train_command;
      const std::string samples = out("relset.jsonl").string();
      for (auto p = cmd.find("{samples}"); p != std::string::npos; p = cmd.find("{samples}", p + samples.size())) {
        cmd.replace(p, 9, samples);
      }
      r["command"] = cmd;
      log("running: " + cmd);
      const int status = std::system(cmd.c_str());
      if (status != 0) throw Error("scorer training command exited with status " + std::to_string(status));
    }
    const auto health = remote_->health();
    r["model"] = health.model;
    r["dim"] = health.dim;
  }

  void discover(nlohmann::ordered_json& r) {
    const auto ctx = scoring_context();
    RootDiscoveryOptions opts{config_.relation_threshold, config_.min_cooccur, config_.max_roots};
    const bool single_root = tax_.roots().size() == 1 && !tax_.children(tax_.roots().front()).empty();
    std::vector<ScoredTerm> found;
    std::vector<ParentList> lists;
    try {
      auto d = discover_roots(ctx, tax_, opts);
      found = std::move(d.roots);
      lists = std::move(d.parent_lists);
    } catch (const NoCommonRootError& e) {
      if (!single_root) throw;
      lists = e.parent_lists();
      r["fallback"] = std::string("no common root found; using the seed root '") +
                      tax_.node(tax_.roots().front()).name + "'";
    } catch (const Error& e) {
      // Fewer than two first-layer topics: nothing to intersect.
      if (!single_root) throw;
      r["fallback"] = std::string(e.what()) + "; using the seed root";
    }
    const auto& vocab = corpus_->vocabulary;
    std::ofstream pl(out("parent_lists.tsv"));
    for (const auto& l : lists) {
      for (const auto& p : l.parents) pl << l.topic << '\t' << vocab.term(p.term) << '\t' << fixed(p.score) << '\n';
    }

    roots_.clear();
    if (found.empty()) {
      roots_.push_back(vocab.id(tax_.node(tax_.roots().front()).name));
    } else {
      for (const auto& f : found) roots_.push_back(f.term);
    }
    // A forest seed gets the best discovered root on top; other discovered
    // roots join the root's cluster.
    NodeId root_node = tax_.roots().front();
    if (!single_root && !found.empty()) {
      const auto& top = vocab.term(found.front().term);
      if (auto existing = tax_.find(top)) {
        root_node = *existing;
      } else {
        if (tax_.cluster_owner(top)) throw Error("discovered root '" + top + "' already sits in a seed cluster");
        root_node = tax_.reroot(top);
      }
    }
    nlohmann::ordered_json roots = nlohmann::ordered_json::array();
    std::ofstream rf(out("roots.tsv"));
    for (std::size_t i = 0; i < roots_.size(); ++i) {
      const auto& term = vocab.term(roots_[i]);
      const double score = found.empty() ? 1.0 : found[i].score;
      roots.push_back({{"term", term}, {"score", score}});
      rf << term << '\t' << fixed(score) << '\n';
      if (!tax_.find(term) && !tax_.cluster_owner(term)) tax_.add_to_cluster(root_node, term);
    }
    root_node_ = root_node;
    r["roots_found"] = found.size();
    r["roots"] = roots;
  }

  void expand(nlohmann::ordered_json& r) {
    const auto ctx = scoring_context();
    std::vector<TermId> pool;
    std::set<TermId> seen;
    for (TermId root : roots_) {
      for (TermId w : candidate_terms(*index_, root, config_.min_cooccur)) {
        if (seen.insert(w).second) pool.push_back(w);
      }
    }
    const auto kept = expand_first_layer(ctx, roots_, pool, tax_, config_.relation_threshold);
    const auto& vocab = corpus_->vocabulary;
    nlohmann::ordered_json attached = nlohmann::ordered_json::array();
    nlohmann::ordered_json dropped = nlohmann::ordered_json::array();
    std::ofstream f(out("first_layer.tsv"));
    for (const auto& k : kept) {
      const auto& term = vocab.term(k.term);
      f << term << '\t' << fixed(k.score) << '\n';
      if (auto owner = tax_.cluster_owner(term)) {
        dropped.push_back({{"term", term}, {"reason", "in the cluster of '" + tax_.node(*owner).name + "'"}});
        continue;
      }
      tax_.attach(root_node_, term);
      attached.push_back({{"term", term}, {"score", k.score}});
    }
    r["candidates_scored"] = pool.size();
    r["topics_attached"] = attached.size();
    r["attached"] = attached;
    r["dropped"] = dropped;
    r["transport_failures"] = failures_.entries().size();
    std::ofstream tf(out("expanded.json"));
    tf << dump_taxonomy(tax_);
  }

  // Nodes whose children this layer looks for.
  std::vector<NodeId> layer_parents() const { return tax_.nodes_at_depth(layer_ - 1); }

  void subtopics(nlohmann::ordered_json& r) {
    const auto ctx = scoring_context();
    SubtopicOptions opts{config_.relation_threshold, config_.min_cooccur};
    const auto& vocab = corpus_->vocabulary;
    // term -> (best topic, score); ties keep the earlier topic.
    std::map<TermId, std::pair<NodeId, double>> best;
    std::map<NodeId, std::vector<ScoredTerm>> raw;
    for (NodeId topic : layer_parents()) {
      raw[topic] = subtopic_candidates(ctx, tax_, topic, opts);
      for (const auto& c : raw[topic]) {
        auto it = best.find(c.term);
        if (it == best.end() || c.score > it->second.second) best[c.term] = {topic, c.score};
      }
    }
    candidates_.clear();
    nlohmann::ordered_json per_topic = nlohmann::ordered_json::object();
    nlohmann::ordered_json dropped = nlohmann::ordered_json::array();
    std::size_t total = 0;
    std::ofstream f(out("candidates_layer" + std::to_string(layer_) + ".tsv"));
    for (NodeId topic : layer_parents()) {
      auto& list = candidates_[topic];
      for (const auto& c : raw[topic]) {
        if (auto owner = tax_.cluster_owner(vocab.term(c.term))) {
          dropped.push_back({{"term", vocab.term(c.term)}, {"topic", tax_.node(topic).name},
                             {"reason", "already in the cluster of '" + tax_.node(*owner).name + "'"}});
          continue;
        }
        if (best[c.term].first != topic) {
          dropped.push_back({{"term", vocab.term(c.term)}, {"topic", tax_.node(topic).name},
                             {"reason", "scores higher under '" + tax_.node(best[c.term].first).name + "'"}});
          continue;
        }
        list.push_back(c);
        f << tax_.node(topic).name << '\t' << vocab.term(c.term) << '\t' << fixed(c.score) << '\n';
      }
      total += list.size();
      per_topic[tax_.node(topic).name] = list.size();
    }
    r["candidates_extracted"] = total;
    r["per_topic"] = per_topic;
    r["dropped"] = dropped;
    r["transport_failures"] = failures_.entries().size();
  }

  void train_embed(nlohmann::ordered_json& r) {
    // Concept learning over the expanded structure with every candidate as a
    // provisional child concept, so candidates are pulled apart in the
    // discriminative space. The grown clusters are discarded afterwards.
    Taxonomy work = tax_;
    for (const auto& [topic, list] : candidates_) {
      for (const auto& c : list) work.attach(topic, corpus_->vocabulary.term(c.term));
    }
    std::vector<ClusterAddition> added;
    table_ = train_embeddings<float>(*corpus_, work, embedding_config(), &added);
    r["concepts"] = work.size();
    r["cluster_additions"] = added.size();
    r["note"] = "topical constraint uses embeddings trained over the expanded structure";
    std::ofstream bin(out("embeddings_layer" + std::to_string(layer_) + ".bin"), std::ios::binary);
    save_embeddings(*table_, bin);
  }

  void cluster(nlohmann::ordered_json& r) {
    const auto& vocab = corpus_->vocabulary;
    const auto& table = *table_;
    std::filesystem::create_directories(out("topic_type"));
    nlohmann::ordered_json topics = nlohmann::ordered_json::array();
    std::size_t retained_total = 0, attached_total = 0;
    std::vector<SubtopicGroup> groups;
    for (NodeId topic : layer_parents()) {
      const auto it = candidates_.find(topic);
      if (it == candidates_.end() || it->second.empty()) continue;
      const auto& name = tax_.node(topic).name;
      nlohmann::ordered_json tr;
      tr["topic"] = name;
      nlohmann::ordered_json dropped = nlohmann::ordered_json::array();

      std::vector<ScoredTerm> kept;
      for (const auto& c : it->second) {
        if (config_.clustering.topical_constraint) {
          const auto nearest = nearest_sibling_concept(table, topic, c.term);
          if (nearest != topic) {
            dropped.push_back({{"term", vocab.term(c.term)},
                               {"reason", "closer to concept '" + tax_.node(nearest).name + "'"}});
            continue;
          }
        }
        kept.push_back(c);
      }
      tr["candidates"] = it->second.size();
      tr["after_topical_constraint"] = kept.size();
      if (kept.empty()) {
        tr["dropped"] = dropped;
        topics.push_back(tr);
        continue;
      }

      std::vector<std::vector<double>> meaning, type;
      std::vector<std::string> names;
      for (const auto& c : kept) {
        const auto u = table.center(c.term);
        meaning.emplace_back(u.begin(), u.end());
        type.push_back(type_vector(table, c.term, tr));
        names.push_back(vocab.term(c.term));
      }
      const auto m = topic_type_matrix(meaning, type);
      const std::size_t k = default_bicluster_count(m);
      const auto assignment = cocluster(m, k, {config_.seed, config_.clustering.restarts});
      const auto retained = retained_biclusters(m, assignment, config_.consistency_threshold);
      {
        std::ofstream tsv(out("topic_type") / (name + ".layer" + std::to_string(layer_) + ".tsv"));
        write_topic_type_tsv(m, names, tsv);
      }
      tr["rows"] = m.rows;
      tr["cols"] = m.cols;
      tr["k"] = k;
      nlohmann::ordered_json bic = nlohmann::ordered_json::array();
      for (std::size_t b = 0; b < k; ++b) {
        const auto score = consistency(m, assignment, b);
        bic.push_back({{"bicluster", b}, {"consistency", score ? nlohmann::ordered_json(*score) : nlohmann::ordered_json()}});
      }
      tr["biclusters"] = bic;
      retained_total += retained.size();

      std::vector<bool> column_kept(m.cols, false);
      for (const auto& b : retained) {
        for (std::size_t col : b.columns) column_kept[col] = true;
      }
      for (std::size_t col = 0; col < m.cols; ++col) {
        SubtopicGroup g;
        g.topic = name;
        for (std::size_t c : m.column_members(col)) g.members.push_back(names[c]);
        if (!column_kept[col]) {
          for (const auto& mbr : g.members) {
            dropped.push_back({{"term", mbr}, {"reason", "column " + std::to_string(col) + " failed the consistency filter"}});
          }
          continue;
        }
        for (const auto& b : retained) {
          if (std::find(b.columns.begin(), b.columns.end(), col) != b.columns.end()) g.consistency = b.consistency;
        }
        groups.push_back(std::move(g));
      }
      tr["dropped"] = dropped;
      topics.push_back(tr);
    }

    // Attach each surviving column as a subtopic named by its best-scored member.
    nlohmann::ordered_json attached = nlohmann::ordered_json::array();
    for (const auto& g : groups) {
      const NodeId topic = tax_.id(g.topic);
      const NodeId node = tax_.attach(topic, g.members.front());
      for (std::size_t i = 1; i < g.members.size(); ++i) tax_.add_to_cluster(node, g.members[i]);
      attached.push_back({{"topic", g.topic}, {"name", g.members.front()}, {"members", g.members},
                          {"consistency", g.consistency}});
      ++attached_total;
    }
    r["clusters_retained"] = retained_total;
    r["subtopics_attached"] = attached_total;
    r["topics"] = topics;
    r["attached"] = attached;
    tax_.validate();
  }

  void finish(nlohmann::ordered_json& r) {
    // Final concept learning over the finished structure grows every cluster
    // and ranks the exported terms.
    Taxonomy final_tax = tax_;
    std::vector<ClusterAddition> added;
    final_table_ = train_embeddings<float>(*corpus_, final_tax, embedding_config(), &added);
    tax_ = std::move(final_tax);
    tax_.validate();
    const auto& vocab = corpus_->vocabulary;
    exported_ = export_topical(tax_, *final_table_, vocab, std::numeric_limits<std::size_t>::max());
    {
      std::ofstream f(out("taxonomy.json"), std::ios::binary);
      f << exported_;
      std::ofstream bin(out("embeddings.bin"), std::ios::binary);
      save_embeddings(*final_table_, bin);
      std::ofstream pairs(out("taxonomy_pairs.tsv"));
      write_pairs(ancestor_pairs(tax_), pairs);
    }
    r["nodes"] = tax_.size();
    r["depth"] = tax_.max_depth();
    r["cluster_additions"] = added.size();
    r["transport_failures"] = failures_.entries();

    if (!config_.gold.empty()) {
      const SynonymMap synonyms = config_.synonyms.empty() ? SynonymMap{} : load_synonyms(read_file(config_.synonyms));
      // The forest view keeps the exported ranking of each cluster.
      const ClusterForest exported = load_cluster_forest(exported_);
      MetricReport m;
      m.k = config_.top_k;
      m.relation = relation_f1(ancestor_pairs(exported, PairMode::kTransitive, synonyms),
                               load_gold_pairs(read_file(config_.gold), synonyms));
      m.distinctiveness = sibling_distinctiveness(exported, config_.top_k);
      m.coherence = coherence_proxy(exported, *index_, config_.top_k);
      std::ofstream f(out("metrics.txt"));
      write_table(m, exported, f);
      f << '\n';
      write_key_values(m, f);
      metrics_ = m;
      r["relation_f1"] = m.relation->f1;
      r["relation_precision"] = m.relation->precision;
      r["relation_recall"] = m.relation->recall;
      r["sibling_distinctiveness"] = m.distinctiveness->mean;
    }
  }

  // ---- helpers ------------------------------------------------------------

 public:
  const std::optional<MetricReport>& metrics() const { return metrics_; }

  static Taxonomy load_seed_file(const std::filesystem::path& p) {
    auto tax = taxoforge::load_seed(read_file(p));
    tax.validate();
    return tax;
  }

  static std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

 private:
  std::filesystem::path out(const std::string& name) const { return config_.output_dir / name; }

  static std::string fixed(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(6) << v;
    return s.str();
  }

  void log(const std::string& line) const {
    if (log_) *log_ << line << std::endl;
  }

  TrainingConfig embedding_config() const {
    TrainingConfig c = config_.embedding;
    return c;
  }

  void make_scorer() {
    const auto& vocab = corpus_->vocabulary;
    switch (config_.scorer.backend) {
      case ScorerBackend::kHeuristic:
        scorer_ = std::make_unique<HeuristicScorer>(vocab);
        break;
      case ScorerBackend::kOracle:
        scorer_ = std::make_unique<OracleScorer>(vocab, OracleScorer::parse_table(read_file(config_.scorer.oracle_table)));
        break;
      case ScorerBackend::kRemote: {
        auto remote = std::make_unique<RemoteScorer>(Endpoint::parse(config_.scorer.address), vocab,
                                                     config_.scorer.retry, config_.scorer.max_batch);
        remote_ = remote.get();
        scorer_ = std::move(remote);
        break;
      }
    }
  }

  ScoringContext scoring_context() {
    ScoringContext ctx;
    ctx.scorer = scorer_.get();
    ctx.index = index_.get();
    ctx.filter = ConfidenceFilter{config_.kl_threshold};
    ctx.statement_cap = config_.statement_cap;
    ctx.workers = config_.workers;
    ctx.transport_failures = &failures_;
    return ctx;
  }

  // The sibling topic (topic included) whose name the word is most associated
  // with: cosine of the word's center vector to the name's context vector,
  // the skip-gram co-occurrence score. Word-to-word cosines are near-uniform
  // across siblings on small corpora, and grown cluster members are too noisy
  // to anchor this early.
  NodeId nearest_sibling_concept(const EmbeddingTable& table, NodeId topic, TermId word) const {
    const auto u = table.center(word);
    const auto& vocab = corpus_->vocabulary;
    NodeId best = topic;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (NodeId s : tax_.siblings(topic)) {
      const auto id = vocab.find(tax_.node(s).name);
      if (!id) continue;
      const double c = cosine(u, table.context(*id));
      if (c > best_cos) {
        best_cos = c;
        best = s;
      }
    }
    return best;
  }

  std::vector<double> type_vector(const EmbeddingTable& table, TermId term, nlohmann::ordered_json& r) {
    if (remote_) {
      try {
        const auto mentions = remote_->mentions_of(*index_, term, config_.clustering.max_mentions);
        if (!mentions.empty()) return remote_->embed(corpus_->vocabulary.term(term), mentions);
      } catch (const TransportError& e) {
        r["type_vector_fallback"] = e.what();
      }
    }
    return context_signature(table, *index_, term, config_.embedding.window, config_.clustering.max_mentions);
  }

  TopicTypeMatrix topic_type_matrix(const std::vector<std::vector<double>>& meaning,
                                    const std::vector<std::vector<double>>& type) const {
    return build_topic_type_matrix(meaning, type, config_.clustering.ap, config_.clustering.meaning_preference,
                                   config_.clustering.type_preference);
  }

  nlohmann::ordered_json config_summary() const {
    nlohmann::ordered_json j;
    j["corpus"] = config_.corpus.string();
    j["seed_taxonomy"] = config_.seed_taxonomy.string();
    j["scorer"] = std::string(to_string(config_.scorer.backend));
    if (config_.scorer.backend == ScorerBackend::kRemote) j["scorer_address"] = config_.scorer.address;
    j["relation_threshold"] = config_.relation_threshold;
    j["kl_threshold"] = config_.kl_threshold;
    j["consistency_threshold"] = config_.consistency_threshold;
    j["margin"] = config_.embedding.margin;
    j["min_count"] = config_.min_count;
    j["statement_cap"] = config_.statement_cap;
    j["embedding_dim"] = config_.embedding.dim;
    j["epochs"] = config_.embedding.epochs;
    j["layers"] = config_.layers;
    j["seed"] = config_.seed;
    return j;
  }

  void write_report() const {
    std::ofstream f(config_.output_dir / "report.json");
    f << report_.dump(2) << '\n';
  }

  RunConfig config_;
  std::ostream* log_;
  std::unique_ptr<Corpus> corpus_;
  std::unique_ptr<CorpusIndex> index_;
  std::unique_ptr<RelationScorer> scorer_;
  RemoteScorer* remote_ = nullptr;
  FailureLog failures_;
  Taxonomy tax_;
  NodeId root_node_{0};
  std::vector<TermId> roots_;
  TrainingSet training_;
  std::map<NodeId, std::vector<ScoredTerm>> candidates_;
  std::optional<EmbeddingTable> table_;
  std::optional<EmbeddingTable> final_table_;
  std::optional<MetricReport> metrics_;
  std::string exported_;
  std::size_t layer_ = 2;
  nlohmann::ordered_json report_;
};

}  // namespace taxoforge
