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

// Relation transfer: per-sentence relation distributions from a pluggable
// scorer are filtered by their KL divergence from uniform and aggregated into
// corpus-level directional scores, which drive root discovery and the
// downward search for topics and subtopics.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <exception>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "taxoforge/common.hpp"
#include "taxoforge/corpus.hpp"
#include "taxoforge/taxonomy.hpp"

namespace taxoforge {

inline constexpr double kDefaultRelationThreshold = 0.7;  // gamma
inline constexpr double kDefaultKlThreshold = 0.5;        // delta
inline constexpr std::size_t kDefaultMinCooccur = 3;
inline constexpr std::size_t kDefaultMaxRoots = 3;

// Relation between the first (a) and second (b) term of a statement.
enum class RelationClass : std::uint8_t {
  kForward = 0,   // a is the parent of b
  kBackward = 1,  // b is the parent of a
  kNone = 2,
};

inline constexpr RelationClass reversed(RelationClass c) {
  switch (c) {
    case RelationClass::kForward: return RelationClass::kBackward;
    case RelationClass::kBackward: return RelationClass::kForward;
    case RelationClass::kNone: return RelationClass::kNone;
  }
  return c;
}

inline std::string_view to_string(RelationClass c) {
  switch (c) {
    case RelationClass::kForward: return "forward";
    case RelationClass::kBackward: return "backward";
    case RelationClass::kNone: return "none";
  }
  return "?";
}

inline RelationClass parse_relation_class(std::string_view s) {
  const auto lower = to_lower_ascii(s);
  if (lower == "forward") return RelationClass::kForward;
  if (lower == "backward") return RelationClass::kBackward;
  if (lower == "none") return RelationClass::kNone;
  throw Error("unknown relation class '" + std::string(s) + "'");
}

// Probabilities over (forward, backward, none).
struct RelationDistribution {
  std::array<double, 3> p{1.0 / 3, 1.0 / 3, 1.0 / 3};

  static RelationDistribution of(double forward, double backward, double none) {
    RelationDistribution d{{forward, backward, none}};
    d.validate();
    return d;
  }

  static RelationDistribution one_hot(RelationClass c) {
    RelationDistribution d{{0, 0, 0}};
    d.p[static_cast<std::size_t>(c)] = 1.0;
    return d;
  }

  double operator[](RelationClass c) const { return p[static_cast<std::size_t>(c)]; }

  RelationClass argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (p[i] > p[best]) best = i;
    }
    return static_cast<RelationClass>(best);
  }

  // Distribution of the same statement read with its terms swapped.
  RelationDistribution swapped() const { return {{p[1], p[0], p[2]}}; }

  void validate() const {
    double sum = 0;
    for (double x : p) {
      if (!(x >= 0) || !std::isfinite(x)) throw Error("relation distribution has a negative or non-finite entry");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw Error("relation distribution does not sum to 1");
  }
};

struct ConfidenceFilter {
  double threshold = kDefaultKlThreshold;  // delta, must be positive
};

// KL(l || p) with l uniform over the three classes; p clamped at 1e-9.
inline double kl_from_uniform(const RelationDistribution& dist) {
  constexpr double l = 1.0 / 3.0;
  double kl = 0;
  for (double pi : dist.p) kl += l * std::log(l / std::max(pi, 1e-9));
  return kl;
}

inline bool is_confident(const RelationDistribution& dist, const ConfidenceFilter& filter) {
  if (!(filter.threshold > 0)) throw Error("KL threshold must be positive");
  return kl_from_uniform(dist) > filter.threshold;
}

struct LabeledStatement {
  RelationStatement statement;
  RelationClass label = RelationClass::kNone;

  // Same sentence with the term order reversed; directional labels swap.
  LabeledStatement reversed() const { return {statement.reversed(), taxoforge::reversed(label)}; }

  friend bool operator==(const LabeledStatement&, const LabeledStatement&) = default;
};

// ---------------------------------------------------------------------------
// Scorers.

// Thrown by remote backends once retries are exhausted.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempts)"), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

// Produces one distribution per statement, order preserved. Implementations
// must be safe to call concurrently.
class RelationScorer {
 public:
  virtual ~RelationScorer() = default;
  virtual std::vector<RelationDistribution> score_batch(std::span<const RelationStatement> batch) const = 0;
  virtual std::string name() const = 0;
};

namespace detail {

inline bool span_has(std::span<const std::string_view> words, std::string_view w) {
  return std::find(words.begin(), words.end(), w) != words.end();
}

}  // namespace detail

// Anchored Hearst-style patterns. Punctuation is gone after ingest, so a
// list runs from the cue up to the item after the first "and"/"or".
//   "<parent> such_as|including|like|especially|such as <c1> <c2> and <c3>"
//   "types_of|kinds_of <parent> include|are <c1> ... and <cn>"
//   "<child> is_a|is a [type_of|kind_of] <parent>", "<child> and|or other <parent>"
inline RelationDistribution heuristic_score(const RelationStatement& st, const Vocabulary& vocab) {
  if (st.pos_a >= st.tokens.size() || st.pos_b >= st.tokens.size() || st.pos_a == st.pos_b) {
    throw Error("invalid relation statement positions");
  }
  static constexpr std::array<std::string_view, 6> kListCue = {
      "such_as", "including", "like", "especially", "e.g", "namely"};
  static constexpr std::array<std::string_view, 2> kPrefixCue = {"types_of", "kinds_of"};
  static constexpr std::array<std::string_view, 5> kPrefixVerb = {"include", "includes", "are", "such_as", "including"};
  static constexpr std::array<std::string_view, 8> kIsACue = {
      "is_a", "are_a", "type_of", "kind_of", "types_of", "kinds_of", "form_of", "sort_of"};
  static constexpr std::array<std::string_view, 14> kIsAFiller = {
      "is", "are", "a", "an", "the", "one", "of", "type", "kind", "types", "kinds", "sort", "form", "another"};
  static constexpr std::size_t kMaxList = 8;

  const std::size_t n = st.tokens.size();
  const std::size_t lo = std::min(st.pos_a, st.pos_b);
  const std::size_t hi = std::max(st.pos_a, st.pos_b);
  auto w = [&](std::size_t i) -> std::string_view { return i < n ? std::string_view(vocab.term(st.tokens[i])) : ""; };

  bool earlier_parent = false;
  std::size_t start = 0;
  if (detail::span_has(kListCue, w(lo + 1))) {
    start = lo + 2;
  } else if (w(lo + 1) == "such" && w(lo + 2) == "as") {
    start = lo + 3;
  } else if (lo > 0 && detail::span_has(kPrefixCue, w(lo - 1)) && detail::span_has(kPrefixVerb, w(lo + 1))) {
    start = lo + 2;
  }
  if (start > 0 && hi >= start) {
    std::size_t end = std::min(n, start + kMaxList) - 1;
    for (std::size_t i = start; i < std::min(n, start + kMaxList); ++i) {
      if (w(i) == "and" || w(i) == "or") {
        end = std::min(i + 1, n - 1);
        break;
      }
    }
    earlier_parent = hi <= end;
  }

  bool later_parent = false;
  if (hi > lo + 1) {
    bool cue = false, filler_only = true;
    std::string_view prev;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const auto t = w(i);
      if (detail::span_has(kIsACue, t)) {
        cue = true;
      } else if (detail::span_has(kIsAFiller, t)) {
        if ((prev == "is" && t == "a") || (prev == "type" && t == "of") || (prev == "kind" && t == "of") ||
            (prev == "types" && t == "of") || (prev == "kinds" && t == "of")) {
          cue = true;
        }
      } else {
        filler_only = false;
      }
      prev = t;
    }
    later_parent = cue && filler_only;
    if (hi == lo + 3 && (w(lo + 1) == "and" || w(lo + 1) == "or") && w(lo + 2) == "other") later_parent = true;
  }

  if (earlier_parent == later_parent) return {{0.34, 0.33, 0.33}};
  const bool a_is_parent = earlier_parent == (st.pos_a < st.pos_b);
  return a_is_parent ? RelationDistribution{{0.9, 0.05, 0.05}} : RelationDistribution{{0.05, 0.9, 0.05}};
}

class HeuristicScorer final : public RelationScorer {
 public:
  explicit HeuristicScorer(const Vocabulary& vocab) : vocab_(&vocab) {}

  std::vector<RelationDistribution> score_batch(std::span<const RelationStatement> batch) const override {
    std::vector<RelationDistribution> out;
    out.reserve(batch.size());
    for (const auto& st : batch) out.push_back(heuristic_score(st, *vocab_));
    return out;
  }
  std::string name() const override { return "heuristic"; }

 private:
  const Vocabulary* vocab_;
};

// Lookup table of known pair relations. A pair listed as (a, b, c) yields
// class c for statements reading (a, b) and its reversal for (b, a). Pairs
// missing from the table yield none. Predictions are one-hot.
class OracleScorer final : public RelationScorer {
 public:
  OracleScorer(const Vocabulary& vocab, std::map<std::pair<std::string, std::string>, RelationClass> table)
      : vocab_(&vocab), table_(std::move(table)) {}

  // Parses "termA<TAB>termB<TAB>forward|backward|none" lines.
  static std::map<std::pair<std::string, std::string>, RelationClass> parse_table(std::string_view text) {
    std::map<std::pair<std::string, std::string>, RelationClass> table;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos) throw Error("oracle table line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
      table[{to_lower_ascii(line.substr(0, t1)), to_lower_ascii(line.substr(t1 + 1, t2 - t1 - 1))}] =
          parse_relation_class(line.substr(t2 + 1));
    }
    return table;
  }

  // Oracle table holding every parent-child edge of `tax` as forward.
  static std::map<std::pair<std::string, std::string>, RelationClass> table_from_taxonomy(const Taxonomy& tax) {
    std::map<std::pair<std::string, std::string>, RelationClass> table;
    for (NodeId id : tax.preorder()) {
      for (NodeId c : tax.children(id)) table[{tax.node(id).name, tax.node(c).name}] = RelationClass::kForward;
    }
    return table;
  }

  RelationClass lookup(std::string_view a, std::string_view b) const {
    if (auto it = table_.find({std::string(a), std::string(b)}); it != table_.end()) return it->second;
    if (auto it = table_.find({std::string(b), std::string(a)}); it != table_.end()) return reversed(it->second);
    return RelationClass::kNone;
  }

  std::vector<RelationDistribution> score_batch(std::span<const RelationStatement> batch) const override {
    std::vector<RelationDistribution> out;
    out.reserve(batch.size());
    for (const auto& st : batch) {
      out.push_back(RelationDistribution::one_hot(lookup(vocab_->term(st.term_a()), vocab_->term(st.term_b()))));
    }
    return out;
  }
  std::string name() const override { return "oracle"; }

 private:
  const Vocabulary* vocab_;
  std::map<std::pair<std::string, std::string>, RelationClass> table_;
};

// ---------------------------------------------------------------------------
// Training data.

struct TrainingSetOptions {
  std::size_t statement_cap = kDefaultStatementCap;
  // Random-sentence negatives; nullopt draws as many as there are positives.
  std::optional<std::size_t> random_negatives;
  std::uint64_t seed = 1;
};

struct TrainingSet {
  std::vector<LabeledStatement> samples;
  std::size_t positives = 0;
  std::size_t sibling_negatives = 0;
  std::size_t random_negatives = 0;
  std::vector<std::string> warnings;
};

// Seed edges give forward samples, sibling pairs and random sentences give
// none samples; every sample is followed by its reversal.
inline TrainingSet build_training_set(const Taxonomy& tax, const CorpusIndex& index,
                                      const TrainingSetOptions& options = {}) {
  const auto& vocab = index.vocabulary();
  auto term_of = [&](NodeId n) { return vocab.id(tax.node(n).name); };
  TrainingSet out;
  auto emit = [&](LabeledStatement s) {
    auto r = s.reversed();
    out.samples.push_back(std::move(s));
    out.samples.push_back(std::move(r));
  };

  std::size_t edges = 0;
  for (NodeId p : tax.preorder()) {
    for (NodeId c : tax.children(p)) {
      ++edges;
      auto statements = relation_statements(index, term_of(p), term_of(c), options.statement_cap);
      if (statements.empty()) {
        out.warnings.push_back("seed edge " + tax.node(p).name + " -> " + tax.node(c).name +
                               " has no co-occurring sentence");
      }
      for (auto& st : statements) {
        emit({std::move(st), RelationClass::kForward});
        ++out.positives;
      }
    }
  }
  if (edges == 0) throw Error("seed taxonomy has no edge to learn the relation from");

  for (NodeId p : tax.preorder()) {
    const auto& ch = tax.children(p);
    for (std::size_t i = 0; i < ch.size(); ++i) {
      for (std::size_t j = i + 1; j < ch.size(); ++j) {
        for (auto& st : relation_statements(index, term_of(ch[i]), term_of(ch[j]), options.statement_cap)) {
          emit({std::move(st), RelationClass::kNone});
          ++out.sibling_negatives;
        }
      }
    }
  }

  const std::size_t n_random = options.random_negatives.value_or(out.positives);
  for (auto& st : sample_negative_sentences(index.corpus(), n_random, options.seed)) {
    emit({std::move(st), RelationClass::kNone});
    ++out.random_negatives;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus-level scores.

// Thread-safe record of pairs whose scoring failed.
class FailureLog {
 public:
  void add(std::string entry) {
    std::lock_guard lock(mutex_);
    entries_.push_back(std::move(entry));
  }
  std::vector<std::string> entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> entries_;
};

struct ScoringContext {
  const RelationScorer* scorer = nullptr;
  const CorpusIndex* index = nullptr;
  ConfidenceFilter filter;
  std::size_t statement_cap = kDefaultStatementCap;
  std::size_t workers = 1;
  // When set, transport failures score the pair as undefined and are
  // recorded here instead of propagating.
  FailureLog* transport_failures = nullptr;
};

// Fraction of confident statements predicting src -> dst; nullopt when no
// statement is confident.
inline std::optional<double> directional_score(const RelationScorer& scorer, const CorpusIndex& index,
                                               TermId src, TermId dst, const ConfidenceFilter& filter,
                                               std::size_t cap = kDefaultStatementCap) {
  const auto statements = relation_statements(index, src, dst, cap);
  if (statements.empty()) return std::nullopt;
  const auto dists = scorer.score_batch(statements);
  if (dists.size() != statements.size()) throw Error("scorer returned a wrong number of distributions");
  std::size_t confident = 0, forward = 0;
  for (const auto& d : dists) {
    if (!is_confident(d, filter)) continue;
    ++confident;
    if (d.argmax() == RelationClass::kForward) ++forward;
  }
  if (confident == 0) return std::nullopt;
  return static_cast<double>(forward) / static_cast<double>(confident);
}

inline std::optional<double> directional_score(const ScoringContext& ctx, TermId src, TermId dst) {
  try {
    return directional_score(*ctx.scorer, *ctx.index, src, dst, ctx.filter, ctx.statement_cap);
  } catch (const TransportError& e) {
    if (!ctx.transport_failures) throw;
    ctx.transport_failures->add(ctx.index->vocabulary().term(src) + " -> " +
                                      ctx.index->vocabulary().term(dst) + ": " + e.what());
    return std::nullopt;
  }
}

// Scores every pair, fanning out over at most ctx.workers threads. Results
// are positional, so the output does not depend on scheduling.
inline std::vector<std::optional<double>> score_pairs(const ScoringContext& ctx,
                                                      std::span<const std::pair<TermId, TermId>> pairs) {
  std::vector<std::optional<double>> out(pairs.size());
  const std::size_t workers = std::min(std::max<std::size_t>(ctx.workers, 1), pairs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = directional_score(ctx, pairs[i].first, pairs[i].second);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < pairs.size(); i = next++) {
        try {
          out[i] = directional_score(ctx, pairs[i].first, pairs[i].second);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

struct ScoredTerm {
  TermId term;
  double score = 0;
  friend bool operator==(const ScoredTerm&, const ScoredTerm&) = default;
};

inline void sort_scored(std::vector<ScoredTerm>& terms) {
  std::sort(terms.begin(), terms.end(), [](const ScoredTerm& a, const ScoredTerm& b) {
    return a.score != b.score ? a.score > b.score : a.term < b.term;
  });
}

// Topics whose common parents define the root set: the children of the roots,
// or the roots themselves when no root has children.
inline std::vector<NodeId> first_layer_topics(const Taxonomy& tax) {
  std::vector<NodeId> out;
  for (NodeId r : tax.roots()) {
    for (NodeId c : tax.children(r)) out.push_back(c);
  }
  if (out.empty()) out = tax.roots();
  return out;
}

struct ParentList {
  std::string topic;
  std::vector<ScoredTerm> parents;
};

class NoCommonRootError : public Error {
 public:
  explicit NoCommonRootError(std::vector<ParentList> lists, const Vocabulary& vocab)
      : Error(describe(lists, vocab)), lists_(std::move(lists)) {}
  const std::vector<ParentList>& parent_lists() const { return lists_; }

 private:
  static std::string describe(const std::vector<ParentList>& lists, const Vocabulary& vocab) {
    std::string msg = "no common root found;";
    for (const auto& l : lists) {
      msg += " " + l.topic + ": {";
      for (std::size_t i = 0; i < l.parents.size(); ++i) msg += (i ? ", " : "") + vocab.term(l.parents[i].term);
      msg += "}";
    }
    return msg;
  }
  std::vector<ParentList> lists_;
};

struct RootDiscoveryOptions {
  double threshold = kDefaultRelationThreshold;
  std::size_t min_cooccur = kDefaultMinCooccur;
  std::size_t max_roots = kDefaultMaxRoots;
};

struct RootDiscovery {
  std::vector<ScoredTerm> roots;  // by mean parent score, descending
  std::vector<ParentList> parent_lists;
};

// Common parents of every first-layer seed topic.
inline RootDiscovery discover_roots(const ScoringContext& ctx, const Taxonomy& tax,
                                    const RootDiscoveryOptions& options = {}) {
  const auto& vocab = ctx.index->vocabulary();
  const auto topics = first_layer_topics(tax);
  if (topics.size() < 2) throw Error("root discovery needs at least two first-layer seed topics");

  RootDiscovery out;
  std::map<TermId, std::vector<double>> scores_by_parent;
  for (NodeId topic : topics) {
    const TermId e = vocab.id(tax.node(topic).name);
    std::vector<std::pair<TermId, TermId>> pairs;
    for (TermId w : candidate_terms(*ctx.index, e, options.min_cooccur)) pairs.emplace_back(w, e);
    const auto scores = score_pairs(ctx, pairs);
    ParentList list{tax.node(topic).name, {}};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (scores[i] && *scores[i] > options.threshold) list.parents.push_back({pairs[i].first, *scores[i]});
    }
    sort_scored(list.parents);
    for (const auto& p : list.parents) scores_by_parent[p.term].push_back(p.score);
    out.parent_lists.push_back(std::move(list));
  }
  for (const auto& [term, scores] : scores_by_parent) {
    if (scores.size() != topics.size()) continue;
    double mean = 0;
    for (double s : scores) mean += s;
    out.roots.push_back({term, mean / static_cast<double>(scores.size())});
  }
  if (out.roots.empty()) throw NoCommonRootError(out.parent_lists, vocab);
  sort_scored(out.roots);
  if (out.roots.size() > options.max_roots) out.roots.resize(options.max_roots);
  return out;
}

// Candidates w whose mean Score(r -> w) over the roots exceeds the threshold;
// undefined scores count as 0. Existing node names and roots are skipped.
inline std::vector<ScoredTerm> expand_first_layer(const ScoringContext& ctx, std::span<const TermId> roots,
                                                  std::span<const TermId> candidates, const Taxonomy& tax,
                                                  double threshold = kDefaultRelationThreshold) {
  if (roots.empty()) throw Error("first-layer expansion needs at least one root");
  const auto& vocab = ctx.index->vocabulary();
  std::vector<TermId> pool;
  for (TermId w : candidates) {
    if (tax.find(vocab.term(w))) continue;
    if (std::find(roots.begin(), roots.end(), w) != roots.end()) continue;
    if (std::find(pool.begin(), pool.end(), w) != pool.end()) continue;
    pool.push_back(w);
  }
  std::vector<std::pair<TermId, TermId>> pairs;
  for (TermId w : pool) {
    for (TermId r : roots) pairs.emplace_back(r, w);
  }
  const auto scores = score_pairs(ctx, pairs);
  std::vector<ScoredTerm> out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    double sum = 0;
    for (std::size_t r = 0; r < roots.size(); ++r) sum += scores[i * roots.size() + r].value_or(0.0);
    const double mean = sum / static_cast<double>(roots.size());
    if (mean > threshold) out.push_back({pool[i], mean});
  }
  sort_scored(out);
  return out;
}

struct SubtopicOptions {
  double threshold = kDefaultRelationThreshold;
  std::size_t min_cooccur = kDefaultMinCooccur;
};

// Co-occurring terms w of `topic` with Score(topic -> w) above the threshold,
// excluding node names and terms held by another node's cluster.
inline std::vector<ScoredTerm> subtopic_candidates(const ScoringContext& ctx, const Taxonomy& tax, NodeId topic,
                                                   const SubtopicOptions& options = {}) {
  const auto& vocab = ctx.index->vocabulary();
  const TermId e = vocab.id(tax.node(topic).name);
  std::vector<std::pair<TermId, TermId>> pairs;
  for (TermId w : candidate_terms(*ctx.index, e, options.min_cooccur)) {
    const auto& term = vocab.term(w);
    if (tax.find(term)) continue;
    if (auto owner = tax.cluster_owner(term); owner && *owner != topic) continue;
    pairs.emplace_back(e, w);
  }
  const auto scores = score_pairs(ctx, pairs);
  std::vector<ScoredTerm> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (scores[i] && *scores[i] > options.threshold) out.push_back({pairs[i].second, *scores[i]});
  }
  sort_scored(out);
  return out;
}

}  // namespace taxoforge
