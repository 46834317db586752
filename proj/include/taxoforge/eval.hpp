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

// Automatic taxonomy metrics: Relation F1 over ancestor pairs, sibling
// distinctiveness and an NPMI coherence proxy.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "taxoforge/common.hpp"
#include "taxoforge/corpus.hpp"
#include "taxoforge/taxonomy.hpp"

namespace taxoforge {

inline constexpr std::size_t kDefaultTopK = 10;

using ConceptPair = std::pair<std::string, std::string>;  // (ancestor, descendant)
using AncestorPairSet = std::set<ConceptPair>;
using SynonymMap = std::map<std::string, std::string, std::less<>>;  // alias -> canonical name

enum class PairMode { kTransitive, kDirect };

inline std::string canonical_name(std::string_view name, const SynonymMap& synonyms) {
  auto it = synonyms.find(name);
  return it == synonyms.end() ? std::string(name) : it->second;
}

namespace detail {

// Splits "a<TAB>b" lines; blank lines and '#' comments are skipped.
inline std::vector<ConceptPair> parse_tab_pairs(std::string_view text, std::string_view what) {
  std::vector<ConceptPair> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw Error(std::string(what) + " line " + std::to_string(line_no) + ": expected two tab-separated fields");
    }
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    if (out.back().first.empty() || out.back().second.empty()) {
      throw Error(std::string(what) + " line " + std::to_string(line_no) + ": empty field");
    }
  }
  return out;
}

}  // namespace detail

inline SynonymMap load_synonyms(std::string_view text) {
  SynonymMap out;
  for (auto& [alias, canonical] : detail::parse_tab_pairs(text, "synonym file")) out[alias] = canonical;
  return out;
}

// Irreflexive and free of mutually reversed pairs.
inline void validate_pair_set(const AncestorPairSet& pairs) {
  for (const auto& [a, d] : pairs) {
    if (a == d) throw Error("ancestor pair set is reflexive at " + a);
    if (pairs.count({d, a})) throw Error("ancestor pair set holds both (" + a + ", " + d + ") and its reverse");
  }
}

inline AncestorPairSet load_gold_pairs(std::string_view text, const SynonymMap& synonyms = {}) {
  AncestorPairSet out;
  for (auto& [a, d] : detail::parse_tab_pairs(text, "gold file")) {
    out.emplace(canonical_name(a, synonyms), canonical_name(d, synonyms));
  }
  validate_pair_set(out);
  return out;
}

// Evaluation view of a topical taxonomy. Unlike Taxonomy it lets clusters
// overlap, so taxonomies built by other systems can be scored too. Node i's
// parent has a smaller index and children appear in index order.
struct ClusterForest {
  struct Node {
    std::string name;
    std::optional<std::size_t> parent;
    std::vector<std::string> cluster;
    std::size_t depth = 0;
  };
  std::vector<Node> nodes;

  std::size_t size() const { return nodes.size(); }

  std::vector<std::size_t> preorder() const {
    std::vector<std::vector<std::size_t>> children(nodes.size());
    std::vector<std::size_t> stack;
    for (std::size_t i = nodes.size(); i-- > 0;) {
      if (nodes[i].parent) children[*nodes[i].parent].push_back(i);
      else stack.push_back(i);
    }
    std::vector<std::size_t> out;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      out.push_back(i);
      for (std::size_t c : children[i]) stack.push_back(c);  // already reversed
    }
    return out;
  }
};

// Node i of the view is NodeId i of `tax`.
inline ClusterForest cluster_forest(const Taxonomy& tax) {
  ClusterForest f;
  for (std::size_t i = 0; i < tax.size(); ++i) {
    const auto& n = tax.node(NodeId(i));
    f.nodes.push_back({n.name, n.parent ? std::optional<std::size_t>(n.parent->index()) : std::nullopt, n.cluster,
                       n.depth});
  }
  return f;
}

namespace detail {
inline void load_forest_node(const nlohmann::json& j, ClusterForest& f, std::optional<std::size_t> parent,
                             std::set<std::string>& names) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
    throw Error("taxonomy parse error: node object without a string \"name\"");
  }
  ClusterForest::Node n;
  n.name = to_lower_ascii(j["name"].get<std::string>());
  if (!names.insert(n.name).second) throw Error("taxonomy parse error at " + n.name + ": duplicate node name");
  n.parent = parent;
  n.depth = parent ? f.nodes[*parent].depth + 1 : 0;
  if (j.contains("cluster")) {
    if (!j["cluster"].is_array()) throw Error("taxonomy parse error at " + n.name + ": \"cluster\" must be an array");
    std::set<std::string> seen;
    for (const auto& t : j["cluster"]) {
      if (!t.is_string()) throw Error("taxonomy parse error at " + n.name + ": non-string cluster term");
      auto term = to_lower_ascii(t.get<std::string>());
      if (seen.insert(term).second) n.cluster.push_back(std::move(term));
    }
  }
  if (n.cluster.empty()) n.cluster.push_back(n.name);
  f.nodes.push_back(std::move(n));
  const std::size_t self = f.nodes.size() - 1;
  if (j.contains("children")) {
    if (!j["children"].is_array()) throw Error("taxonomy parse error: \"children\" must be an array");
    for (const auto& c : j["children"]) load_forest_node(c, f, self, names);
  }
}
}  // namespace detail

// Reads the taxonomy JSON format without the cluster-disjointness check.
// Edge lists go through load_taxonomy.
inline ClusterForest load_cluster_forest(std::string_view serialized) {
  const auto first = serialized.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw Error("taxonomy parse error: empty input");
  if (serialized[first] != '{' && serialized[first] != '[') return cluster_forest(load_taxonomy(serialized));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(serialized);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("taxonomy parse error: ") + e.what());
  }
  std::vector<nlohmann::json> tops;
  if (j.is_array()) {
    tops.assign(j.begin(), j.end());
  } else if (j.is_object() && j.value("name", "") == kVirtualRootName) {
    if (j.contains("children")) tops.assign(j["children"].begin(), j["children"].end());
  } else {
    tops.push_back(j);
  }
  ClusterForest f;
  std::set<std::string> names;
  for (const auto& t : tops) detail::load_forest_node(t, f, std::nullopt, names);
  if (f.nodes.empty()) throw Error("taxonomy parse error: no nodes");
  return f;
}

inline AncestorPairSet ancestor_pairs(const ClusterForest& f, PairMode mode = PairMode::kTransitive,
                                      const SynonymMap& synonyms = {}) {
  AncestorPairSet out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const std::string child = canonical_name(f.nodes[i].name, synonyms);
    for (auto a = f.nodes[i].parent; a; a = f.nodes[*a].parent) {
      const std::string ancestor = canonical_name(f.nodes[*a].name, synonyms);
      if (ancestor != child) out.emplace(ancestor, child);
      if (mode == PairMode::kDirect) break;
    }
  }
  return out;
}

inline AncestorPairSet ancestor_pairs(const Taxonomy& tax, PairMode mode = PairMode::kTransitive,
                                      const SynonymMap& synonyms = {}) {
  return ancestor_pairs(cluster_forest(tax), mode, synonyms);
}

inline void write_pairs(const AncestorPairSet& pairs, std::ostream& out) {
  for (const auto& [a, d] : pairs) out << a << '\t' << d << '\n';
}

struct RelationF1 {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
  std::size_t correct = 0;
};

inline RelationF1 relation_f1(const AncestorPairSet& pred, const AncestorPairSet& gold) {
  if (gold.empty()) throw Error("relation F1 needs a non-empty gold pair set");
  RelationF1 r;
  r.predicted = pred.size();
  r.gold = gold.size();
  for (const auto& p : pred) r.correct += gold.count(p);
  r.precision = pred.empty() ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(pred.size());
  r.recall = static_cast<double>(r.correct) / static_cast<double>(gold.size());
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// First k cluster terms; clusters are expected to be ranked already.
inline std::set<std::string> top_k_terms(const std::vector<std::string>& cluster, std::size_t k) {
  const auto n = std::min(k, cluster.size());
  return {cluster.begin(), cluster.begin() + static_cast<std::ptrdiff_t>(n)};
}

struct SiblingDistinctiveness {
  std::vector<double> per_node;  // indexed like the forest's nodes
  double mean = 1.0;             // over nodes with a parent; 1 when there are none
};

// Siblings share a parent; roots are siblings of each other.
inline SiblingDistinctiveness sibling_distinctiveness(const ClusterForest& f, std::size_t k = kDefaultTopK) {
  SiblingDistinctiveness out;
  out.per_node.assign(f.size(), 1.0);
  std::vector<std::set<std::string>> tops;
  for (const auto& n : f.nodes) tops.push_back(top_k_terms(n.cluster, k));
  double sum = 0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double worst = 0;
    for (std::size_t s = 0; s < f.size(); ++s) {
      if (s != i && f.nodes[s].parent == f.nodes[i].parent) worst = std::max(worst, jaccard(tops[i], tops[s]));
    }
    out.per_node[i] = 1.0 - worst;
    if (f.nodes[i].parent) {
      sum += out.per_node[i];
      ++counted;
    }
  }
  if (counted > 0) out.mean = sum / static_cast<double>(counted);
  return out;
}

inline SiblingDistinctiveness sibling_distinctiveness(const Taxonomy& tax, std::size_t k = kDefaultTopK) {
  return sibling_distinctiveness(cluster_forest(tax), k);
}

// Sentence-level NPMI; never co-occurring pairs score -1, pairs present in
// every sentence score 1.
inline double npmi(std::size_t n_x, std::size_t n_y, std::size_t n_xy, std::size_t n_sentences) {
  if (n_sentences == 0) throw Error("NPMI needs a non-empty corpus");
  if (n_xy == 0) return -1.0;
  const double n = static_cast<double>(n_sentences);
  const double p_xy = static_cast<double>(n_xy) / n;
  if (p_xy >= 1.0) return 1.0;
  const double pmi = std::log(p_xy / ((static_cast<double>(n_x) / n) * (static_cast<double>(n_y) / n)));
  return pmi / -std::log(p_xy);
}

struct CoherenceProxy {
  std::vector<std::optional<double>> per_node;  // nullopt: fewer than two known terms
  std::optional<double> mean;
};

inline CoherenceProxy coherence_proxy(const ClusterForest& f, const CorpusIndex& index, std::size_t k = kDefaultTopK) {
  CoherenceProxy out;
  const auto& vocab = index.vocabulary();
  const std::size_t n_sentences = index.corpus().sentences.size();
  double total = 0;
  std::size_t counted = 0;
  for (const auto& node : f.nodes) {
    const auto& cluster = node.cluster;
    std::vector<TermId> terms;
    for (std::size_t c = 0; c < cluster.size() && terms.size() < k; ++c) {
      if (auto id = vocab.find(cluster[c])) terms.push_back(*id);
    }
    if (terms.size() < 2) {
      out.per_node.emplace_back();
      continue;
    }
    double sum = 0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < terms.size(); ++a) {
      for (std::size_t b = a + 1; b < terms.size(); ++b) {
        sum += npmi(index.postings(terms[a]).size(), index.postings(terms[b]).size(),
                    index.cooccurrence_count(terms[a], terms[b]), n_sentences);
        ++pairs;
      }
    }
    out.per_node.emplace_back(sum / static_cast<double>(pairs));
    total += *out.per_node.back();
    ++counted;
  }
  if (counted > 0) out.mean = total / static_cast<double>(counted);
  return out;
}

inline CoherenceProxy coherence_proxy(const Taxonomy& tax, const CorpusIndex& index, std::size_t k = kDefaultTopK) {
  return coherence_proxy(cluster_forest(tax), index, k);
}

struct MetricReport {
  std::optional<RelationF1> relation;
  std::optional<SiblingDistinctiveness> distinctiveness;
  std::optional<CoherenceProxy> coherence;
  PairMode mode = PairMode::kTransitive;
  std::size_t k = kDefaultTopK;
};

namespace detail {
inline std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace detail

// Human-readable table; per-node rows follow the summary.
inline void write_table(const MetricReport& r, const ClusterForest& f, std::ostream& out) {
  out << "metric                 value\n";
  if (r.relation) {
    out << "relation_precision     " << detail::fixed(r.relation->precision) << '\n';
    out << "relation_recall        " << detail::fixed(r.relation->recall) << '\n';
    out << "relation_f1            " << detail::fixed(r.relation->f1) << "  (" << r.relation->correct << '/'
        << r.relation->predicted << " predicted, " << r.relation->gold << " gold, "
        << (r.mode == PairMode::kTransitive ? "transitive" : "direct") << ")\n";
  }
  if (r.distinctiveness) out << "sibling_distinct@" << r.k << "    " << detail::fixed(r.distinctiveness->mean) << '\n';
  if (r.coherence && r.coherence->mean) out << "npmi_coherence@" << r.k << "      " << detail::fixed(*r.coherence->mean) << '\n';
  if (r.distinctiveness || r.coherence) {
    out << "\nnode                   sd        npmi\n";
    for (std::size_t id : f.preorder()) {
      std::string name(f.nodes[id].depth * 2, ' ');
      name += f.nodes[id].name;
      if (name.size() < 22) name.resize(22, ' ');
      out << name << ' ';
      out << (r.distinctiveness ? detail::fixed(r.distinctiveness->per_node[id]) : std::string("-       "));
      out << "  ";
      const auto c = r.coherence ? r.coherence->per_node[id] : std::nullopt;
      out << (c ? detail::fixed(*c) : std::string("-")) << '\n';
    }
  }
}

inline void write_table(const MetricReport& r, const Taxonomy& tax, std::ostream& out) {
  write_table(r, cluster_forest(tax), out);
}

inline void write_key_values(const MetricReport& r, std::ostream& out) {
  if (r.relation) {
    out << "relation_mode=" << (r.mode == PairMode::kTransitive ? "transitive" : "direct") << '\n';
    out << "relation_precision=" << detail::fixed(r.relation->precision) << '\n';
    out << "relation_recall=" << detail::fixed(r.relation->recall) << '\n';
    out << "relation_f1=" << detail::fixed(r.relation->f1) << '\n';
    out << "relation_predicted=" << r.relation->predicted << '\n';
    out << "relation_gold=" << r.relation->gold << '\n';
    out << "relation_correct=" << r.relation->correct << '\n';
  }
  if (r.distinctiveness) out << "sibling_distinctiveness=" << detail::fixed(r.distinctiveness->mean) << '\n';
  if (r.coherence && r.coherence->mean) out << "coherence_npmi=" << detail::fixed(*r.coherence->mean) << '\n';
  out << "top_k=" << r.k << '\n';
}

}  // namespace taxoforge
