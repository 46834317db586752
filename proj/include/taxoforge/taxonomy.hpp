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

// Forest of concept nodes, each carrying a topic cluster of terms.
//
// File format (JSON): a node object {"name": str, "cluster": [str],
// "children": [node]} or an array of node objects for a forest. "cluster" may
// be omitted in seed files. A forest is written under a virtual root named "*"
// which the loader unpacks again. Seeds may alternatively be given as an edge
// list, one "parent<TAB>child" per line.

#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "taxoforge/common.hpp"

namespace taxoforge {

inline constexpr std::string_view kVirtualRootName = "*";

struct TaxonomyNode {
  std::string name;
  std::vector<std::string> cluster;
  std::size_t depth = 0;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
};

class Taxonomy {
 public:
  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeId>& roots() const { return roots_; }

  const TaxonomyNode& node(NodeId id) const {
    check(id);
    return nodes_[id.index()];
  }

  std::optional<NodeId> find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  NodeId id(std::string_view name) const {
    if (auto n = find(name)) return *n;
    throw Error("unknown taxonomy node '" + std::string(name) + "'");
  }

  // Node currently holding `term` in its cluster, if any.
  std::optional<NodeId> cluster_owner(std::string_view term) const {
    auto it = owner_.find(std::string(term));
    if (it == owner_.end()) return std::nullopt;
    return it->second;
  }

  NodeId add_root(std::string name) {
    const NodeId id = make_node(std::move(name), std::nullopt, 0);
    roots_.push_back(id);
    return id;
  }

  // Attaches a new leaf named `child_name` under `parent`.
  NodeId attach(NodeId parent, std::string child_name) {
    check(parent);
    const NodeId id = make_node(std::move(child_name), parent, nodes_[parent.index()].depth + 1);
    nodes_[parent.index()].children.push_back(id);
    return id;
  }

  // Inserts a new root above every current root.
  NodeId reroot(std::string name) {
    const auto old_roots = roots_;
    const NodeId id = make_node(std::move(name), std::nullopt, 0);
    for (NodeId r : old_roots) {
      nodes_[r.index()].parent = id;
      nodes_[id.index()].children.push_back(r);
    }
    roots_ = {id};
    for (NodeId r : old_roots) shift_depth(r, 1);
    return id;
  }

  // Adds `term` to the cluster of `node`; a term may belong to one cluster only.
  void add_to_cluster(NodeId node, const std::string& term) {
    check(node);
    if (auto owner = cluster_owner(term)) {
      if (*owner == node) return;
      throw Error("term '" + term + "' already belongs to the cluster of '" +
                  nodes_[owner->index()].name + "'");
    }
    nodes_[node.index()].cluster.push_back(term);
    owner_.emplace(term, node);
  }

  // Replaces the cluster of `node`; its name is kept first.
  void set_cluster(NodeId node, const std::vector<std::string>& terms) {
    check(node);
    auto& n = nodes_[node.index()];
    for (const auto& t : n.cluster) owner_.erase(t);
    n.cluster.clear();
    add_to_cluster(node, n.name);
    for (const auto& t : terms) add_to_cluster(node, t);
  }

  std::optional<NodeId> parent(NodeId id) const { return node(id).parent; }
  const std::vector<NodeId>& children(NodeId id) const { return node(id).children; }

  // N_e: every child of parent(e), e included. Roots are siblings of each other.
  std::vector<NodeId> siblings(NodeId id) const {
    if (auto p = parent(id)) return children(*p);
    return roots_;
  }

  // Pre-order traversal, roots and children in insertion order.
  std::vector<NodeId> preorder() const {
    std::vector<NodeId> out;
    std::vector<NodeId> stack(roots_.rbegin(), roots_.rend());
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      out.push_back(id);
      const auto& ch = nodes_[id.index()].children;
      for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    return out;
  }

  std::vector<NodeId> nodes_at_depth(std::size_t depth) const {
    std::vector<NodeId> out;
    for (NodeId id : preorder()) {
      if (nodes_[id.index()].depth == depth) out.push_back(id);
    }
    return out;
  }

  std::size_t max_depth() const {
    std::size_t d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
  }

  // Throws if any structural invariant is broken: forest shape, depth
  // consistency, unique names, name in own cluster, disjoint clusters.
  void validate() const {
    std::vector<int> visits(nodes_.size(), 0);
    for (NodeId r : roots_) {
      if (nodes_[r.index()].parent) throw Error("root '" + nodes_[r.index()].name + "' has a parent");
    }
    for (NodeId id : preorder()) {
      if (++visits[id.index()] > 1) throw Error("cycle or shared child at '" + node(id).name + "'");
      const auto& n = nodes_[id.index()];
      for (NodeId c : n.children) {
        const auto& child = nodes_[c.index()];
        if (child.parent != id) throw Error("child '" + child.name + "' has inconsistent parent");
        if (child.depth != n.depth + 1) throw Error("inconsistent depth at '" + child.name + "'");
      }
    }
    std::set<std::string> names, terms;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if (visits[i] != 1) throw Error("node '" + n.name + "' is unreachable from a root");
      if (!names.insert(n.name).second) throw Error("duplicate node name '" + n.name + "'");
      if (std::find(n.cluster.begin(), n.cluster.end(), n.name) == n.cluster.end()) {
        throw Error("node '" + n.name + "' is missing from its own cluster");
      }
      for (const auto& t : n.cluster) {
        if (!terms.insert(t).second) throw Error("term '" + t + "' appears in two clusters");
      }
    }
  }

 private:
  void check(NodeId id) const {
    if (id.index() >= nodes_.size()) throw Error("unknown taxonomy node id " + std::to_string(id.value));
  }

  NodeId make_node(std::string name, std::optional<NodeId> parent, std::size_t depth) {
    if (name.empty()) throw Error("empty node name");
    if (by_name_.contains(name)) throw Error("duplicate node name '" + name + "'");
    if (auto owner = cluster_owner(name)) {
      throw Error("node name '" + name + "' already belongs to the cluster of '" +
                  nodes_[owner->index()].name + "'");
    }
    const NodeId id(nodes_.size());
    TaxonomyNode n;
    n.name = name;
    n.cluster = {name};
    n.depth = depth;
    n.parent = parent;
    nodes_.push_back(std::move(n));
    by_name_.emplace(name, id);
    owner_.emplace(std::move(name), id);
    return id;
  }

  void shift_depth(NodeId id, std::size_t by) {
    nodes_[id.index()].depth += by;
    for (NodeId c : nodes_[id.index()].children) shift_depth(c, by);
  }

  std::vector<TaxonomyNode> nodes_;
  std::vector<NodeId> roots_;
  std::unordered_map<std::string, NodeId> by_name_;
  std::unordered_map<std::string, NodeId> owner_;
};

namespace detail {

inline void load_json_node(const nlohmann::json& j, Taxonomy& tax, std::optional<NodeId> parent,
                           const std::string& path,
                           std::vector<std::pair<NodeId, std::vector<std::string>>>& clusters) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
    throw Error("taxonomy parse error at " + path + ": node object without a string \"name\"");
  }
  const std::string name = to_lower_ascii(j["name"].get<std::string>());
  const std::string here = path + "/" + name;
  // A name already on the path back to the root closes a cycle.
  for (std::optional<NodeId> a = parent; a; a = tax.parent(*a)) {
    if (tax.node(*a).name == name) throw Error("taxonomy parse error at " + here + ": cycle detected");
  }
  if (tax.find(name)) throw Error("taxonomy parse error at " + here + ": duplicate node name");
  const NodeId id = parent ? tax.attach(*parent, name) : tax.add_root(name);
  if (j.contains("cluster")) {
    if (!j["cluster"].is_array()) throw Error("taxonomy parse error at " + here + ": \"cluster\" must be an array");
    std::vector<std::string> terms;
    for (const auto& t : j["cluster"]) {
      if (!t.is_string()) throw Error("taxonomy parse error at " + here + ": non-string cluster term");
      const auto term = to_lower_ascii(t.get<std::string>());
      if (term != name) terms.push_back(term);
    }
    clusters.emplace_back(id, std::move(terms));
  }
  if (j.contains("children")) {
    if (!j["children"].is_array()) throw Error("taxonomy parse error at " + here + ": \"children\" must be an array");
    for (const auto& c : j["children"]) load_json_node(c, tax, id, here, clusters);
  }
}

inline Taxonomy load_edge_list(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> edges;
  std::vector<std::string> order;
  std::map<std::string, std::string> parent_of;
  std::map<std::string, std::vector<std::string>> children_of;
  auto remember = [&](const std::string& n) {
    if (std::find(order.begin(), order.end(), n) == order.end()) order.push_back(n);
  };
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      // A bare name declares an isolated root.
      remember(to_lower_ascii(line));
      continue;
    }
    const auto p = to_lower_ascii(line.substr(0, tab));
    const auto c = to_lower_ascii(line.substr(tab + 1));
    if (p.empty() || c.empty()) throw Error("taxonomy parse error at line " + std::to_string(line_no) + ": orphan edge");
    if (p == c) throw Error("taxonomy parse error at " + p + ": cycle detected");
    if (auto it = parent_of.find(c); it != parent_of.end()) {
      throw Error("taxonomy parse error at " + p + "/" + c + ": node already has parent '" + it->second + "'");
    }
    parent_of[c] = p;
    children_of[p].push_back(c);
    remember(p);
    remember(c);
  }
  Taxonomy tax;
  std::function<void(NodeId)> build = [&](NodeId id) {
    for (const auto& c : children_of[tax.node(id).name]) build(tax.attach(id, c));
  };
  for (const auto& n : order) {
    if (!parent_of.contains(n)) build(tax.add_root(n));
  }
  if (tax.size() != order.size()) {
    for (const auto& n : order) {
      if (!tax.find(n)) throw Error("taxonomy parse error at " + n + ": cycle detected");
    }
  }
  return tax;
}

}  // namespace detail

// Parses a seed or exported taxonomy. Clusters default to {name}.
inline Taxonomy load_taxonomy(std::string_view serialized) {
  const auto first = serialized.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw Error("taxonomy parse error: empty input");
  if (serialized[first] != '{' && serialized[first] != '[') return detail::load_edge_list(serialized);

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
  Taxonomy tax;
  std::vector<std::pair<NodeId, std::vector<std::string>>> clusters;
  for (const auto& t : tops) detail::load_json_node(t, tax, std::nullopt, "", clusters);
  if (tax.size() == 0) throw Error("taxonomy parse error: no nodes");
  // Clusters are applied after every node exists so node names take priority.
  for (auto& [id, terms] : clusters) {
    for (const auto& t : terms) {
      if (tax.find(t)) throw Error("taxonomy parse error at " + tax.node(id).name + ": cluster term '" + t + "' is a node name");
      tax.add_to_cluster(id, t);
    }
  }
  tax.validate();
  return tax;
}

inline Taxonomy load_seed(std::string_view serialized) { return load_taxonomy(serialized); }

// Cluster order used when serializing a node: returns the terms to emit.
using ClusterRanker = std::function<std::vector<std::string>(NodeId, const TaxonomyNode&)>;

inline nlohmann::ordered_json to_json(const Taxonomy& tax, const ClusterRanker& rank = {}) {
  std::function<nlohmann::ordered_json(NodeId)> emit = [&](NodeId id) {
    const auto& n = tax.node(id);
    nlohmann::ordered_json j;
    j["name"] = n.name;
    j["cluster"] = rank ? rank(id, n) : n.cluster;
    j["children"] = nlohmann::ordered_json::array();
    for (NodeId c : n.children) j["children"].push_back(emit(c));
    return j;
  };
  if (tax.roots().size() == 1) return emit(tax.roots().front());
  nlohmann::ordered_json root;
  root["name"] = kVirtualRootName;
  root["cluster"] = nlohmann::ordered_json::array();
  root["children"] = nlohmann::ordered_json::array();
  for (NodeId r : tax.roots()) root["children"].push_back(emit(r));
  return root;
}

inline std::string dump_taxonomy(const Taxonomy& tax, const ClusterRanker& rank = {}) {
  return to_json(tax, rank).dump(2) + "\n";
}

}  // namespace taxoforge
