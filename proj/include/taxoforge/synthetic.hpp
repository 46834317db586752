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

// Planted-taxonomy corpus generator. Every document talks about one subtopic:
// Hearst lists tie the root to topics and topics to subtopics, an "is_a
// type_of" sentence repeats the edge, and descriptor sentences give each
// concept its own vocabulary. Filler sentences carry no pattern.

#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "taxoforge/common.hpp"
#include "taxoforge/taxonomy.hpp"

namespace taxoforge {

struct PlantedConcept {
  std::string name;
  std::vector<std::string> descriptors;
  std::vector<PlantedConcept> children;
};

struct PlantedOptions {
  std::size_t docs_per_subtopic = 4;
  std::size_t descriptor_sentences = 3;
  std::uint64_t seed = 7;
};

struct PlantedCorpus {
  std::string text;     // one document per line
  Taxonomy truth;       // the full planted tree
  std::string seed;     // seed taxonomy (JSON): root, first two topics, first child of each
  std::size_t sentences = 0;
};

// 1 root, 5 topics, 15 subtopics, each with private descriptor words.
inline PlantedConcept default_planted_tree() {
  auto c = [](std::string n, std::vector<std::string> d, std::vector<PlantedConcept> ch = {}) {
    return PlantedConcept{std::move(n), std::move(d), std::move(ch)};
  };
  return c("food", {"cuisine", "menu"},
           {
               c("dessert", {"sweet", "sugary"},
                 {c("cake", {"frosting", "sponge"}), c("pie", {"crust", "filling"}), c("pudding", {"custard", "creamy"})}),
               c("seafood", {"ocean", "fishy"},
                 {c("shrimp", {"prawn", "peeled"}), c("crab", {"claws", "shell"}), c("salmon", {"fillet", "smoked"})}),
               c("meat", {"protein", "butcher"},
                 {c("beef", {"steak", "brisket"}), c("pork", {"bacon", "ribs"}), c("lamb", {"mutton", "chops"})}),
               c("bread", {"bakery", "flour"},
                 {c("baguette", {"french", "crusty"}), c("bagel", {"sesame", "chewy"}),
                  c("croissant", {"buttery", "flaky"})}),
               c("soup", {"broth", "bowl"},
                 {c("chowder", {"clam", "thick"}), c("bisque", {"lobster", "velvety"}),
                  c("ramen", {"noodles", "miso"})}),
           });
}

inline PlantedCorpus generate_planted(const PlantedConcept& root, const PlantedOptions& options = {}) {
  static const std::vector<std::string> kFiller = {"we", "really", "liked", "it", "today", "the", "place",
                                                   "was", "busy", "again", "our", "friends", "came", "along"};
  static const std::vector<std::string> kOpeners = {"many people enjoy", "the menu lists", "locals order"};
  static const std::vector<std::string> kVerbs = {"comes_with", "has", "shows", "offers"};
  Rng rng(options.seed);
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& { return v[uniform_index(rng, v.size())]; };
  auto shuffle = [&](auto& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
  };
  auto list = [](const std::vector<std::string>& items) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) s += i + 1 == items.size() ? " and " : " , ";
      s += items[i];
    }
    return s;
  };
  auto filler = [&](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + pick(kFiller);
    return s;
  };

  PlantedCorpus out;
  std::ostringstream text;
  const auto& topics = root.children;
  for (std::size_t round = 0; round < options.docs_per_subtopic; ++round) {
    for (std::size_t t = 0; t < topics.size(); ++t) {
      const auto& topic = topics[t];
      for (const auto& sub : topic.children) {
        std::vector<std::string> sentences;

        // Root list with this topic and two others.
        std::vector<std::string> names;
        for (std::size_t k = 0; k < topics.size(); ++k) {
          if (k != t) names.push_back(topics[k].name);
        }
        shuffle(names);
        names.resize(std::min<std::size_t>(2, names.size()));
        names.push_back(topic.name);
        shuffle(names);
        sentences.push_back(pick(kOpeners) + " " + root.name + " such_as " + list(names));

        std::vector<std::string> subs;
        for (const auto& s : topic.children) subs.push_back(s.name);
        shuffle(subs);
        if (round % 2 == 0) {
          sentences.push_back("our " + topic.name + " such_as " + list(subs));
        } else {
          sentences.push_back("types_of " + topic.name + " include " + list(subs));
        }
        sentences.push_back(sub.name + " is_a type_of " + topic.name);

        // The document is about `sub`: its descriptors dominate.
        for (std::size_t d = 0; d < options.descriptor_sentences; ++d) {
          std::vector<std::string> desc = sub.descriptors;
          shuffle(desc);
          sentences.push_back(sub.name + " " + pick(kVerbs) + " " + list(desc));
        }
        sentences.push_back("the " + topic.name + " feels " + list(topic.descriptors));
        sentences.push_back(filler(5));
        shuffle(sentences);

        for (std::size_t i = 0; i < sentences.size(); ++i) text << (i ? " " : "") << sentences[i] << " .";
        text << '\n';
        out.sentences += sentences.size();
      }
    }
  }
  out.text = text.str();

  const NodeId r = out.truth.add_root(root.name);
  for (const auto& topic : topics) {
    const NodeId t = out.truth.attach(r, topic.name);
    for (const auto& s : topic.children) out.truth.attach(t, s.name);
  }

  Taxonomy seed;
  const NodeId sr = seed.add_root(root.name);
  for (std::size_t t = 0; t < std::min<std::size_t>(2, topics.size()); ++t) {
    const NodeId st = seed.attach(sr, topics[t].name);
    if (!topics[t].children.empty()) seed.attach(st, topics[t].children.front().name);
  }
  out.seed = dump_taxonomy(seed);
  return out;
}

}  // namespace taxoforge
