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

// Corpus ingestion, vocabulary, and the sentence-level inverted index used to
// retrieve relation statements and co-occurring candidate terms.

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "taxoforge/common.hpp"

namespace taxoforge {

inline constexpr std::size_t kDefaultMinCount = 50;
inline constexpr std::size_t kDefaultStatementCap = 200;

class Vocabulary {
 public:
  Vocabulary() = default;

  // Terms must be unique; ids are assigned in the given order.
  Vocabulary(std::vector<std::string> terms, std::vector<std::uint64_t> counts)
      : terms_(std::move(terms)), counts_(std::move(counts)) {
    if (terms_.size() != counts_.size()) throw Error("vocabulary term/count size mismatch");
    ids_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (!ids_.emplace(terms_[i], TermId(i)).second) {
        throw Error("duplicate vocabulary term '" + terms_[i] + "'");
      }
    }
  }

  std::size_t size() const { return terms_.size(); }
  bool contains(TermId id) const { return id.index() < terms_.size(); }

  std::optional<TermId> find(std::string_view term) const {
    auto it = ids_.find(std::string(term));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  TermId id(std::string_view term) const {
    if (auto found = find(term)) return *found;
    throw Error("term not in vocabulary: '" + std::string(term) + "'");
  }

  const std::string& term(TermId id) const {
    check(id);
    return terms_[id.index()];
  }

  std::uint64_t count(TermId id) const {
    check(id);
    return counts_[id.index()];
  }

  void check(TermId id) const {
    if (!contains(id)) throw Error("term not in vocabulary: id " + std::to_string(id.value));
  }

  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.terms_ == b.terms_ && a.counts_ == b.counts_;
  }

 private:
  std::vector<std::string> terms_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, TermId> ids_;
};

struct Sentence {
  std::vector<TermId> tokens;
  std::uint32_t doc = 0;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

// Sentences of one document occupy a contiguous range of the sentence store.
struct Document {
  std::uint32_t first_sentence = 0;
  std::uint32_t num_sentences = 0;

  friend bool operator==(const Document&, const Document&) = default;
};

struct Corpus {
  Vocabulary vocabulary;
  std::vector<Document> documents;
  std::vector<Sentence> sentences;

  std::size_t num_documents() const { return documents.size(); }
  std::size_t num_sentences() const { return sentences.size(); }
  const Sentence& sentence(SentenceId id) const { return sentences.at(id.index()); }
};

struct RelationStatement {
  SentenceId sentence;
  std::vector<TermId> tokens;
  std::size_t pos_a = 0;
  std::size_t pos_b = 0;

  TermId term_a() const { return tokens[pos_a]; }
  TermId term_b() const { return tokens[pos_b]; }

  RelationStatement reversed() const {
    RelationStatement r = *this;
    std::swap(r.pos_a, r.pos_b);
    return r;
  }

  friend bool operator==(const RelationStatement&, const RelationStatement&) = default;
};

namespace detail {

inline bool is_sentence_final(char c) { return c == '.' || c == '!' || c == '?'; }

inline bool is_strippable(char c) {
  switch (c) {
    case '.': case '!': case '?': case ',': case ';': case ':':
    case '"': case '\'': case '(': case ')': case '[': case ']':
      return true;
    default:
      return false;
  }
}

// Splits one document line into sentences of normalized tokens. A token whose
// trailing characters include '.', '!' or '?' closes the current sentence.
inline std::vector<std::vector<std::string>> split_document(std::string_view line) {
  std::vector<std::vector<std::string>> sentences(1);
  std::istringstream in{std::string(line)};
  std::string raw;
  while (in >> raw) {
    std::size_t begin = 0, end = raw.size();
    bool closes = false;
    while (end > begin && is_strippable(raw[end - 1])) {
      if (is_sentence_final(raw[end - 1])) closes = true;
      --end;
    }
    while (begin < end && is_strippable(raw[begin])) ++begin;
    if (end > begin) sentences.back().push_back(to_lower_ascii(raw.substr(begin, end - begin)));
    if (closes && !sentences.back().empty()) sentences.emplace_back();
  }
  if (sentences.back().empty()) sentences.pop_back();
  return sentences;
}

}  // namespace detail

// Reads one document per line. Terms below `min_count` are removed from the
// vocabulary and from every sentence; sentences and documents left empty are
// dropped so ids stay dense.
inline Corpus ingest(std::istream& source, std::size_t min_count = kDefaultMinCount) {
  if (min_count == 0) throw Error("min_count must be positive");
  std::vector<std::vector<std::vector<std::string>>> raw_docs;
  std::unordered_map<std::string, std::uint64_t> counts;
  std::string line;
  while (std::getline(source, line)) {
    auto sentences = detail::split_document(line);
    if (sentences.empty()) continue;
    for (const auto& s : sentences) {
      for (const auto& t : s) ++counts[t];
    }
    raw_docs.push_back(std::move(sentences));
  }
  if (raw_docs.empty()) throw Error("empty corpus");

  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [term, n] : counts) {
    if (n >= min_count) kept.emplace_back(term, n);
  }
  if (kept.empty()) throw Error("min_count too high");
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> terms;
  std::vector<std::uint64_t> term_counts;
  for (auto& [term, n] : kept) {
    terms.push_back(term);
    term_counts.push_back(n);
  }

  Corpus corpus;
  corpus.vocabulary = Vocabulary(std::move(terms), std::move(term_counts));
  for (const auto& doc : raw_docs) {
    Document d;
    d.first_sentence = static_cast<std::uint32_t>(corpus.sentences.size());
    const auto doc_id = static_cast<std::uint32_t>(corpus.documents.size());
    for (const auto& s : doc) {
      Sentence sentence;
      sentence.doc = doc_id;
      for (const auto& t : s) {
        if (auto id = corpus.vocabulary.find(t)) sentence.tokens.push_back(*id);
      }
      if (!sentence.tokens.empty()) corpus.sentences.push_back(std::move(sentence));
    }
    d.num_sentences = static_cast<std::uint32_t>(corpus.sentences.size()) - d.first_sentence;
    if (d.num_sentences > 0) corpus.documents.push_back(d);
  }
  return corpus;
}

inline Corpus ingest_text(std::string_view text, std::size_t min_count = kDefaultMinCount) {
  std::istringstream in{std::string(text)};
  return ingest(in, min_count);
}

// Writes the filtered corpus back in the input text format; re-ingesting the
// output with the same min_count reproduces the vocabulary and sentence store.
inline void write_text(const Corpus& corpus, std::ostream& out) {
  for (const auto& doc : corpus.documents) {
    for (std::uint32_t s = 0; s < doc.num_sentences; ++s) {
      const auto& sentence = corpus.sentences[doc.first_sentence + s];
      if (s > 0) out << ' ';
      for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
        if (i > 0) out << ' ';
        out << corpus.vocabulary.term(sentence.tokens[i]);
      }
      out << '.';
    }
    out << '\n';
  }
}

// Sentence-level inverted index. Pair co-occurrence is resolved lazily by
// intersecting postings. Holds a reference to the corpus, which must outlive it.
class CorpusIndex {
 public:
  explicit CorpusIndex(const Corpus& corpus) : corpus_(&corpus) {
    postings_.resize(corpus.vocabulary.size());
    for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
      for (TermId t : corpus.sentences[s].tokens) {
        auto& list = postings_[t.index()];
        if (list.empty() || list.back().index() != s) list.emplace_back(s);
      }
    }
  }

  const Corpus& corpus() const { return *corpus_; }
  const Vocabulary& vocabulary() const { return corpus_->vocabulary; }

  const std::vector<SentenceId>& postings(TermId term) const {
    corpus_->vocabulary.check(term);
    return postings_[term.index()];
  }

  std::vector<SentenceId> joint_sentences(TermId a, TermId b) const {
    const auto& pa = postings(a);
    const auto& pb = postings(b);
    std::vector<SentenceId> out;
    std::set_intersection(pa.begin(), pa.end(), pb.begin(), pb.end(), std::back_inserter(out));
    return out;
  }

  std::size_t cooccurrence_count(TermId a, TermId b) const {
    const auto& pa = postings(a);
    const auto& pb = postings(b);
    std::size_t n = 0;
    auto ia = pa.begin();
    auto ib = pb.begin();
    while (ia != pa.end() && ib != pb.end()) {
      if (*ia < *ib) {
        ++ia;
      } else if (*ib < *ia) {
        ++ib;
      } else {
        ++n;
        ++ia;
        ++ib;
      }
    }
    return n;
  }

 private:
  const Corpus* corpus_;
  std::vector<std::vector<SentenceId>> postings_;
};

// Sentences containing both terms, first `cap` by sentence id. Positions are
// the first occurrence of each term.
inline std::vector<RelationStatement> relation_statements(const CorpusIndex& index, TermId a,
                                                          TermId b,
                                                          std::size_t cap = kDefaultStatementCap) {
  index.vocabulary().check(a);
  index.vocabulary().check(b);
  if (a == b) throw Error("relation statement needs two distinct terms");
  std::vector<RelationStatement> out;
  for (SentenceId sid : index.joint_sentences(a, b)) {
    if (out.size() >= cap) break;
    const auto& tokens = index.corpus().sentence(sid).tokens;
    RelationStatement st;
    st.sentence = sid;
    st.tokens = tokens;
    st.pos_a = static_cast<std::size_t>(std::find(tokens.begin(), tokens.end(), a) - tokens.begin());
    st.pos_b = static_cast<std::size_t>(std::find(tokens.begin(), tokens.end(), b) - tokens.begin());
    out.push_back(std::move(st));
  }
  return out;
}

struct CooccurringTerm {
  TermId term;
  std::size_t sentences = 0;
};

// Terms sharing at least `min_cooccur` sentences with `anchor`, most frequent
// partner first, ties by id.
inline std::vector<CooccurringTerm> cooccurring_terms(const CorpusIndex& index, TermId anchor,
                                                      std::size_t min_cooccur) {
  std::unordered_map<TermId, std::size_t> counts;
  std::vector<TermId> seen;
  for (SentenceId sid : index.postings(anchor)) {
    seen.clear();
    for (TermId t : index.corpus().sentence(sid).tokens) {
      if (t == anchor || std::find(seen.begin(), seen.end(), t) != seen.end()) continue;
      seen.push_back(t);
      ++counts[t];
    }
  }
  std::vector<CooccurringTerm> out;
  for (auto [term, n] : counts) {
    if (n >= min_cooccur) out.push_back({term, n});
  }
  std::sort(out.begin(), out.end(), [](const CooccurringTerm& x, const CooccurringTerm& y) {
    return x.sentences != y.sentences ? x.sentences > y.sentences : x.term < y.term;
  });
  return out;
}

inline std::vector<TermId> candidate_terms(const CorpusIndex& index, TermId anchor,
                                           std::size_t min_cooccur) {
  std::vector<TermId> out;
  for (const auto& c : cooccurring_terms(index, anchor, min_cooccur)) out.push_back(c.term);
  return out;
}

// Random sentences with two distinct random token positions, used as
// irrelevant-context negatives.
inline std::vector<RelationStatement> sample_negative_sentences(const Corpus& corpus,
                                                                std::size_t n,
                                                                std::uint64_t seed) {
  if (n == 0) return {};
  std::vector<std::uint32_t> eligible;
  for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
    const auto& tokens = corpus.sentences[s].tokens;
    if (std::any_of(tokens.begin(), tokens.end(), [&](TermId t) { return t != tokens.front(); })) {
      eligible.push_back(static_cast<std::uint32_t>(s));
    }
  }
  if (eligible.empty()) throw Error("no sentence with two distinct tokens to sample from");

  Rng rng(seed);
  std::vector<RelationStatement> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto sid = eligible[uniform_index(rng, eligible.size())];
    const auto& tokens = corpus.sentences[sid].tokens;
    std::size_t pa, pb;
    do {
      pa = uniform_index(rng, tokens.size());
      pb = uniform_index(rng, tokens.size());
    } while (tokens[pa] == tokens[pb]);
    out.push_back({SentenceId(sid), tokens, pa, pb});
  }
  return out;
}

// Binary corpus layout (little-endian):
//   "TXFCORP" magic, u8 version = 1
//   u32 vocab size, then per term: u32 length, bytes, u64 count
//   u32 document count, then per document: u32 first sentence, u32 sentence count
//   u32 sentence count, then per sentence: u32 doc, u32 length, u32 token ids
// Postings are rebuilt on load by constructing a CorpusIndex.
inline constexpr std::string_view kCorpusMagic = "TXFCORP";
inline constexpr std::uint8_t kCorpusVersion = 1;

inline void save_corpus(const Corpus& corpus, std::ostream& out) {
  using detail::write_pod;
  detail::write_magic(out, kCorpusMagic, kCorpusVersion);
  const auto& vocab = corpus.vocabulary;
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(vocab.size()));
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    detail::write_string(out, vocab.terms()[i]);
    write_pod<std::uint64_t>(out, vocab.counts()[i]);
  }
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(corpus.documents.size()));
  for (const auto& d : corpus.documents) {
    write_pod<std::uint32_t>(out, d.first_sentence);
    write_pod<std::uint32_t>(out, d.num_sentences);
  }
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(corpus.sentences.size()));
  for (const auto& s : corpus.sentences) {
    write_pod<std::uint32_t>(out, s.doc);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.tokens.size()));
    for (TermId t : s.tokens) write_pod<std::uint32_t>(out, t.value);
  }
}

inline Corpus load_corpus(std::istream& in) {
  using detail::read_pod;
  detail::expect_magic(in, kCorpusMagic, kCorpusVersion);
  const auto n_terms = read_pod<std::uint32_t>(in);
  std::vector<std::string> terms(n_terms);
  std::vector<std::uint64_t> counts(n_terms);
  for (std::uint32_t i = 0; i < n_terms; ++i) {
    terms[i] = detail::read_string(in);
    counts[i] = read_pod<std::uint64_t>(in);
  }
  Corpus corpus;
  corpus.vocabulary = Vocabulary(std::move(terms), std::move(counts));
  corpus.documents.resize(read_pod<std::uint32_t>(in));
  for (auto& d : corpus.documents) {
    d.first_sentence = read_pod<std::uint32_t>(in);
    d.num_sentences = read_pod<std::uint32_t>(in);
  }
  corpus.sentences.resize(read_pod<std::uint32_t>(in));
  for (auto& s : corpus.sentences) {
    s.doc = read_pod<std::uint32_t>(in);
    s.tokens.resize(read_pod<std::uint32_t>(in));
    for (auto& t : s.tokens) {
      t = TermId(read_pod<std::uint32_t>(in));
      if (!corpus.vocabulary.contains(t)) throw Error("corrupt corpus file: token id out of range");
    }
    if (s.doc >= corpus.documents.size()) throw Error("corrupt corpus file: document id out of range");
  }
  for (const auto& d : corpus.documents) {
    if (std::uint64_t{d.first_sentence} + d.num_sentences > corpus.sentences.size()) {
      throw Error("corrupt corpus file: document range out of bounds");
    }
  }
  return corpus;
}

}  // namespace taxoforge
