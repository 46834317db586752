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

// Joint embedding of words, documents and taxonomy concepts.
//
// The objective combines three softmax log-likelihoods, each approximated by
// logistic loss over K sampled negatives:
//   local context:  P(w_j | w_i) ~ exp(u_{w_i} . v_{w_j}), negatives from unigram^0.75
//   document:       P(d | w_i)   ~ exp(u_{w_i} . u_d),     negatives uniform over documents
//   proximity:      P(e | w)     ~ exp(u_w . u_e),         w in C_e, negatives uniform over concepts
// and concept clusters grow by one distinctive word per epoch.

#pragma once

#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "taxoforge/common.hpp"
#include "taxoforge/corpus.hpp"
#include "taxoforge/taxonomy.hpp"

namespace taxoforge {

enum class Block : std::uint8_t { kCenter = 0, kContext = 1, kDocument = 2, kConcept = 3 };

inline const char* block_name(Block b) {
  switch (b) {
    case Block::kCenter: return "center";
    case Block::kContext: return "context";
    case Block::kDocument: return "document";
    case Block::kConcept: return "concept";
  }
  return "?";
}

template <std::floating_point Real>
class BasicEmbeddingTable {
 public:
  BasicEmbeddingTable() = default;
  BasicEmbeddingTable(std::size_t dim, std::size_t words, std::size_t docs, std::size_t concepts)
      : dim_(dim), rows_{words, words, docs, concepts} {
    for (std::size_t b = 0; b < 4; ++b) data_[b].assign(rows_[b] * dim_, Real{0});
  }

  std::size_t dim() const { return dim_; }
  std::size_t rows(Block b) const { return rows_[static_cast<std::size_t>(b)]; }

  std::span<Real> row(Block b, std::size_t i) {
    check(b, i);
    return {data_[static_cast<std::size_t>(b)].data() + i * dim_, dim_};
  }
  std::span<const Real> row(Block b, std::size_t i) const {
    check(b, i);
    return {data_[static_cast<std::size_t>(b)].data() + i * dim_, dim_};
  }

  std::span<Real> center(TermId t) { return row(Block::kCenter, t.index()); }
  std::span<const Real> center(TermId t) const { return row(Block::kCenter, t.index()); }
  std::span<Real> context(TermId t) { return row(Block::kContext, t.index()); }
  std::span<const Real> context(TermId t) const { return row(Block::kContext, t.index()); }
  std::span<Real> document(std::size_t d) { return row(Block::kDocument, d); }
  std::span<const Real> document(std::size_t d) const { return row(Block::kDocument, d); }
  std::span<Real> concept_vector(NodeId n) { return row(Block::kConcept, n.index()); }
  std::span<const Real> concept_vector(NodeId n) const { return row(Block::kConcept, n.index()); }

  std::vector<Real>& data(Block b) { return data_[static_cast<std::size_t>(b)]; }
  const std::vector<Real>& data(Block b) const { return data_[static_cast<std::size_t>(b)]; }

  bool all_finite() const {
    for (const auto& block : data_) {
      for (Real x : block) {
        if (!std::isfinite(x)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const BasicEmbeddingTable&, const BasicEmbeddingTable&) = default;

 private:
  void check(Block b, std::size_t i) const {
    if (i >= rows(b)) {
      throw Error(std::string("missing ") + block_name(b) + " embedding row " + std::to_string(i));
    }
  }

  std::size_t dim_ = 0;
  std::array<std::size_t, 4> rows_{};
  std::array<std::vector<Real>, 4> data_;
};

using EmbeddingTable = BasicEmbeddingTable<float>;

struct LossWeights {
  double local = 1.0;
  double document = 1.5;
  double proximity = 1.0;
};

struct TrainingConfig {
  std::size_t dim = 100;
  std::size_t window = 5;
  LossWeights weights;
  std::size_t negatives = 5;
  double lr_start = 0.025;
  double lr_end = 0.0001;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  // Single-threaded, bit-reproducible updates. When false, `threads` workers
  // update the shared tables without locks.
  bool deterministic = true;
  std::size_t threads = 1;
  // Distinctiveness margin for cluster growth.
  double margin = 0.05;

  void validate() const {
    if (dim < 1) throw Error("embedding dimension must be at least 1");
    if (window < 1) throw Error("context window must be at least 1");
    if (negatives < 1) throw Error("negatives per positive must be at least 1");
    if (weights.local < 0 || weights.document < 0 || weights.proximity < 0) {
      throw Error("loss weights must be non-negative");
    }
    if (!(lr_start > 0) || lr_end < 0) throw Error("invalid learning rate schedule");
    if (threads < 1) throw Error("threads must be at least 1");
  }
};

// Center, document and concept rows uniform in [-0.5/d, 0.5/d]; context rows zero.
template <std::floating_point Real = float>
BasicEmbeddingTable<Real> init_embeddings(std::size_t vocab_size, std::size_t n_docs,
                                          std::size_t n_concepts, std::size_t dim,
                                          std::uint64_t seed) {
  if (dim == 0) throw Error("embedding dimension must be at least 1");
  if (vocab_size == 0 || n_docs == 0 || n_concepts == 0) {
    throw Error("embedding table needs at least one word, document and concept");
  }
  BasicEmbeddingTable<Real> table(dim, vocab_size, n_docs, n_concepts);
  Rng rng(seed);
  const double scale = 1.0 / static_cast<double>(dim);
  for (Block b : {Block::kCenter, Block::kDocument, Block::kConcept}) {
    for (Real& x : table.data(b)) x = static_cast<Real>((uniform_unit(rng) - 0.5) * scale);
  }
  return table;
}

template <typename A, typename B>
double dot(std::span<A> a, std::span<B> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename A, typename B>
double cosine(std::span<A> a, std::span<B> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0 || nb == 0) return 0.0;
  return dot(a, b) / (na * nb);
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(sigmoid(z)), stable for large |z|.
inline double log_sigmoid(double z) {
  if (z >= 0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

// ---------------------------------------------------------------------------
// Explicit loss and gradient over a batch of sampled pairs.

struct SkipGramSample {
  TermId center;
  TermId context;
  std::vector<TermId> negatives;
};

struct DocumentSample {
  TermId word;
  std::uint32_t doc = 0;
  std::vector<std::uint32_t> negatives;
};

struct ProximitySample {
  TermId word;
  NodeId concept_node;
  std::vector<NodeId> negatives;
};

struct Batch {
  std::vector<SkipGramSample> local;
  std::vector<DocumentSample> document;
  std::vector<ProximitySample> proximity;
};

struct RowKey {
  Block block;
  std::size_t row;
  friend auto operator<=>(const RowKey&, const RowKey&) = default;
};

template <std::floating_point Real>
using SparseGradient = std::map<RowKey, std::vector<Real>>;

template <std::floating_point Real>
struct LossAndGradient {
  double loss = 0;
  SparseGradient<Real> gradient;
};

namespace detail {

template <std::floating_point Real>
void accumulate_pair(const BasicEmbeddingTable<Real>& table, RowKey input, RowKey positive,
                     std::span<const RowKey> negatives, double weight, LossAndGradient<Real>& out) {
  const auto x = table.row(input.block, input.row);
  auto grad_row = [&](RowKey k) -> std::vector<Real>& {
    auto [it, inserted] = out.gradient.try_emplace(k);
    if (inserted) it->second.assign(table.dim(), Real{0});
    return it->second;
  };
  auto term = [&](RowKey target, double label) {
    const auto t = table.row(target.block, target.row);
    const double z = dot(x, t);
    // label 1: -log s(z); label 0: -log s(-z). Derivative wrt z is s(z) - label.
    out.loss += weight * -(label > 0 ? log_sigmoid(z) : log_sigmoid(-z));
    const double g = weight * (sigmoid(z) - label);
    auto& gx = grad_row(input);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += static_cast<Real>(g * t[i]);
    auto& gt = grad_row(target);
    for (std::size_t i = 0; i < x.size(); ++i) gt[i] += static_cast<Real>(g * x[i]);
  };
  term(positive, 1.0);
  for (const RowKey& n : negatives) term(n, 0.0);
}

}  // namespace detail

// Negative-sampling surrogate of -(L_l + lambda_d L_d + lambda_p L_prox) over
// the batch, with gradients for every referenced row.
template <std::floating_point Real>
LossAndGradient<Real> loss_and_grad(const Batch& batch, const BasicEmbeddingTable<Real>& table,
                                    const LossWeights& weights) {
  LossAndGradient<Real> out;
  std::vector<RowKey> negs;
  if (weights.local > 0) {
    for (const auto& s : batch.local) {
      negs.clear();
      for (TermId n : s.negatives) negs.push_back({Block::kContext, n.index()});
      detail::accumulate_pair(table, {Block::kCenter, s.center.index()},
                              {Block::kContext, s.context.index()}, negs, weights.local, out);
    }
  }
  if (weights.document > 0) {
    for (const auto& s : batch.document) {
      negs.clear();
      for (auto n : s.negatives) negs.push_back({Block::kDocument, n});
      detail::accumulate_pair(table, {Block::kCenter, s.word.index()}, {Block::kDocument, s.doc},
                              negs, weights.document, out);
    }
  }
  if (weights.proximity > 0) {
    for (const auto& s : batch.proximity) {
      negs.clear();
      for (NodeId n : s.negatives) negs.push_back({Block::kConcept, n.index()});
      detail::accumulate_pair(table, {Block::kCenter, s.word.index()},
                              {Block::kConcept, s.concept_node.index()}, negs, weights.proximity, out);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic training.

// Unigram^power noise distribution over the vocabulary.
class UnigramNoise {
 public:
  explicit UnigramNoise(const Vocabulary& vocab, double power = 0.75) {
    cumulative_.reserve(vocab.size());
    double total = 0;
    for (auto c : vocab.counts()) {
      total += std::pow(static_cast<double>(c), power);
      cumulative_.push_back(total);
    }
    for (double& c : cumulative_) c /= total;
  }

  TermId sample(Rng& rng) const {
    const double u = uniform_unit(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return TermId(static_cast<std::size_t>(it - cumulative_.begin()));
  }

 private:
  std::vector<double> cumulative_;
};

template <std::floating_point Real>
class EmbeddingTrainer {
 public:
  EmbeddingTrainer(const Corpus& corpus, const TrainingConfig& config)
      : corpus_(corpus), config_(config), noise_(corpus.vocabulary) {
    config_.validate();
    for (const auto& s : corpus_.sentences) tokens_per_epoch_ += s.tokens.size();
  }

  const TrainingConfig& config() const { return config_; }

  // One pass over every sentence. `cluster_of[w]` names the concept whose
  // cluster currently holds word w.
  void run_epoch(BasicEmbeddingTable<Real>& table, std::span<const std::optional<NodeId>> cluster_of,
                 std::size_t epoch) const {
    if (cluster_of.size() != corpus_.vocabulary.size()) throw Error("cluster map size mismatch");
    std::atomic<std::size_t> processed{0};
    const std::size_t n = corpus_.sentences.size();
    const std::size_t workers = config_.deterministic ? 1 : std::min(config_.threads, std::max<std::size_t>(n, 1));
    if (workers <= 1) {
      Rng rng(config_.seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1)));
      train_range(table, cluster_of, epoch, 0, n, rng, processed);
      return;
    }
    // Lock-free shared updates: workers may race on rows they both touch.
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        Rng rng(config_.seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1)) ^ (0xBF58476D1CE4E5B9ull * (w + 1)));
        train_range(table, cluster_of, epoch, n * w / workers, n * (w + 1) / workers, rng, processed);
      });
    }
    for (auto& t : pool) t.join();
  }

 private:
  double learning_rate(std::size_t epoch, std::size_t done) const {
    const double total = static_cast<double>(std::max<std::size_t>(config_.epochs, 1)) *
                         static_cast<double>(std::max<std::size_t>(tokens_per_epoch_, 1));
    const double t = static_cast<double>(epoch * tokens_per_epoch_ + done);
    const double frac = std::min(1.0, t / total);
    return config_.lr_start - (config_.lr_start - config_.lr_end) * frac;
  }

  // Gradient step on one positive (label 1) or negative (label 0) target.
  static void step(std::span<Real> x, std::span<Real> t, double label, double lr,
                   std::vector<double>& dx) {
    const double g = lr * (label - sigmoid(dot(x, t)));
    for (std::size_t i = 0; i < x.size(); ++i) {
      dx[i] += g * t[i];
      t[i] += static_cast<Real>(g * x[i]);
    }
  }

  void train_range(BasicEmbeddingTable<Real>& table, std::span<const std::optional<NodeId>> cluster_of,
                   std::size_t epoch, std::size_t begin, std::size_t end, Rng& rng,
                   std::atomic<std::size_t>& processed) const {
    const auto& w = config_.weights;
    const std::size_t n_docs = table.rows(Block::kDocument);
    const std::size_t n_concepts = table.rows(Block::kConcept);
    std::vector<double> dx(table.dim());
    for (std::size_t s = begin; s < end; ++s) {
      const auto& sentence = corpus_.sentences[s];
      const auto& tokens = sentence.tokens;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        const double lr = learning_rate(epoch, processed.fetch_add(1, std::memory_order_relaxed));
        const TermId word = tokens[i];
        auto x = table.center(word);
        std::fill(dx.begin(), dx.end(), 0.0);

        if (w.local > 0) {
          const std::size_t lo = i >= config_.window ? i - config_.window : 0;
          const std::size_t hi = std::min(tokens.size(), i + config_.window + 1);
          for (std::size_t j = lo; j < hi; ++j) {
            if (j == i) continue;
            step(x, table.context(tokens[j]), 1.0, lr * w.local, dx);
            for (std::size_t k = 0; k < config_.negatives; ++k) {
              const TermId neg = noise_.sample(rng);
              if (neg == tokens[j]) continue;
              step(x, table.context(neg), 0.0, lr * w.local, dx);
            }
          }
        }
        if (w.document > 0) {
          step(x, table.document(sentence.doc), 1.0, lr * w.document, dx);
          for (std::size_t k = 0; k < config_.negatives && n_docs > 1; ++k) {
            const auto neg = uniform_index(rng, n_docs);
            if (neg == sentence.doc) continue;
            step(x, table.document(neg), 0.0, lr * w.document, dx);
          }
        }
        if (w.proximity > 0 && cluster_of[word.index()]) {
          const NodeId c = *cluster_of[word.index()];
          step(x, table.concept_vector(c), 1.0, lr * w.proximity, dx);
          for (std::size_t k = 0; k < config_.negatives && n_concepts > 1; ++k) {
            const NodeId neg(uniform_index(rng, n_concepts));
            if (neg == c) continue;
            step(x, table.concept_vector(neg), 0.0, lr * w.proximity, dx);
          }
        }
        for (std::size_t d = 0; d < x.size(); ++d) x[d] += static_cast<Real>(dx[d]);
      }
    }
  }

  const Corpus& corpus_;
  TrainingConfig config_;
  UnigramNoise noise_;
  std::size_t tokens_per_epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Concept clusters.

struct ClusterAddition {
  NodeId node;
  TermId term;
  double cosine = 0;
};

// For each concept, in node order, adds the unassigned word with the highest
// cosine to the concept among words whose cosine to it beats every other
// concept by at least `margin`. At most one word per concept per call.
template <std::floating_point Real>
std::vector<ClusterAddition> grow_clusters(const BasicEmbeddingTable<Real>& table, Taxonomy& tax,
                                           const Vocabulary& vocab, double margin) {
  const std::size_t n_concepts = tax.size();
  const std::size_t n_words = vocab.size();
  if (n_concepts == 0) return {};
  if (table.rows(Block::kConcept) < n_concepts) throw Error("embedding table is missing concept rows");

  std::vector<std::vector<double>> concepts(n_concepts);
  for (std::size_t c = 0; c < n_concepts; ++c) {
    const auto v = table.concept_vector(NodeId(c));
    const double norm = std::sqrt(dot(v, v));
    concepts[c].resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) concepts[c][i] = norm > 0 ? v[i] / norm : 0.0;
  }

  // cos(w, e) for every unassigned word, plus the best and runner-up concept.
  struct Candidate {
    TermId word;
    std::vector<double> cos;
    std::size_t best = 0;
    double best_cos = -2, second_cos = -2;
  };
  std::vector<Candidate> candidates;
  std::vector<double> cw;
  for (std::size_t w = 0; w < n_words; ++w) {
    const TermId term(w);
    if (tax.cluster_owner(vocab.term(term))) continue;
    const auto u = table.center(term);
    const double norm = std::sqrt(dot(u, u));
    Candidate cand{term, std::vector<double>(n_concepts, 0.0)};
    for (std::size_t c = 0; c < n_concepts; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < u.size(); ++i) s += static_cast<double>(u[i]) * concepts[c][i];
      cand.cos[c] = norm > 0 ? s / norm : 0.0;
      if (cand.cos[c] > cand.best_cos) {
        cand.second_cos = cand.best_cos;
        cand.best_cos = cand.cos[c];
        cand.best = c;
      } else if (cand.cos[c] > cand.second_cos) {
        cand.second_cos = cand.cos[c];
      }
    }
    candidates.push_back(std::move(cand));
  }

  std::vector<bool> taken(candidates.size(), false);
  std::vector<ClusterAddition> added;
  for (std::size_t c = 0; c < n_concepts; ++c) {
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (taken[i]) continue;
      const auto& cand = candidates[i];
      if (n_concepts > 1) {
        const double runner_up = cand.best == c ? cand.second_cos : cand.best_cos;
        if (cand.cos[c] - runner_up < margin) continue;
      }
      if (!pick || cand.cos[c] > candidates[*pick].cos[c]) pick = i;
    }
    if (!pick) continue;
    taken[*pick] = true;
    const auto& cand = candidates[*pick];
    tax.add_to_cluster(NodeId(c), vocab.term(cand.word));
    added.push_back({NodeId(c), cand.word, cand.cos[c]});
  }
  return added;
}

// Word -> concept map derived from the taxonomy clusters.
inline std::vector<std::optional<NodeId>> cluster_membership(const Taxonomy& tax, const Vocabulary& vocab) {
  std::vector<std::optional<NodeId>> out(vocab.size());
  for (std::size_t n = 0; n < tax.size(); ++n) {
    for (const auto& term : tax.node(NodeId(n)).cluster) {
      auto id = vocab.find(term);
      if (!id) throw Error("taxonomy term '" + term + "' of node '" + tax.node(NodeId(n)).name + "' not in vocabulary");
      out[id->index()] = NodeId(n);
    }
  }
  return out;
}

// Trains the joint embedding. After every epoch each concept cluster of `tax`
// grows by at most one distinctive word.
template <std::floating_point Real = float>
BasicEmbeddingTable<Real> train_embeddings(const Corpus& corpus, Taxonomy& tax,
                                           const TrainingConfig& config,
                                           std::vector<ClusterAddition>* additions = nullptr) {
  config.validate();
  if (tax.size() == 0) throw Error("taxonomy has no concepts");
  (void)cluster_membership(tax, corpus.vocabulary);
  auto table = init_embeddings<Real>(corpus.vocabulary.size(), corpus.num_documents(), tax.size(),
                                     config.dim, config.seed);
  EmbeddingTrainer<Real> trainer(corpus, config);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto membership = cluster_membership(tax, corpus.vocabulary);
    trainer.run_epoch(table, membership, epoch);
    if (!table.all_finite()) throw Error("non-finite embedding after epoch " + std::to_string(epoch));
    auto added = grow_clusters(table, tax, corpus.vocabulary, config.margin);
    if (additions) additions->insert(additions->end(), added.begin(), added.end());
  }
  return table;
}

struct RankedTerm {
  TermId term;
  double cosine = 0;
};

// Cluster terms of `node` by cosine to its concept vector, ties by term id.
template <std::floating_point Real>
std::vector<RankedTerm> top_terms(const BasicEmbeddingTable<Real>& table, const Taxonomy& tax,
                                  const Vocabulary& vocab, NodeId node, std::size_t k) {
  const auto& n = tax.node(node);
  if (node.index() >= table.rows(Block::kConcept)) {
    throw Error("no concept embedding for node '" + n.name + "'");
  }
  const auto concept_vec = table.concept_vector(node);
  std::vector<RankedTerm> ranked;
  for (const auto& term : n.cluster) {
    auto id = vocab.find(term);
    if (!id || !vocab.contains(*id) || id->index() >= table.rows(Block::kCenter)) {
      throw Error("no word embedding for term '" + term + "' of node '" + n.name + "'");
    }
    ranked.push_back({*id, cosine(table.center(*id), concept_vec)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedTerm& a, const RankedTerm& b) {
    return a.cosine != b.cosine ? a.cosine > b.cosine : a.term < b.term;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

// Topical taxonomy with each node's top-k cluster terms ranked by embedding.
template <std::floating_point Real>
std::string export_topical(const Taxonomy& tax, const BasicEmbeddingTable<Real>& table,
                           const Vocabulary& vocab, std::size_t k) {
  return dump_taxonomy(tax, [&](NodeId id, const TaxonomyNode&) {
    std::vector<std::string> out;
    for (const auto& r : top_terms(table, tax, vocab, id, k)) out.push_back(vocab.term(r.term));
    return out;
  });
}

// Mean of the context-word vectors around each mention of `term`, averaged
// over mentions (at most `max_mentions`, earliest first).
template <std::floating_point Real>
std::vector<double> context_signature(const BasicEmbeddingTable<Real>& table, const CorpusIndex& index,
                                      TermId term, std::size_t window, std::size_t max_mentions = 200) {
  std::vector<double> sum(table.dim(), 0.0);
  std::size_t mentions = 0;
  for (SentenceId sid : index.postings(term)) {
    if (mentions >= max_mentions) break;
    const auto& tokens = index.corpus().sentence(sid).tokens;
    for (std::size_t i = 0; i < tokens.size() && mentions < max_mentions; ++i) {
      if (tokens[i] != term) continue;
      std::vector<double> mention(table.dim(), 0.0);
      std::size_t n = 0;
      const std::size_t lo = i >= window ? i - window : 0;
      const std::size_t hi = std::min(tokens.size(), i + window + 1);
      for (std::size_t j = lo; j < hi; ++j) {
        if (j == i) continue;
        const auto v = table.context(tokens[j]);
        for (std::size_t d = 0; d < v.size(); ++d) mention[d] += v[d];
        ++n;
      }
      if (n == 0) continue;
      for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += mention[d] / static_cast<double>(n);
      ++mentions;
    }
  }
  if (mentions > 0) {
    for (double& x : sum) x /= static_cast<double>(mentions);
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Persistence.
//
// Binary layout (little-endian): "TXFEMB" magic, u8 version = 1, u32 dim,
// u32 words, u32 documents, u32 concepts, then the center, context,
// document and concept blocks as row-major float32.

inline constexpr std::string_view kEmbeddingMagic = "TXFEMB";
inline constexpr std::uint8_t kEmbeddingVersion = 1;

template <std::floating_point Real>
void save_embeddings(const BasicEmbeddingTable<Real>& table, std::ostream& out) {
  detail::write_magic(out, kEmbeddingMagic, kEmbeddingVersion);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
  for (Block b : {Block::kCenter, Block::kDocument, Block::kConcept}) {
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(table.rows(b)));
  }
  for (Block b : {Block::kCenter, Block::kContext, Block::kDocument, Block::kConcept}) {
    for (Real x : table.data(b)) detail::write_pod<float>(out, static_cast<float>(x));
  }
}

inline EmbeddingTable load_embeddings(std::istream& in) {
  detail::expect_magic(in, kEmbeddingMagic, kEmbeddingVersion);
  const auto dim = detail::read_pod<std::uint32_t>(in);
  const auto words = detail::read_pod<std::uint32_t>(in);
  const auto docs = detail::read_pod<std::uint32_t>(in);
  const auto concepts = detail::read_pod<std::uint32_t>(in);
  if (dim == 0) throw Error("corrupt embedding file: zero dimension");
  EmbeddingTable table(dim, words, docs, concepts);
  for (Block b : {Block::kCenter, Block::kContext, Block::kDocument, Block::kConcept}) {
    for (float& x : table.data(b)) x = detail::read_pod<float>(in);
  }
  return table;
}

// Conventional word-vector text format: "<words> <dim>" header, then one
// "term v_1 ... v_dim" line per word (center vectors).
template <std::floating_point Real>
void write_word_vectors_text(const BasicEmbeddingTable<Real>& table, const Vocabulary& vocab,
                             std::ostream& out) {
  out << vocab.size() << ' ' << table.dim() << '\n';
  char buf[64];
  for (std::size_t w = 0; w < vocab.size(); ++w) {
    out << vocab.terms()[w];
    for (Real x : table.center(TermId(w))) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(x));
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    out << '\n';
  }
}

}  // namespace taxoforge
