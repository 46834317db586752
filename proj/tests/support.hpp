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

// Independent oracles and fixture generators shared by the unit tests and
// the acceptance binary. Oracles here deliberately avoid the library code
// they check: they count, enumerate or differentiate numerically.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "taxoforge/clustering.hpp"
#include "taxoforge/corpus.hpp"
#include "taxoforge/embedding.hpp"
#include "taxoforge/eval.hpp"
#include "taxoforge/pipeline.hpp"
#include "taxoforge/relation.hpp"
#include "taxoforge/synthetic.hpp"
#include "taxoforge/taxonomy.hpp"

namespace txf_test {

using namespace taxoforge;
namespace fs = std::filesystem;

// Fresh empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("taxoforge-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------
// Metric oracles.

struct PairFixture {
  AncestorPairSet pred;
  AncestorPairSet gold;
};

// Pairs over a small name pool; gold is never empty.
inline PairFixture random_pair_fixture(Rng& rng) {
  const std::size_t names = 2 + uniform_index(rng, 6);
  const double p_pred = uniform_unit(rng), p_gold = uniform_unit(rng);
  PairFixture f;
  for (std::size_t i = 0; i < names; ++i) {
    for (std::size_t j = i + 1; j < names; ++j) {
      const bool flip = uniform_unit(rng) < 0.5;
      const ConceptPair pair = flip ? ConceptPair{"n" + std::to_string(j), "n" + std::to_string(i)}
                                    : ConceptPair{"n" + std::to_string(i), "n" + std::to_string(j)};
      if (uniform_unit(rng) < p_pred) f.pred.insert(pair);
      if (uniform_unit(rng) < p_gold) f.gold.insert(pair);
    }
  }
  if (f.gold.empty()) f.gold.insert({"n0", "n1"});
  return f;
}

struct BruteF1 {
  double precision = 0, recall = 0, f1 = 0;
};

inline BruteF1 brute_relation_f1(const AncestorPairSet& pred_set, const AncestorPairSet& gold_set) {
  const std::vector<ConceptPair> pred(pred_set.begin(), pred_set.end()), gold(gold_set.begin(), gold_set.end());
  std::size_t correct = 0;
  for (const auto& p : pred) {
    for (const auto& g : gold) {
      if (p.first == g.first && p.second == g.second) ++correct;
    }
  }
  BruteF1 r;
  r.precision = pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size());
  r.recall = static_cast<double>(correct) / static_cast<double>(gold.size());
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

// Random forest with overlapping clusters drawn from a small term pool.
inline ClusterForest random_cluster_forest(Rng& rng) {
  ClusterForest f;
  const std::size_t n = 1 + uniform_index(rng, 8);
  for (std::size_t i = 0; i < n; ++i) {
    ClusterForest::Node node;
    node.name = "c" + std::to_string(i);
    if (i > 0 && uniform_unit(rng) < 0.8) node.parent = uniform_index(rng, i);
    node.depth = node.parent ? f.nodes[*node.parent].depth + 1 : 0;
    std::vector<std::string> pool;
    for (int t = 0; t < 8; ++t) pool.push_back("t" + std::to_string(t));
    for (std::size_t a = pool.size(); a > 1; --a) std::swap(pool[a - 1], pool[uniform_index(rng, a)]);
    pool.resize(1 + uniform_index(rng, 6));
    node.cluster = pool;
    f.nodes.push_back(std::move(node));
  }
  return f;
}

inline double brute_jaccard_prefix(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t k) {
  const std::vector<std::string> x(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(std::min(k, a.size())));
  const std::vector<std::string> y(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(std::min(k, b.size())));
  std::size_t inter = 0;
  for (const auto& t : x) inter += std::count(y.begin(), y.end(), t) > 0 ? 1 : 0;
  const std::size_t uni = x.size() + y.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct BruteSd {
  std::vector<double> per_node;
  double mean = 1.0;
};

inline BruteSd brute_sibling_distinctiveness(const ClusterForest& f, std::size_t k) {
  BruteSd out;
  double sum = 0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double worst = 0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (j == i || f.nodes[j].parent != f.nodes[i].parent) continue;
      worst = std::max(worst, brute_jaccard_prefix(f.nodes[i].cluster, f.nodes[j].cluster, k));
    }
    out.per_node.push_back(1.0 - worst);
    if (f.nodes[i].parent) {
      sum += out.per_node.back();
      ++counted;
    }
  }
  if (counted > 0) out.mean = sum / static_cast<double>(counted);
  return out;
}

// ---------------------------------------------------------------------------
// Consistency oracle.

inline TopicTypeMatrix random_binary_matrix(Rng& rng, std::size_t rows, std::size_t cols, double density) {
  TopicTypeMatrix m(rows, cols);
  for (auto& c : m.cells) c = uniform_unit(rng) < density ? 1 : 0;
  return m;
}

inline std::optional<double> brute_consistency(const TopicTypeMatrix& m, const BiclusterAssignment& a, std::size_t c) {
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < a.row_labels.size(); ++i) {
    if (a.row_labels[i] == c) rows.push_back(i);
  }
  for (std::size_t j = 0; j < a.col_labels.size(); ++j) {
    if (a.col_labels[j] == c) cols.push_back(j);
  }
  if (rows.empty() || cols.empty()) return std::nullopt;
  std::size_t ones = 0;
  for (std::size_t i : rows) {
    for (std::size_t j : cols) ones += m.cells[i * m.cols + j] == 1 ? 1 : 0;
  }
  return static_cast<double>(ones) / static_cast<double>(rows.size() * cols.size());
}

// ---------------------------------------------------------------------------
// Gradient check against central finite differences.

enum class LossComponent { kLocal, kDocument, kProximity };

struct GradientCheck {
  double max_rel_error = 0;
  std::size_t entries = 0;
};

inline GradientCheck check_gradient(LossComponent component, Rng& rng, double step = 1e-5) {
  const std::size_t dim = 1 + uniform_index(rng, 10);
  const std::size_t words = 2 + uniform_index(rng, 5), docs = 2 + uniform_index(rng, 3), concepts = 2 + uniform_index(rng, 3);
  BasicEmbeddingTable<double> table(dim, words, docs, concepts);
  for (Block b : {Block::kCenter, Block::kContext, Block::kDocument, Block::kConcept}) {
    for (double& x : table.data(b)) x = 2 * uniform_unit(rng) - 1;
  }
  LossWeights w{0, 0, 0};
  const double weight = 0.5 + 1.5 * uniform_unit(rng);
  Batch batch;
  const std::size_t samples = 1 + uniform_index(rng, 3);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t negs = 1 + uniform_index(rng, 3);
    switch (component) {
      case LossComponent::kLocal: {
        SkipGramSample g{TermId(uniform_index(rng, words)), TermId(uniform_index(rng, words)), {}};
        for (std::size_t k = 0; k < negs; ++k) g.negatives.push_back(TermId(uniform_index(rng, words)));
        batch.local.push_back(g);
        w.local = weight;
        break;
      }
      case LossComponent::kDocument: {
        DocumentSample d{TermId(uniform_index(rng, words)), static_cast<std::uint32_t>(uniform_index(rng, docs)), {}};
        for (std::size_t k = 0; k < negs; ++k) d.negatives.push_back(static_cast<std::uint32_t>(uniform_index(rng, docs)));
        batch.document.push_back(d);
        w.document = weight;
        break;
      }
      case LossComponent::kProximity: {
        ProximitySample p{TermId(uniform_index(rng, words)), NodeId(uniform_index(rng, concepts)), {}};
        for (std::size_t k = 0; k < negs; ++k) p.negatives.push_back(NodeId(uniform_index(rng, concepts)));
        batch.proximity.push_back(p);
        w.proximity = weight;
        break;
      }
    }
  }
  const auto analytic = loss_and_grad(batch, table, w);
  GradientCheck out;
  for (Block b : {Block::kCenter, Block::kContext, Block::kDocument, Block::kConcept}) {
    for (std::size_t row = 0; row < table.rows(b); ++row) {
      auto it = analytic.gradient.find(RowKey{b, row});
      for (std::size_t i = 0; i < dim; ++i) {
        double& x = table.row(b, row)[i];
        const double saved = x;
        x = saved + step;
        const double up = loss_and_grad(batch, table, w).loss;
        x = saved - step;
        const double down = loss_and_grad(batch, table, w).loss;
        x = saved;
        const double numeric = (up - down) / (2 * step);
        const double a = it == analytic.gradient.end() ? 0.0 : it->second[i];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        out.max_rel_error = std::max(out.max_rel_error, rel);
        ++out.entries;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Two-concept toy corpus: documents about "alpha" use a1..a9, documents
// about "beta" use b1..b9. 20 words in total.

inline std::string two_concept_corpus(std::uint64_t seed, std::size_t docs_per_concept = 20) {
  Rng rng(seed);
  std::ostringstream text;
  for (std::size_t d = 0; d < 2 * docs_per_concept; ++d) {
    const bool alpha = d % 2 == 0;
    const std::string name = alpha ? "alpha" : "beta";
    const std::string prefix = alpha ? "a" : "b";
    for (int s = 0; s < 4; ++s) {
      for (int t = 0; t < 6; ++t) {
        const auto pick = uniform_index(rng, 10);
        text << (t ? " " : "") << (pick == 0 ? name : prefix + std::to_string(pick));
      }
      text << " . ";
    }
    text << '\n';
  }
  return text.str();
}

struct Separation {
  double in_cluster = 0;
  double out_cluster = 0;
  double gap() const { return in_cluster - out_cluster; }
};

// Mean cosine(u_w, u_e) over cluster members against every other
// (word, concept) pair.
template <class Table>
Separation measure_separation(const Table& table, const Taxonomy& tax, const Vocabulary& vocab) {
  double in = 0, out = 0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t c = 0; c < tax.size(); ++c) {
    const auto& cluster = tax.node(NodeId(c)).cluster;
    for (std::size_t w = 0; w < vocab.size(); ++w) {
      const double cs = cosine(table.center(TermId(w)), table.concept_vector(NodeId(c)));
      if (std::find(cluster.begin(), cluster.end(), vocab.term(TermId(w))) != cluster.end()) {
        in += cs;
        ++n_in;
      } else {
        out += cs;
        ++n_out;
      }
    }
  }
  return {n_in ? in / static_cast<double>(n_in) : 0.0, n_out ? out / static_cast<double>(n_out) : 0.0};
}

inline Separation two_concept_separation(std::uint64_t seed, std::size_t epochs = 10) {
  const Corpus corpus = ingest_text(two_concept_corpus(seed), 1);
  Taxonomy tax;
  tax.add_root("alpha");
  tax.add_root("beta");
  TrainingConfig cfg;
  cfg.dim = 20;
  cfg.epochs = epochs;
  cfg.seed = seed;
  cfg.deterministic = true;
  const auto table = train_embeddings<float>(corpus, tax, cfg);
  return measure_separation(table, tax, corpus.vocabulary);
}

// ---------------------------------------------------------------------------
// Clustering fixtures.

// Adjusted Rand index between two labelings of the same points.
inline double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double sum_joint = 0, sum_a = 0, sum_b = 0;
  for (auto& [k, v] : joint) sum_joint += c2(v);
  for (auto& [k, v] : ra) sum_a += c2(v);
  for (auto& [k, v] : rb) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_joint - expected) / (max_index - expected);
}

inline double gaussian(Rng& rng) {
  // Box-Muller on the library's uniform draw keeps fixtures platform-stable.
  const double u1 = std::max(uniform_unit(rng), 1e-300), u2 = uniform_unit(rng);
  return std::sqrt(-2 * std::log(u1)) * std::cos(2 * 3.14159265358979323846 * u2);
}

struct Blobs {
  std::vector<std::vector<double>> points;
  std::vector<std::size_t> labels;
};

inline Blobs gaussian_blobs(Rng& rng, const std::vector<std::vector<double>>& centers, std::size_t per, double sigma) {
  Blobs b;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      std::vector<double> p = centers[c];
      for (double& x : p) x += sigma * gaussian(rng);
      b.points.push_back(std::move(p));
      b.labels.push_back(c);
    }
  }
  return b;
}

// Negative squared Euclidean distances with the median as preference.
inline SimilarityMatrix negative_sq_distance(const std::vector<std::vector<double>>& pts) {
  SimilarityMatrix s(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < pts.size(); ++j) {
      double d = 0;
      for (std::size_t k = 0; k < pts[i].size(); ++k) d += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
      if (i != j) s(i, j) = -d;
    }
  }
  s.set_preference(s.median_off_diagonal());
  return s;
}

// Best exemplar set by exhaustive search of the AP objective: every point
// joins its most similar exemplar, exemplars pay the preference.
inline std::vector<std::size_t> exhaustive_exemplar_labels(const SimilarityMatrix& s) {
  const std::size_t n = s.size();
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_labels;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    double total = 0;
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        total += s(i, i);
        labels[i] = i;
        continue;
      }
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) {
        if ((mask & (1u << k)) && s(i, k) > top) {
          top = s(i, k);
          labels[i] = k;
        }
      }
      total += top;
    }
    if (total > best) {
      best = total;
      best_labels = labels;
    }
  }
  return best_labels;
}

// Partition of point indexes induced by a labeling, as a set of sets.
inline std::set<std::set<std::size_t>> partition_of(const std::vector<std::size_t>& labels) {
  std::map<std::size_t, std::set<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].insert(i);
  std::set<std::set<std::size_t>> out;
  for (auto& [k, g] : groups) out.insert(g);
  return out;
}

// Every composition of n into k positive parts.
inline std::vector<std::vector<std::size_t>> compositions(std::size_t n, std::size_t k) {
  if (k == 0) return n == 0 ? std::vector<std::vector<std::size_t>>{{}} : std::vector<std::vector<std::size_t>>{};
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t first = 1; first + (k - 1) <= n; ++first) {
    for (auto rest : compositions(n - first, k - 1)) {
      rest.insert(rest.begin(), first);
      out.push_back(std::move(rest));
    }
  }
  return out;
}

struct BlockCase {
  TopicTypeMatrix matrix;
  std::vector<std::size_t> row_block, col_block;
  std::size_t k = 0;
};

// Block-diagonal all-ones blocks with the given row and column block sizes.
inline BlockCase block_diagonal(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  BlockCase c;
  c.k = rows.size();
  for (std::size_t b = 0; b < rows.size(); ++b) c.row_block.insert(c.row_block.end(), rows[b], b);
  for (std::size_t b = 0; b < cols.size(); ++b) c.col_block.insert(c.col_block.end(), cols[b], b);
  c.matrix = TopicTypeMatrix(c.row_block.size(), c.col_block.size());
  for (std::size_t i = 0; i < c.row_block.size(); ++i) {
    for (std::size_t j = 0; j < c.col_block.size(); ++j) c.matrix(i, j) = c.row_block[i] == c.col_block[j] ? 1 : 0;
  }
  return c;
}

// True when the assignment reproduces the planted blocks up to renaming,
// with each row block co-assigned to its column block.
inline bool recovers_blocks(const BlockCase& c, const BiclusterAssignment& a) {
  std::map<std::size_t, std::size_t> block_to_label, label_to_block;
  auto bind = [&](std::size_t block, std::size_t label) {
    auto [i, fresh_i] = block_to_label.emplace(block, label);
    auto [j, fresh_j] = label_to_block.emplace(label, block);
    return i->second == label && j->second == block;
  };
  for (std::size_t i = 0; i < c.row_block.size(); ++i) {
    if (!bind(c.row_block[i], a.row_labels[i])) return false;
  }
  for (std::size_t j = 0; j < c.col_block.size(); ++j) {
    if (!bind(c.col_block[j], a.col_labels[j])) return false;
  }
  return true;
}

// Permutes rows and columns of a block case.
inline BlockCase permuted(const BlockCase& c, Rng& rng) {
  std::vector<std::size_t> pr(c.row_block.size()), pc(c.col_block.size());
  std::iota(pr.begin(), pr.end(), 0);
  std::iota(pc.begin(), pc.end(), 0);
  for (std::size_t i = pr.size(); i > 1; --i) std::swap(pr[i - 1], pr[uniform_index(rng, i)]);
  for (std::size_t i = pc.size(); i > 1; --i) std::swap(pc[i - 1], pc[uniform_index(rng, i)]);
  BlockCase out = c;
  for (std::size_t i = 0; i < pr.size(); ++i) out.row_block[i] = c.row_block[pr[i]];
  for (std::size_t j = 0; j < pc.size(); ++j) out.col_block[j] = c.col_block[pc[j]];
  for (std::size_t i = 0; i < pr.size(); ++i) {
    for (std::size_t j = 0; j < pc.size(); ++j) out.matrix(i, j) = c.matrix(pr[i], pc[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training-set rules.

// Samples come in (original, reversal) pairs; reversal is an involution that
// swaps forward and backward and fixes none. Returns the first violation.
inline std::optional<std::string> augmentation_violation(const TrainingSet& set) {
  if (set.samples.size() % 2 != 0) return "odd number of samples";
  for (std::size_t i = 0; i < set.samples.size(); i += 2) {
    const auto& a = set.samples[i];
    const auto& b = set.samples[i + 1];
    if (b.statement.pos_a != a.statement.pos_b || b.statement.pos_b != a.statement.pos_a ||
        b.statement.tokens != a.statement.tokens || b.statement.sentence != a.statement.sentence) {
      return "sample " + std::to_string(i + 1) + " is not the reversal of its predecessor";
    }
    const RelationClass expected = a.label == RelationClass::kForward    ? RelationClass::kBackward
                                   : a.label == RelationClass::kBackward ? RelationClass::kForward
                                                                         : RelationClass::kNone;
    if (b.label != expected) return "label rule broken at sample " + std::to_string(i + 1);
    if (!(b.reversed() == a) || !(a.reversed().reversed() == a)) return "reversal is not an involution at " + std::to_string(i);
    if (a.statement.tokens[a.statement.pos_a] == a.statement.tokens[a.statement.pos_b]) {
      return "sample " + std::to_string(i) + " points both positions at one term";
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Planted benchmark runs.

struct PlantedFiles {
  fs::path dir;
  RunConfig config;
  Taxonomy truth;
  std::size_t sentences = 0;
};

inline PlantedFiles write_planted(const fs::path& dir, const PlantedConcept& root, const PlantedOptions& opts,
                                  ScorerBackend backend) {
  const auto p = generate_planted(root, opts);
  fs::create_directories(dir);
  write_file(dir / "corpus.txt", p.text);
  write_file(dir / "seed.json", p.seed);
  std::ostringstream oracle, gold;
  for (const auto& [pair, cls] : OracleScorer::table_from_taxonomy(p.truth)) {
    oracle << pair.first << '\t' << pair.second << '\t' << to_string(cls) << '\n';
  }
  write_pairs(ancestor_pairs(p.truth), gold);
  write_file(dir / "oracle.tsv", oracle.str());
  write_file(dir / "gold.tsv", gold.str());

  PlantedFiles f{dir, {}, p.truth, p.sentences};
  f.config.corpus = dir / "corpus.txt";
  f.config.seed_taxonomy = dir / "seed.json";
  f.config.gold = dir / "gold.tsv";
  f.config.output_dir = dir / "out";
  f.config.min_count = 3;
  f.config.scorer.backend = backend;
  if (backend == ScorerBackend::kOracle) f.config.scorer.oracle_table = dir / "oracle.tsv";
  return f;
}

struct PlantedRun {
  RelationF1 relation;
  double seconds = 0;
  std::string exported;
  Taxonomy taxonomy;
};

inline PlantedRun run_pipeline(const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  Pipeline p(config);
  p.run();
  PlantedRun r;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (p.metrics() && p.metrics()->relation) r.relation = *p.metrics()->relation;
  r.exported = p.exported();
  r.taxonomy = p.taxonomy();
  return r;
}

// Parent -> child edges by name.
inline std::set<ConceptPair> edges_of(const Taxonomy& tax) { return ancestor_pairs(tax, PairMode::kDirect); }

}  // namespace txf_test
