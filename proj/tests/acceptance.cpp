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

// Acceptance run: one PASS/FAIL line per primary criterion. Exits non-zero
// when any criterion fails.

#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "support.hpp"

namespace {

using namespace txf_test;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

Outcome planted_oracle(const fs::path& root) {
  auto files = write_planted(root / "oracle", default_planted_tree(), {}, ScorerBackend::kOracle);
  const auto run = run_pipeline(files.config);
  const bool ok = run.relation.f1 >= 0.95 && run.seconds < 120;
  return {ok, std::to_string(files.sentences) + " sentences, F1 " + fmt(run.relation.f1) + " (>= 0.95), " +
                  fmt(run.seconds, 1) + " s (< 120 s)"};
}

Outcome planted_heuristic(const fs::path& root) {
  auto files = write_planted(root / "heuristic", default_planted_tree(), {}, ScorerBackend::kHeuristic);
  const auto run = run_pipeline(files.config);
  return {run.relation.f1 >= 0.8, "F1 " + fmt(run.relation.f1) + " (>= 0.8), P " + fmt(run.relation.precision) +
                                      ", R " + fmt(run.relation.recall)};
}

Outcome metric_oracles() {
  Rng rng(2024);
  std::size_t f1_mismatch = 0, sd_mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto f = random_pair_fixture(rng);
    const auto got = relation_f1(f.pred, f.gold);
    const auto want = brute_relation_f1(f.pred, f.gold);
    if (got.precision != want.precision || got.recall != want.recall || got.f1 != want.f1) ++f1_mismatch;
  }
  for (int i = 0; i < 1000; ++i) {
    const auto forest = random_cluster_forest(rng);
    const std::size_t k = 1 + uniform_index(rng, 6);
    const auto got = sibling_distinctiveness(forest, k);
    const auto want = brute_sibling_distinctiveness(forest, k);
    if (got.per_node != want.per_node || got.mean != want.mean) ++sd_mismatch;
  }
  const auto ex = relation_f1({{"food", "beef"}, {"food", "bread"}, {"beef", "stewed"}},
                              {{"food", "beef"}, {"food", "bread"}, {"food", "pork"}});
  const bool f1_example = ex.precision == 2.0 / 3 && ex.recall == 2.0 / 3 && std::abs(ex.f1 - 2.0 / 3) < 1e-15;
  ClusterForest sd_fixture;
  sd_fixture.nodes = {{"root", std::nullopt, {"root"}, 0},
                      {"x", 0, {"a", "b", "c", "d"}, 1},
                      {"y", 0, {"c", "d", "e", "f"}, 1}};
  const auto sd = sibling_distinctiveness(sd_fixture, 10);
  const bool sd_example = sd.per_node[1] == 1.0 - 2.0 / 6 && sd.per_node[2] == 1.0 - 2.0 / 6;
  return {f1_mismatch == 0 && sd_mismatch == 0 && f1_example && sd_example,
          "F1 mismatches " + std::to_string(f1_mismatch) + "/1000, SD mismatches " + std::to_string(sd_mismatch) +
              "/1000, F1 example " + fmt(ex.f1) + ", SD example " + fmt(sd.per_node[1])};
}

Outcome kl_filter() {
  const auto uniform = RelationDistribution::of(1.0 / 3, 1.0 / 3, 1.0 / 3);
  bool uniform_never = true;
  for (double delta : {1e-12, 1e-9, 1e-6, 1e-3, 0.1, 0.5, 1.0, 10.0}) {
    if (is_confident(uniform, {delta})) uniform_never = false;
  }
  const auto peaked = RelationDistribution::of(0.98, 0.01, 0.01);
  const double kl = kl_from_uniform(peaked);
  const bool peaked_ok = is_confident(peaked, {0.5}) && kl >= 1.95 && kl <= 2.00;
  Rng rng(99);
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    double a = uniform_unit(rng), b = uniform_unit(rng), c = uniform_unit(rng);
    const double s = a + b + c;
    const auto d = RelationDistribution::of(a / s, b / s, 1.0 - a / s - b / s < 0 ? 0 : 1.0 - a / s - b / s);
    const double hi = 0.01 + 3 * uniform_unit(rng);
    const double lo = hi * uniform_unit(rng);
    if (lo > 0 && is_confident(d, {hi}) && !is_confident(d, {lo})) ++violations;
  }
  return {uniform_never && peaked_ok && violations == 0,
          "uniform never confident: " + std::string(uniform_never ? "yes" : "no") + ", KL(0.98,0.01,0.01) = " +
              fmt(kl) + ", monotonicity violations " + std::to_string(violations) + "/10000"};
}

Outcome consistency_oracle() {
  Rng rng(7);
  std::size_t mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t rows = 1 + uniform_index(rng, 6), cols = 1 + uniform_index(rng, 6);
    const auto m = random_binary_matrix(rng, rows, cols, uniform_unit(rng));
    BiclusterAssignment a;
    a.k = 1 + uniform_index(rng, std::min(rows, cols));
    for (std::size_t i = 0; i < rows; ++i) a.row_labels.push_back(uniform_index(rng, a.k));
    for (std::size_t j = 0; j < cols; ++j) a.col_labels.push_back(uniform_index(rng, a.k));
    for (std::size_t c = 0; c < a.k; ++c) {
      if (consistency(m, a, c) != brute_consistency(m, a, c)) ++mismatches;
    }
  }
  const auto block = TopicTypeMatrix::from_rows({{1, 1}, {1, 0}});
  const auto score = consistency(block, {{0, 0}, {0, 0}, 1}, 0);
  return {mismatches == 0 && score == 0.75,
          "mismatches " + std::to_string(mismatches) + " over 100 matrices, [[1,1],[1,0]] -> " + fmt(score.value_or(-1))};
}

Outcome gradients() {
  Rng rng(31337);
  double worst[3] = {0, 0, 0};
  const LossComponent comps[3] = {LossComponent::kLocal, LossComponent::kDocument, LossComponent::kProximity};
  for (int c = 0; c < 3; ++c) {
    for (int t = 0; t < 100; ++t) worst[c] = std::max(worst[c], check_gradient(comps[c], rng).max_rel_error);
  }
  const bool ok = worst[0] <= 1e-4 && worst[1] <= 1e-4 && worst[2] <= 1e-4;
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << "max relative error local " << worst[0] << ", document " << worst[1] << ", proximity "
    << worst[2] << " (<= 1e-4, 100 configurations each)";
  return {ok, s.str()};
}

Outcome separation() {
  const auto s = two_concept_separation(5, 10);
  return {s.gap() >= 0.2, "in-cluster " + fmt(s.in_cluster) + ", out-of-cluster " + fmt(s.out_cluster) + ", gap " +
                              fmt(s.gap()) + " (>= 0.2)"};
}

Outcome clustering() {
  Rng rng(11);
  const auto blobs = gaussian_blobs(rng, {{0, 0}, {6, 0}, {3, 5}}, 10, 0.6);
  const auto ap = affinity_propagation(negative_sq_distance(blobs.points));
  const double ari = adjusted_rand_index(ap.labels, blobs.labels);

  std::size_t cases = 0, recovered = 0;
  Rng prng(3);
  for (std::size_t r = 1; r <= 6; ++r) {
    for (std::size_t c = 1; c <= 6; ++c) {
      for (std::size_t k = 1; k <= std::min(r, c); ++k) {
        for (const auto& rs : compositions(r, k)) {
          for (const auto& cs : compositions(c, k)) {
            const auto bc = block_diagonal(rs, cs);
            ++cases;
            if (recovers_blocks(bc, cocluster(bc.matrix, k))) ++recovered;
          }
        }
      }
    }
  }

  std::size_t equivariant = 0;
  Rng qrng(17);
  const auto base = gaussian_blobs(qrng, {{0, 0}, {5, 5}, {0, 6}}, 6, 0.8);
  const auto ref = partition_of(affinity_propagation(negative_sq_distance(base.points)).labels);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::size_t> perm(base.points.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(qrng, i)]);
    std::vector<std::vector<double>> pts;
    for (std::size_t i : perm) pts.push_back(base.points[i]);
    const auto labels = affinity_propagation(negative_sq_distance(pts)).labels;
    std::vector<std::size_t> back(labels.size());
    for (std::size_t i = 0; i < perm.size(); ++i) back[perm[i]] = labels[i];
    if (partition_of(back) == ref) ++equivariant;
  }
  return {ari >= 0.9 && recovered == cases && equivariant == 50,
          "ARI " + fmt(ari) + " (>= 0.9), blocks recovered " + std::to_string(recovered) + "/" + std::to_string(cases) +
              ", equivariant " + std::to_string(equivariant) + "/50"};
}

Outcome determinism(const fs::path& root) {
  auto a = write_planted(root / "det-a", default_planted_tree(), {}, ScorerBackend::kOracle);
  auto b = write_planted(root / "det-b", default_planted_tree(), {}, ScorerBackend::kOracle);
  const auto ra = run_pipeline(a.config);
  const auto rb = run_pipeline(b.config);
  const bool same_bytes = read_file(a.config.output_dir / "taxonomy.json") == read_file(b.config.output_dir / "taxonomy.json");
  return {same_bytes && ra.exported == rb.exported && !ra.exported.empty(),
          std::to_string(ra.exported.size()) + " bytes, exports " + (same_bytes ? "identical" : "differ")};
}

Outcome augmentation() {
  std::size_t sets = 0, samples = 0;
  std::optional<std::string> violation;
  auto check = [&](const Taxonomy& seed, const CorpusIndex& index, std::uint64_t s) {
    TrainingSetOptions opts;
    opts.seed = s;
    const auto set = build_training_set(seed, index, opts);
    ++sets;
    samples += set.samples.size();
    if (!violation) violation = augmentation_violation(set);
  };
  for (std::uint64_t s = 1; s <= 20; ++s) {
    PlantedOptions po;
    po.seed = s;
    po.docs_per_subtopic = 1 + s % 3;
    const auto p = generate_planted(default_planted_tree(), po);
    const Corpus corpus = ingest_text(p.text, 1);
    const CorpusIndex index(corpus);
    check(load_seed(p.seed), index, s);
    check(p.truth, index, s + 100);
  }
  return {!violation && sets > 0, std::to_string(sets) + " training sets, " + std::to_string(samples) + " samples" +
                                      (violation ? ", " + *violation : "")};
}

}  // namespace

int main() {
  const fs::path root = scratch_dir("acceptance");
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"planted-taxonomy recovery, oracle scorer", [&] { return planted_oracle(root); }},
      {"planted-taxonomy recovery, heuristic scorer", [&] { return planted_heuristic(root); }},
      {"metric oracles", metric_oracles},
      {"KL confidence filter", kl_filter},
      {"consistency score", consistency_oracle},
      {"gradient checks", gradients},
      {"concept separation", separation},
      {"AP and co-clustering", clustering},
      {"determinism", [&] { return determinism(root); }},
      {"augmentation involution and label swap", augmentation},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail << std::endl;
  }
  fs::remove_all(root);
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
