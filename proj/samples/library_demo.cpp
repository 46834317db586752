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

// Library walk-through on the planted benchmark: relation scoring by hand,
// then the whole pipeline through the Pipeline class.
//
//   taxoforge_demo [output-dir]

#include <filesystem>
#include <fstream>
#include <iostream>

#include "taxoforge/eval.hpp"
#include "taxoforge/pipeline.hpp"
#include "taxoforge/synthetic.hpp"

namespace fs = std::filesystem;
using namespace taxoforge;

int main(int argc, char** argv) {
  const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "taxoforge-demo";
  fs::create_directories(dir);

  const auto planted = generate_planted(default_planted_tree());
  std::ofstream(dir / "corpus.txt") << planted.text;
  std::ofstream(dir / "seed.json") << planted.seed;

  // Scoring a few pairs directly with the oracle scorer.
  const Corpus corpus = ingest_text(planted.text, 3);
  const CorpusIndex index(corpus);
  const OracleScorer oracle(corpus.vocabulary, OracleScorer::table_from_taxonomy(planted.truth));
  ScoringContext ctx;
  ctx.scorer = &oracle;
  ctx.index = &index;
  const auto& vocab = corpus.vocabulary;
  for (const auto& [a, b] : std::initializer_list<std::pair<const char*, const char*>>{
           {"food", "soup"}, {"soup", "ramen"}, {"ramen", "soup"}, {"cake", "crab"}}) {
    const auto score = directional_score(ctx, vocab.id(a), vocab.id(b));
    std::cout << "Score(" << a << " -> " << b << ") = ";
    if (score) std::cout << *score << '\n';
    else std::cout << "undefined\n";
  }

  RunConfig config;
  config.corpus = dir / "corpus.txt";
  config.seed_taxonomy = dir / "seed.json";
  config.output_dir = dir / "out";
  config.min_count = 3;
  config.scorer.backend = ScorerBackend::kOracle;
  {
    std::ofstream table(dir / "oracle.tsv");
    for (const auto& [pair, cls] : OracleScorer::table_from_taxonomy(planted.truth)) {
      table << pair.first << '\t' << pair.second << '\t' << to_string(cls) << '\n';
    }
  }
  config.scorer.oracle_table = dir / "oracle.tsv";

  Pipeline pipeline(config, &std::cerr);
  pipeline.run();

  const auto found = ancestor_pairs(pipeline.taxonomy());
  const auto truth = ancestor_pairs(planted.truth);
  const auto f1 = relation_f1(found, truth);
  std::cout << "\nrelation F1 against the planted tree: " << f1.f1 << "\n\n" << pipeline.exported();
  return f1.f1 >= 0.95 ? 0 : 1;
}
