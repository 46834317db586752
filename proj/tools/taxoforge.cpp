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

// Command-line driver. Stage subcommands run the pipeline up to and including
// their stage; every run leaves its artifacts and report.json in the output
// directory. Exit codes: 0 success, 2 configuration error, 3 stage failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "taxoforge/eval.hpp"
#include "taxoforge/pipeline.hpp"
#include "taxoforge/synthetic.hpp"

namespace {

namespace fs = std::filesystem;
using namespace taxoforge;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct RunOptions {
  std::string config;
  std::string corpus;
  std::string seed;
  std::string output_dir;
  std::string scorer;
  std::string scorer_url;
  std::string oracle_table;
  std::optional<std::size_t> layers;
  bool quiet = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("-c,--config", o.config, "run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--corpus", o.corpus, "corpus text file, one document per line");
  cmd->add_option("--seed", o.seed, "seed taxonomy (JSON or edge list)");
  cmd->add_option("-o,--output-dir", o.output_dir, "artifact directory");
  cmd->add_option("--scorer", o.scorer, "relation scorer backend")->check(CLI::IsMember({"heuristic", "oracle", "remote"}));
  cmd->add_option("--scorer-url", o.scorer_url, "scoring service address (overridden by " + std::string(kScorerUrlEnv) + ")");
  cmd->add_option("--oracle-table", o.oracle_table, "oracle relation table for the oracle backend");
  cmd->add_option("--layers", o.layers, "number of expansion layers");
  cmd->add_flag("-q,--quiet", o.quiet, "no stage log on stderr");
}

// Config file first, then flags, then the environment.
RunConfig resolve(const RunOptions& o) {
  RunConfig c = o.config.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(o.config);
  if (!o.corpus.empty()) c.corpus = o.corpus;
  if (!o.seed.empty()) c.seed_taxonomy = o.seed;
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (!o.scorer.empty()) {
    c.scorer.backend = o.scorer == "oracle" ? ScorerBackend::kOracle
                       : o.scorer == "remote" ? ScorerBackend::kRemote
                                              : ScorerBackend::kHeuristic;
  }
  if (!o.scorer_url.empty()) c.scorer.address = o.scorer_url;
  if (!o.oracle_table.empty()) c.scorer.oracle_table = o.oracle_table;
  if (o.layers) c.layers = *o.layers;
  apply_environment(c);
  c.validate();
  return c;
}

int run_stage(const RunOptions& o, Stage last) {
  RunConfig config;
  try {
    config = resolve(o);
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    Pipeline p(config, o.quiet ? nullptr : &std::cerr);
    p.run_until(last);
    if (last == Stage::kExport) {
      std::cerr << "taxonomy written to " << (config.output_dir / "taxonomy.json").string() << '\n';
      if (p.metrics()) write_key_values(*p.metrics(), std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    std::cerr << "partial artifacts and report.json kept in " << config.output_dir.string() << '\n';
    return kExitStage;
  }
  return kExitOk;
}

struct EvalOptions {
  std::string taxonomy;
  std::string gold;
  std::string synonyms;
  std::string mode = "transitive";
  std::size_t top_k = kDefaultTopK;
  std::string corpus;
  std::size_t min_count = 1;
  std::string out;
};

int evaluate(const EvalOptions& o) {
  std::string tax_text, gold_text, syn_text;
  try {
    tax_text = Pipeline::read_file(o.taxonomy);
    gold_text = Pipeline::read_file(o.gold);
    if (!o.synonyms.empty()) syn_text = Pipeline::read_file(o.synonyms);
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    const SynonymMap synonyms = load_synonyms(syn_text);
    const ClusterForest tax = load_cluster_forest(tax_text);
    MetricReport m;
    m.k = o.top_k;
    m.mode = o.mode == "direct" ? PairMode::kDirect : PairMode::kTransitive;
    m.relation = relation_f1(ancestor_pairs(tax, m.mode, synonyms), load_gold_pairs(gold_text, synonyms));
    m.distinctiveness = sibling_distinctiveness(tax, o.top_k);
    std::optional<Corpus> corpus;
    if (!o.corpus.empty()) {
      std::ifstream in(o.corpus);
      if (!in) throw Error("cannot open corpus " + o.corpus);
      corpus = ingest(in, o.min_count);
      const CorpusIndex index(*corpus);
      m.coherence = coherence_proxy(tax, index, o.top_k);
    }
    write_table(m, tax, std::cout);
    std::cout << '\n';
    write_key_values(m, std::cout);
    if (!o.out.empty()) {
      std::ofstream f(o.out);
      write_key_values(m, f);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return kExitOk;
}

struct PlantedArgs {
  std::string out = "planted";
  std::size_t docs_per_subtopic = PlantedOptions{}.docs_per_subtopic;
  std::uint64_t seed = PlantedOptions{}.seed;
};

// Writes the planted benchmark: corpus, seed, oracle table, gold pairs and a
// config per local backend.
int planted(const PlantedArgs& a) {
  try {
    PlantedOptions opts;
    opts.docs_per_subtopic = a.docs_per_subtopic;
    opts.seed = a.seed;
    const auto p = generate_planted(default_planted_tree(), opts);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    std::ofstream(dir / "corpus.txt") << p.text;
    std::ofstream(dir / "seed.json") << p.seed;
    {
      std::ofstream t(dir / "oracle.tsv");
      for (const auto& [pair, cls] : OracleScorer::table_from_taxonomy(p.truth)) {
        t << pair.first << '\t' << pair.second << '\t' << to_string(cls) << '\n';
      }
    }
    {
      std::ofstream g(dir / "gold.tsv");
      write_pairs(ancestor_pairs(p.truth), g);
    }
    std::ofstream(dir / "truth.json") << dump_taxonomy(p.truth);
    for (const std::string backend : {"oracle", "heuristic"}) {
      nlohmann::ordered_json c;
      c["corpus"] = "corpus.txt";
      c["seed_taxonomy"] = "seed.json";
      c["output_dir"] = "out-" + backend;
      c["gold"] = "gold.tsv";
      c["min_count"] = 3;
      c["scorer"] = {{"backend", backend}};
      if (backend == "oracle") c["scorer"]["oracle_table"] = "oracle.tsv";
      std::ofstream(dir / ("config." + backend + ".json")) << c.dump(2) << '\n';
    }
    std::cerr << p.sentences << " sentences written to " << dir.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seed-guided topical taxonomy construction"};
  app.require_subcommand(1);

  RunOptions run_opts;
  struct StageCommand {
    const char* name;
    Stage last;
    const char* help;
  };
  const StageCommand stages[] = {
      {"ingest", Stage::kIngest, "tokenize the corpus and build the sentence index"},
      {"build-relset", Stage::kBuildRelset, "write relation training statements from the seed"},
      {"train-scorer", Stage::kTrainScorer, "train the remote relation scorer and check its health"},
      {"discover-roots", Stage::kDiscoverRoots, "find common parents of the seed topics"},
      {"expand", Stage::kExpand, "attach first-layer topics under the roots"},
      {"train-embed", Stage::kTrainEmbed, "extract subtopic candidates and train the joint embedding"},
      {"cluster", Stage::kCluster, "group candidates by Topic-Type co-clustering and attach subtopics"},
      {"export", Stage::kExport, "write the topical taxonomy"},
      {"run", Stage::kExport, "run the full pipeline"},
  };
  std::optional<Stage> chosen;
  for (const auto& s : stages) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_run_options(cmd, run_opts);
    cmd->callback([&chosen, last = s.last] { chosen = last; });
  }

  EvalOptions eval_opts;
  auto* ev = app.add_subcommand("evaluate", "score a taxonomy against gold ancestor pairs");
  ev->add_option("-t,--taxonomy", eval_opts.taxonomy, "taxonomy JSON")->required();
  ev->add_option("-g,--gold", eval_opts.gold, "gold pairs, ancestor<TAB>descendant per line")->required();
  ev->add_option("--synonyms", eval_opts.synonyms, "alias<TAB>canonical lines");
  ev->add_option("--mode", eval_opts.mode, "ancestor pairs or direct edges")->check(CLI::IsMember({"transitive", "direct"}));
  ev->add_option("-k,--top-k", eval_opts.top_k, "terms per node for distinctiveness and coherence");
  ev->add_option("--corpus", eval_opts.corpus, "corpus for the NPMI coherence proxy");
  ev->add_option("--min-count", eval_opts.min_count, "min_count used when ingesting --corpus");
  ev->add_option("--out", eval_opts.out, "also write key=value metrics here");

  PlantedArgs planted_args;
  auto* pl = app.add_subcommand("planted", "write the planted-taxonomy benchmark");
  pl->add_option("-o,--out", planted_args.out, "output directory");
  pl->add_option("--docs-per-subtopic", planted_args.docs_per_subtopic, "documents per planted subtopic");
  pl->add_option("--seed", planted_args.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (chosen) return run_stage(run_opts, *chosen);
  if (ev->parsed()) return evaluate(eval_opts);
  if (pl->parsed()) return planted(planted_args);
  return kExitConfig;
}
