// kgpath command-line driver.
//
// Exit status: 0 when every requested stage completed, 1 on a stage
// failure, 2 on a config or input error, 3 when retraining stopped at
// rl.stop_after and left a checkpoint.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "kgpath/kg_store.h"
#include "kgpath/pipeline.h"
#include "kgpath/reasoner.h"
#include "kgpath/synthetic.h"

namespace {

struct CommonOptions {
  std::string config;
  std::string task;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::vector<std::string> overrides;
  bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key = value run configuration file");
  cmd->add_option("--task", o.task, "task relation(s), comma separated; overrides 'task'");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&o](std::uint64_t s) { o.seed = s; o.seed_given = true; }, "global seed");
  cmd->add_option("--out", o.out, "output directory; overrides 'out'");
  cmd->add_option("--set", o.overrides, "extra key=value settings, applied last");
  cmd->add_flag("--dry-run", o.dry_run, "validate the config and list stage directories");
}

kgpath::RunConfig build_config(const CommonOptions& o) {
  kgpath::RunConfig config;
  if (!o.config.empty()) config = kgpath::load_run_config(o.config);
  if (!o.task.empty()) kgpath::set_config_value(config, "task", o.task);
  if (!o.out.empty()) config.out = o.out;
  if (o.seed_given) config.seed = o.seed;
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw kgpath::ConfigError("--set expects key=value: " + kv);
    kgpath::set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

int run_command(const std::string& name, const CommonOptions& o) {
  kgpath::Pipeline pipeline(build_config(o), std::cerr);
  if (o.dry_run) {
    pipeline.describe(std::cout);
    return 0;
  }
  if (name == "pipeline") {
    const auto reports = pipeline.run_all();
    kgpath::write_report(std::cout, reports);
    return 0;
  }
  pipeline.run_stage(*kgpath::parse_stage(name));
  return 0;
}

struct GenerateOptions {
  std::string triples_out;
  std::string rule_out;
  kgpath::PlantedRuleSpec spec;
};

int run_generate(const GenerateOptions& g) {
  const kgpath::SyntheticTask task = kgpath::generate(g.spec);
  std::ofstream out(g.triples_out, std::ios::binary);
  if (!out) throw kgpath::ConfigError("cannot write " + g.triples_out);
  kgpath::write_triples(out, task.triples);
  if (!g.rule_out.empty()) {
    std::ofstream rule(g.rule_out, std::ios::binary);
    if (!rule) throw kgpath::ConfigError("cannot write " + g.rule_out);
    rule << "rule\t" << kgpath::format_formula(task.graph, task.rule) << '\n';
    for (const auto& alt : task.alternative_rules) {
      rule << "alternative\t" << kgpath::format_formula(task.graph, alt) << '\n';
    }
  }
  std::cerr << "wrote " << task.triples.size() << " triples; target relation '"
            << g.spec.target_relation << "', rule "
            << kgpath::format_formula(task.graph, task.rule) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reinforcement-learned path reasoning over knowledge graphs"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"ingest", "load triples, add inverses, split every task relation"},
      {"embed", "train translation embeddings"},
      {"train-sl", "supervised policy training on teacher paths"},
      {"train-rl", "reward-shaped retraining; resumable"},
      {"extract", "select discovered formulas and build path features"},
      {"rank", "fit the ridge re-ranker and score test pairs"},
      {"evaluate", "MAP, success ratio and path statistics"},
      {"pipeline", "every stage in order, then the combined report"},
  };
  CommonOptions common;
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), common);

  GenerateOptions gen;
  CLI::App* g = app.add_subcommand("generate", "write a synthetic planted-rule triple file");
  g->add_option("--triples-out", gen.triples_out, "triple file to write")->required();
  g->add_option("--rule-out", gen.rule_out, "where to write the ground-truth formulas");
  g->add_option("--target", gen.spec.target_relation, "target relation name");
  g->add_option("--body-length", gen.spec.body_length, "rule length, 1 to 3");
  g->add_option("--entities", gen.spec.entity_count, "entity count");
  g->add_option("--noise", gen.spec.noise_edges, "noise edge count");
  g->add_option("--positives", gen.spec.positive_pairs, "positive pair count");
  g->add_option("--decoys", gen.spec.decoy_relations, "decoy relation count");
  g->add_option("--alternatives", gen.spec.alternative_chains, "redundant alternative chains");
  g->add_option("--seed", gen.spec.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* chosen = app.get_subcommands().front();
    if (chosen == g) return run_generate(gen);
    return run_command(chosen->get_name(), common);
  } catch (const kgpath::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const kgpath::Interrupted& e) {
    std::cerr << "stopped: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    // generate() reports infeasible specs this way
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
