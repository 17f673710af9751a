#include "kgpath/pipeline.h"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <sys/wait.h>

#include "kgpath/synthetic.h"
#include "test_support.h"

namespace kgpath {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Config, ParsesKeysAndComments) {
  std::istringstream in(
      "# comment\n"
      "triples = /data/kg.tsv\n"
      "task = a, b\n"
      "seed = 12   # trailing\n"
      "embed.dim = 16\n"
      "rl.lambda_diversity = 0.25\n"
      "\n");
  const RunConfig c = parse_run_config(in);
  EXPECT_EQ(c.triples, fs::path("/data/kg.tsv"));
  EXPECT_EQ(c.tasks, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.embed_dim, 16u);
  EXPECT_EQ(c.rl_weights.diversity, 0.25);
}

TEST(Config, UnknownKeyAndBadValue) {
  std::istringstream unknown("embed.dims = 16\n");
  EXPECT_THROW(parse_run_config(unknown), ConfigError);
  std::istringstream bad("embed.dim = sixteen\n");
  EXPECT_THROW(parse_run_config(bad), ConfigError);
  std::istringstream no_eq("embed.dim 16\n");
  EXPECT_THROW(parse_run_config(no_eq), ConfigError);
}

TEST(Config, WriteParseRoundTrip) {
  RunConfig c;
  c.triples = "/x/y.tsv";
  c.tasks = {"t1"};
  c.policy_learning_rate = 3e-4;
  c.rl_stop_after = 7;
  std::stringstream buf;
  write_run_config(buf, c);
  std::stringstream again;
  write_run_config(again, parse_run_config(buf));
  std::stringstream first;
  write_run_config(first, c);
  EXPECT_EQ(again.str(), first.str());
}

struct Workspace {
  fs::path dir;
  fs::path triples;
  std::string rule;
};

Workspace make_workspace(const std::string& name) {
  Workspace w{testing::scratch_dir(name), {}, {}};
  PlantedRuleSpec spec;
  spec.positive_pairs = 20;
  spec.entity_count = 160;
  spec.noise_edges = 200;
  spec.seed = 3;
  const SyntheticTask task = generate(spec);
  w.triples = w.dir / "triples.tsv";
  std::ofstream out(w.triples, std::ios::binary);
  write_triples(out, task.triples);
  w.rule = format_formula(task.graph, task.rule);
  return w;
}

RunConfig small_config(const Workspace& w) {
  RunConfig c;
  c.triples = w.triples;
  c.tasks = {"concludes"};
  c.out = w.dir / "out";
  c.seed = 5;
  c.train_fraction = 0.5;
  c.embed_dim = 16;
  c.embed_epochs = 200;
  c.hidden1 = 32;
  c.hidden2 = 32;
  c.sl_episodes = 200;
  c.rl_episodes = 200;
  c.rl_checkpoint_every = 50;
  return c;
}

TEST(Hashing, StableAndSensitiveToUpstreamKeysOnly) {
  const Workspace w = make_workspace("hash");
  const RunConfig c = small_config(w);
  std::ostringstream log;
  const Pipeline a(c, log);
  const Pipeline b(c, log);
  EXPECT_EQ(a.config_hash(), b.config_hash());
  EXPECT_EQ(a.stage_dir("concludes", Stage::kRank), b.stage_dir("concludes", Stage::kRank));

  RunConfig later = c;
  later.eval_k = 5;
  later.out = w.dir / "elsewhere";
  later.rl_checkpoint_every = 3;
  const Pipeline d(later, log);
  EXPECT_EQ(d.stage_hash("concludes", Stage::kRank), a.stage_hash("concludes", Stage::kRank));
  EXPECT_NE(d.stage_hash("concludes", Stage::kEvaluate),
            a.stage_hash("concludes", Stage::kEvaluate));

  RunConfig early = c;
  early.embed_dim = 8;
  const Pipeline e(early, log);
  EXPECT_EQ(e.stage_hash("concludes", Stage::kIngest), a.stage_hash("concludes", Stage::kIngest));
  EXPECT_NE(e.stage_hash("concludes", Stage::kEmbed), a.stage_hash("concludes", Stage::kEmbed));
  EXPECT_NE(e.stage_hash("concludes", Stage::kEvaluate),
            a.stage_hash("concludes", Stage::kEvaluate));
}

TEST(Pipeline, MissingTriplesIsConfigError) {
  RunConfig c;
  c.triples = "/nonexistent/kgpath.tsv";
  c.tasks = {"x"};
  std::ostringstream log;
  EXPECT_THROW(Pipeline(c, log), ConfigError);
}

TEST(Pipeline, DryRunTouchesNothing) {
  const Workspace w = make_workspace("dry");
  std::ostringstream log;
  const Pipeline p(small_config(w), log);
  std::ostringstream out;
  p.describe(out);
  EXPECT_NE(out.str().find("missing"), std::string::npos);
  EXPECT_FALSE(fs::exists(w.dir / "out"));
}

TEST(Pipeline, StageNeedsUpstreamArtifacts) {
  const Workspace w = make_workspace("upstream");
  std::ostringstream log;
  Pipeline p(small_config(w), log);
  EXPECT_THROW(p.run_stage(Stage::kEmbed), ConfigError);
  p.run_stage(Stage::kIngest);
  EXPECT_TRUE(fs::is_directory(p.stage_dir("concludes", Stage::kIngest)));
}

TEST(Pipeline, EndToEndRecoversRuleAndIsReproducible) {
  const Workspace w = make_workspace("e2e");
  std::ostringstream log;
  Pipeline p(small_config(w), log);
  const auto reports = p.run_all();
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_GE(reports[0].link_prediction.map, 0.95);
  EXPECT_GE(reports[0].fact_prediction, 0.90);
  const std::string formulas = slurp(p.stage_dir("concludes", Stage::kExtract) / "formulas.txt");
  EXPECT_NE(formulas.find(w.rule + "\n"), std::string::npos) << formulas;
  EXPECT_TRUE(fs::exists(p.report_path()));

  const EvalReport loaded = p.load_report("concludes");
  EXPECT_EQ(loaded.link_prediction.map, reports[0].link_prediction.map);

  // A second run reuses every stage and reproduces the report byte for byte.
  const std::string report = slurp(p.report_path());
  Pipeline again(small_config(w), log);
  again.run_all();
  EXPECT_EQ(slurp(again.report_path()), report);

  // Interrupted retraining resumes to the same checkpoint.
  RunConfig interrupted = small_config(w);
  interrupted.out = w.dir / "resume";
  interrupted.rl_stop_after = 120;
  Pipeline q(interrupted, log);
  EXPECT_THROW(q.run_all(), Interrupted);
  interrupted.rl_stop_after = 0;
  Pipeline r(interrupted, log);
  r.run_all();
  EXPECT_EQ(slurp(r.stage_dir("concludes", Stage::kTrainRl) / "checkpoint.bin"),
            slurp(p.stage_dir("concludes", Stage::kTrainRl) / "checkpoint.bin"));
  EXPECT_EQ(slurp(r.report_path()), report);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KGPATH_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const Workspace w = make_workspace("cli");
  const std::string base = " --out " + (w.dir / "out").string() + " --task concludes";
  EXPECT_EQ(run_cli("ingest --set triples=/nonexistent/x.tsv" + base), 2);
  EXPECT_FALSE(fs::exists(w.dir / "out"));
  EXPECT_EQ(run_cli("ingest --set triples=" + w.triples.string() + " --set bogus=1" + base), 2);
  EXPECT_EQ(run_cli("embed --set triples=" + w.triples.string() + base), 2);
  EXPECT_EQ(run_cli("ingest --set triples=" + w.triples.string() + base), 0);
  EXPECT_EQ(run_cli("nonsense"), 2);
  EXPECT_EQ(run_cli("generate --triples-out " + (w.dir / "g.tsv").string() + " --body-length 9"), 2);
  EXPECT_EQ(run_cli("generate --triples-out " + (w.dir / "g.tsv").string()), 0);
  EXPECT_TRUE(fs::exists(w.dir / "g.tsv"));
}

}  // namespace
}  // namespace kgpath
