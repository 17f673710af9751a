#pragma once

// End-to-end batch runs: a flat key=value config, content-addressed stage
// directories and the ingest -> embed -> train-sl -> train-rl -> extract ->
// rank -> evaluate sequence.
//
// Every stage writes into <out>/<task>/<stage>-<hash>/, where the hash
// covers the config keys that stage and its upstream stages read (plus the
// content of the triple file). A stage whose directory exists is reused.
// Directories are filled under a ".tmp" name and renamed when complete.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kgpath/embedding.h"
#include "kgpath/evaluator.h"
#include "kgpath/kg_store.h"
#include "kgpath/policy.h"
#include "kgpath/reasoner.h"
#include "kgpath/rl_trainer.h"
#include "kgpath/supervised_trainer.h"

namespace kgpath {

// Bad config file, unknown key, unparsable value or missing input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A stage failed; what() names the stage and task.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::string task, const std::string& what)
      : std::runtime_error("stage " + stage + " failed for task " + task + ": " + what),
        stage_(std::move(stage)),
        task_(std::move(task)) {}
  const std::string& stage() const { return stage_; }
  const std::string& task() const { return task_; }

 private:
  std::string stage_;
  std::string task_;
};

// Retraining stopped at rl.stop_after with a checkpoint left to resume from.
class Interrupted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::filesystem::path triples;
  std::vector<std::string> tasks;
  std::filesystem::path out = "kgpath-out";
  std::uint64_t seed = 0;

  double train_fraction = 0.7;
  std::size_t negatives_per_positive = 10;

  std::size_t embed_dim = 100;
  double embed_margin = 1.0;
  std::size_t embed_epochs = 1000;
  double embed_learning_rate = 0.01;

  std::size_t hidden1 = 512;
  std::size_t hidden2 = 1024;
  double policy_learning_rate = 1e-3;
  double policy_l2 = 1e-5;

  std::size_t sl_episodes = 500;
  std::size_t sl_num_intermediates = 5;
  std::size_t sl_depth_limit = 3;

  std::size_t rl_episodes = 500;
  std::size_t rl_max_length = 50;
  RewardWeights rl_weights;
  std::size_t rl_checkpoint_every = 100;  // not hashed
  std::size_t rl_stop_after = 0;          // 0 = run to completion; not hashed

  std::size_t top_k = 0;  // 0 keeps every discovered formula
  std::size_t frontier_cap = 1'000'000;
  double rerank_l2 = 1e-3;

  std::size_t eval_k = 10;
  std::size_t eval_trials = 1;

  std::size_t parallel_tasks = 1;  // not hashed
};

// Sets one key from its text value. Throws ConfigError on an unknown key
// or a malformed value.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

// "key = value" lines; '#' starts a comment. Throws ConfigError with the
// line number on errors.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);

// Every key in canonical form, sorted; parse_run_config reads it back.
void write_run_config(std::ostream& out, const RunConfig& config);

std::vector<std::string> config_keys();

std::uint64_t fnv1a(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL);

enum class Stage { kIngest, kEmbed, kTrainSl, kTrainRl, kExtract, kRank, kEvaluate };
inline constexpr Stage kAllStages[] = {Stage::kIngest,  Stage::kEmbed, Stage::kTrainSl,
                                       Stage::kTrainRl, Stage::kExtract, Stage::kRank,
                                       Stage::kEvaluate};
std::string_view stage_name(Stage stage);
std::optional<Stage> parse_stage(std::string_view name);

// Artifacts of the stages, loaded back from disk.
struct IngestArtifacts {
  KnowledgeGraph graph;  // inverse-closed, task relation removed
  TaskSplit split;
};

struct ExtractArtifacts {
  std::vector<PathFormula> formulas;
  FeatureMatrix train;
  FeatureMatrix test;
};

class Pipeline {
 public:
  // Validates the config (tasks present, positive counts, input file
  // readable) and fingerprints the triple file. Throws ConfigError.
  Pipeline(RunConfig config, std::ostream& log);

  const RunConfig& config() const { return config_; }

  // Hash of every result-affecting key; recorded in reports.
  std::uint64_t config_hash() const;
  std::uint64_t stage_hash(const std::string& task, Stage stage) const;
  std::uint64_t task_seed(const std::string& task) const;
  std::filesystem::path stage_dir(const std::string& task, Stage stage) const;
  std::filesystem::path report_path() const;

  // Lists the stage directories that would be used, touching nothing.
  void describe(std::ostream& out) const;

  // Runs one stage for every task. Upstream artifacts must exist, except
  // for ingest. Reuses the directory when already present.
  void run_stage(Stage stage);

  // Every stage for every task, then the combined report. Tasks fan out
  // over parallel_tasks threads.
  std::vector<EvalReport> run_all();

  IngestArtifacts load_ingest(const std::string& task) const;
  EmbeddingTable load_embedding_stage(const std::string& task) const;
  PolicyCheckpoint load_policy_stage(const std::string& task, Stage stage) const;
  DiscoveredPathSet load_paths(const std::string& task) const;
  ExtractArtifacts load_extract(const std::string& task) const;
  RerankModel load_rank(const std::string& task) const;
  EvalReport load_report(const std::string& task) const;

 private:
  void run_task_stage(const std::string& task, Stage stage);
  void run_task(const std::string& task);
  void write_combined_report(const std::vector<EvalReport>& reports) const;
  void require(const std::string& task, Stage stage) const;
  void log(const std::string& line) const;

  void ingest(const std::string& task, const std::filesystem::path& dir);
  void embed(const std::string& task, const std::filesystem::path& dir);
  void train_sl(const std::string& task, const std::filesystem::path& dir);
  void train_rl(const std::string& task, const std::filesystem::path& dir);
  void extract(const std::string& task, const std::filesystem::path& dir);
  void rank(const std::string& task, const std::filesystem::path& dir);
  void evaluate(const std::string& task, const std::filesystem::path& dir);

  RunConfig config_;
  std::ostream& log_;
  std::uint64_t triples_fingerprint_ = 0;
};

}  // namespace kgpath
