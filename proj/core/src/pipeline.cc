#include "kgpath/pipeline.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "text_util.h"

namespace fs = std::filesystem;

namespace kgpath {
namespace {

// Canonical text for a double: the shortest form that reads back exactly.
std::string format_number(double v) {
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::size_t to_count(std::string_view key, std::string_view text) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" +
                      std::string(text) + "'");
  }
  return v;
}

double to_real(std::string_view key, std::string_view text) {
  const std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + s + "'");
  }
  return v;
}

// Which stage first reads a key; -1 marks operational keys left out of
// every hash.
struct KeyDef {
  const char* name;
  int stage;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
KeyDef count_key(const char* name, int stage, T RunConfig::*field) {
  return {name, stage,
          [name, field](RunConfig& c, std::string_view v) {
            c.*field = static_cast<T>(to_count(name, v));
          },
          [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

KeyDef real_key(const char* name, int stage, double RunConfig::*field) {
  return {name, stage,
          [name, field](RunConfig& c, std::string_view v) { c.*field = to_real(name, v); },
          [field](const RunConfig& c) { return format_number(c.*field); }};
}

KeyDef weight_key(const char* name, double RewardWeights::*field) {
  return {name, 3,
          [name, field](RunConfig& c, std::string_view v) {
            c.rl_weights.*field = to_real(name, v);
          },
          [field](const RunConfig& c) { return format_number(c.rl_weights.*field); }};
}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    // The triple file enters hashes through its content fingerprint.
    t.push_back({"triples", -1,
                 [](RunConfig& c, std::string_view v) { c.triples = std::string(v); },
                 [](const RunConfig& c) { return c.triples.string(); }});
    t.push_back({"task", -1,
                 [](RunConfig& c, std::string_view v) {
                   c.tasks.clear();
                   for (std::string_view part : detail::split(v, ',')) {
                     part = detail::trim(part);
                     if (part.empty()) throw ConfigError("task: empty relation name");
                     c.tasks.emplace_back(part);
                   }
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.tasks.size(); ++i) {
                     if (i > 0) s += ',';
                     s += c.tasks[i];
                   }
                   return s;
                 }});
    t.push_back({"out", -1, [](RunConfig& c, std::string_view v) { c.out = std::string(v); },
                 [](const RunConfig& c) { return c.out.string(); }});
    t.push_back(count_key("seed", 0, &RunConfig::seed));
    t.push_back(real_key("split.train_fraction", 0, &RunConfig::train_fraction));
    t.push_back(count_key("split.negatives_per_positive", 0, &RunConfig::negatives_per_positive));
    t.push_back(count_key("embed.dim", 1, &RunConfig::embed_dim));
    t.push_back(real_key("embed.margin", 1, &RunConfig::embed_margin));
    t.push_back(count_key("embed.epochs", 1, &RunConfig::embed_epochs));
    t.push_back(real_key("embed.learning_rate", 1, &RunConfig::embed_learning_rate));
    t.push_back(count_key("policy.hidden1", 2, &RunConfig::hidden1));
    t.push_back(count_key("policy.hidden2", 2, &RunConfig::hidden2));
    t.push_back(real_key("policy.learning_rate", 2, &RunConfig::policy_learning_rate));
    t.push_back(real_key("policy.l2", 2, &RunConfig::policy_l2));
    t.push_back(count_key("sl.episodes", 2, &RunConfig::sl_episodes));
    t.push_back(count_key("sl.num_intermediates", 2, &RunConfig::sl_num_intermediates));
    t.push_back(count_key("sl.depth_limit", 2, &RunConfig::sl_depth_limit));
    t.push_back(count_key("rl.episodes", 3, &RunConfig::rl_episodes));
    t.push_back(count_key("rl.max_length", 3, &RunConfig::rl_max_length));
    t.push_back(weight_key("rl.lambda_global", &RewardWeights::global));
    t.push_back(weight_key("rl.lambda_efficiency", &RewardWeights::efficiency));
    t.push_back(weight_key("rl.lambda_diversity", &RewardWeights::diversity));
    t.push_back(count_key("rl.checkpoint_every", -1, &RunConfig::rl_checkpoint_every));
    t.push_back(count_key("rl.stop_after", -1, &RunConfig::rl_stop_after));
    t.push_back(count_key("extract.top_k", 4, &RunConfig::top_k));
    t.push_back(count_key("extract.frontier_cap", 4, &RunConfig::frontier_cap));
    t.push_back(real_key("rerank.l2", 5, &RunConfig::rerank_l2));
    t.push_back(count_key("eval.k", 6, &RunConfig::eval_k));
    t.push_back(count_key("eval.trials", 6, &RunConfig::eval_trials));
    t.push_back(count_key("parallel_tasks", -1, &RunConfig::parallel_tasks));
    std::sort(t.begin(), t.end(),
              [](const KeyDef& a, const KeyDef& b) { return std::string_view(a.name) < b.name; });
    return t;
  }();
  return table;
}

std::string sanitize(std::string_view task) {
  std::string out;
  for (char c : task) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ||
                      c == '-';
    out += keep ? c : '_';
  }
  if (out.empty() || out.front() == '.') out.insert(out.begin(), '_');
  return out;
}

std::uint64_t fingerprint_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read triple file: " + path.string());
  std::uint64_t h = fnv1a("");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  body(out);
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Fills `dir` through a temporary sibling that is renamed on success and
// removed on failure, so a stage directory is either complete or absent.
void materialize(const fs::path& dir, const std::function<void(const fs::path&)>& fill) {
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    fill(tmp);
  } catch (...) {
    std::error_code ignored;
    fs::remove_all(tmp, ignored);
    throw;
  }
  fs::rename(tmp, dir);
}

// Reads "key = value" lines of the first block of a report.
std::map<std::string, std::string> read_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  bool started = false;
  while (std::getline(in, line)) {
    if (line.empty()) {
      if (started) break;
      continue;
    }
    started = true;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::uint64_t fnv1a(std::string_view data, std::uint64_t hash) {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  const auto& table = key_table();
  const auto it = std::find_if(table.begin(), table.end(),
                               [&](const KeyDef& d) { return key == d.name; });
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->set(config, detail::trim(value));
}

RunConfig parse_run_config(std::istream& in) {
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) {
      text = text.substr(0, hash);
    }
    text = detail::trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(config, detail::trim(text.substr(0, eq)), text.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  return parse_run_config(in);
}

void write_run_config(std::ostream& out, const RunConfig& config) {
  for (const KeyDef& d : key_table()) out << d.name << " = " << d.get(config) << '\n';
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const KeyDef& d : key_table()) keys.emplace_back(d.name);
  return keys;
}

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kIngest: return "ingest";
    case Stage::kEmbed: return "embed";
    case Stage::kTrainSl: return "train-sl";
    case Stage::kTrainRl: return "train-rl";
    case Stage::kExtract: return "extract";
    case Stage::kRank: return "rank";
    case Stage::kEvaluate: return "evaluate";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view name) {
  for (Stage s : kAllStages) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

Pipeline::Pipeline(RunConfig config, std::ostream& log) : config_(std::move(config)), log_(log) {
  const RunConfig& c = config_;
  if (c.triples.empty()) throw ConfigError("config key 'triples' is required");
  if (c.tasks.empty()) throw ConfigError("config key 'task' is required");
  if (!fs::is_regular_file(c.triples)) {
    throw ConfigError("triple file not found: " + c.triples.string());
  }
  std::set<std::string> dirs;
  for (const auto& t : c.tasks) {
    if (!dirs.insert(sanitize(t)).second) throw ConfigError("duplicate task '" + t + "'");
  }
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string(what));
  };
  positive(c.train_fraction > 0.0 && c.train_fraction < 1.0,
           "split.train_fraction must lie in (0, 1)");
  positive(c.embed_dim >= 2, "embed.dim must be >= 2");
  positive(c.embed_margin > 0.0, "embed.margin must be > 0");
  positive(c.embed_learning_rate > 0.0, "embed.learning_rate must be > 0");
  positive(c.hidden1 >= 1 && c.hidden2 >= 1, "policy hidden sizes must be >= 1");
  positive(c.policy_learning_rate > 0.0, "policy.learning_rate must be > 0");
  positive(c.policy_l2 >= 0.0, "policy.l2 must be >= 0");
  positive(c.sl_num_intermediates >= 1 && c.sl_depth_limit >= 1,
           "sl.num_intermediates and sl.depth_limit must be >= 1");
  positive(c.rl_episodes >= 1, "rl.episodes must be >= 1");
  positive(c.rl_max_length >= 1, "rl.max_length must be >= 1");
  positive(c.rl_checkpoint_every >= 1, "rl.checkpoint_every must be >= 1");
  positive(c.frontier_cap >= 1, "extract.frontier_cap must be >= 1");
  positive(c.rerank_l2 >= 0.0, "rerank.l2 must be >= 0");
  positive(c.eval_k >= 1 && c.eval_trials >= 1, "eval.k and eval.trials must be >= 1");
  positive(c.parallel_tasks >= 1, "parallel_tasks must be >= 1");
  triples_fingerprint_ = fingerprint_file(c.triples);
}

std::uint64_t Pipeline::config_hash() const {
  std::string text = "triples#" + hex64(triples_fingerprint_) + "\n";
  for (const auto& t : config_.tasks) text += "task " + t + "\n";
  for (const KeyDef& d : key_table()) {
    if (d.stage >= 0) text += std::string(d.name) + " = " + d.get(config_) + "\n";
  }
  return fnv1a(text);
}

std::uint64_t Pipeline::stage_hash(const std::string& task, Stage stage) const {
  const int upto = static_cast<int>(stage);
  std::string text = "stage " + std::string(stage_name(stage)) + "\ntask " + task +
                     "\ntriples#" + hex64(triples_fingerprint_) + "\n";
  for (const KeyDef& d : key_table()) {
    if (d.stage >= 0 && d.stage <= upto) {
      text += std::string(d.name) + " = " + d.get(config_) + "\n";
    }
  }
  return fnv1a(text);
}

std::uint64_t Pipeline::task_seed(const std::string& task) const {
  return derive_seed(config_.seed, fnv1a(task));
}

fs::path Pipeline::stage_dir(const std::string& task, Stage stage) const {
  return config_.out / sanitize(task) /
         (std::string(stage_name(stage)) + "-" + hex64(stage_hash(task, stage)));
}

fs::path Pipeline::report_path() const {
  return config_.out / ("report-" + hex64(config_hash()) + ".txt");
}

void Pipeline::describe(std::ostream& out) const {
  out << "config_hash\t" << hex64(config_hash()) << '\n';
  out << "seed\t" << config_.seed << '\n';
  for (const auto& task : config_.tasks) {
    for (Stage s : kAllStages) {
      const fs::path dir = stage_dir(task, s);
      out << task << '\t' << stage_name(s) << '\t' << dir.string() << '\t'
          << (fs::exists(dir) ? "present" : "missing") << '\n';
    }
  }
  out << "report\t" << report_path().string() << '\n';
}

void Pipeline::log(const std::string& line) const {
  std::lock_guard<std::mutex> lock(log_mutex());
  log_ << line << '\n';
}

void Pipeline::require(const std::string& task, Stage stage) const {
  if (!fs::is_directory(stage_dir(task, stage))) {
    throw ConfigError("missing " + std::string(stage_name(stage)) + " artifacts for task '" +
                      task + "' (expected " + stage_dir(task, stage).string() + ")");
  }
}

void Pipeline::run_stage(Stage stage) {
  for (const auto& task : config_.tasks) {
    if (stage != Stage::kIngest) require(task, static_cast<Stage>(static_cast<int>(stage) - 1));
  }
  for (const auto& task : config_.tasks) run_task_stage(task, stage);
}

void Pipeline::run_task_stage(const std::string& task, Stage stage) {
  const fs::path dir = stage_dir(task, stage);
  const std::string name(stage_name(stage));
  if (fs::is_directory(dir)) {
    log("[" + task + "] " + name + ": reusing " + dir.string());
    return;
  }
  log("[" + task + "] " + name + ": writing " + dir.string());
  try {
    fs::create_directories(dir.parent_path());
    materialize(dir, [&](const fs::path& tmp) {
      switch (stage) {
        case Stage::kIngest: ingest(task, tmp); break;
        case Stage::kEmbed: embed(task, tmp); break;
        case Stage::kTrainSl: train_sl(task, tmp); break;
        case Stage::kTrainRl: train_rl(task, tmp); break;
        case Stage::kExtract: extract(task, tmp); break;
        case Stage::kRank: rank(task, tmp); break;
        case Stage::kEvaluate: evaluate(task, tmp); break;
      }
    });
  } catch (const Interrupted&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, task, e.what());
  }
}

void Pipeline::run_task(const std::string& task) {
  for (Stage s : kAllStages) run_task_stage(task, s);
}

std::vector<EvalReport> Pipeline::run_all() {
  const auto& tasks = config_.tasks;
  const std::size_t workers = std::min(config_.parallel_tasks, tasks.size());
  if (workers <= 1) {
    for (const auto& t : tasks) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(tasks.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
          try {
            run_task(tasks[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::vector<EvalReport> reports;
  for (const auto& t : tasks) reports.push_back(load_report(t));
  write_combined_report(reports);
  return reports;
}

void Pipeline::write_combined_report(const std::vector<EvalReport>& reports) const {
  const fs::path path = report_path();
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, [&](std::ostream& out) {
    out << "# config_hash " << hex64(config_hash()) << " seed " << config_.seed << '\n';
    write_report(out, reports);
  });
  fs::rename(tmp, path);
  log("report: " + path.string());
}

// ---------------------------------------------------------------------------
// stages

namespace {

void write_manifest(const fs::path& dir, const std::string& stage, const std::string& task,
                    std::uint64_t hash, std::uint64_t seed, std::uint64_t task_seed,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  write_file(dir / "manifest.txt", [&](std::ostream& out) {
    out << "stage = " << stage << '\n';
    out << "task = " << task << '\n';
    out << "config_hash = " << hex64(hash) << '\n';
    out << "seed = " << seed << '\n';
    out << "task_seed = " << task_seed << '\n';
    for (const auto& [k, v] : extra) out << k << " = " << v << '\n';
  });
}

void write_formulas(const fs::path& path, const KnowledgeGraph& kg,
                    std::span<const PathFormula> formulas, std::uint64_t hash,
                    std::uint64_t seed) {
  write_file(path, [&](std::ostream& out) {
    out << "# config_hash " << hex64(hash) << " seed " << seed << '\n';
    write_formula_file(out, kg, formulas);
  });
}

}  // namespace

void Pipeline::ingest(const std::string& task, const fs::path& dir) {
  const KnowledgeGraph raw = load_triples(config_.triples);
  const auto relation = raw.find_relation(task);
  if (!relation) throw std::invalid_argument("relation '" + task + "' not in the triple file");
  const KnowledgeGraph closed = augment_inverses(raw);
  const std::uint64_t ts = task_seed(task);
  const TaskSplitResult result = make_task_split(
      closed, *relation, config_.train_fraction, config_.negatives_per_positive,
      derive_seed(ts, 1));
  if (result.split.negatives_short) {
    log("[" + task + "] warning: some positives received fewer negatives than requested");
  }

  write_file(dir / "graph.txt", [&](std::ostream& out) { save_graph(out, result.graph); });
  write_file(dir / "split.tsv", [&](std::ostream& out) {
    write_split_manifest(out, result.graph, result.split);
  });
  const auto& s = result.split;
  write_manifest(dir, "ingest", task, stage_hash(task, Stage::kIngest), config_.seed, ts,
                 {{"entities", std::to_string(raw.entity_count())},
                  {"relations", std::to_string(raw.base_relation_count())},
                  {"triples", std::to_string(raw.triple_count())},
                  {"task_triples_removed",
                   std::to_string(s.train_positives.size() + s.test_positives.size())},
                  {"train_positives", std::to_string(s.train_positives.size())},
                  {"train_negatives", std::to_string(s.train_negatives.size())},
                  {"test_positives", std::to_string(s.test_positives.size())},
                  {"test_negatives", std::to_string(s.test_negatives.size())},
                  {"negatives_short", s.negatives_short ? "1" : "0"}});
}

IngestArtifacts Pipeline::load_ingest(const std::string& task) const {
  const fs::path dir = stage_dir(task, Stage::kIngest);
  IngestArtifacts a;
  auto g = open_in(dir / "graph.txt");
  a.graph = load_graph(g);
  auto s = open_in(dir / "split.tsv");
  a.split = read_split_manifest(s, a.graph);
  return a;
}

void Pipeline::embed(const std::string& task, const fs::path& dir) {
  const IngestArtifacts in = load_ingest(task);
  EmbeddingConfig ec;
  ec.dim = config_.embed_dim;
  ec.margin = config_.embed_margin;
  ec.epochs = config_.embed_epochs;
  ec.learning_rate = config_.embed_learning_rate;
  ec.seed = derive_seed(task_seed(task), 2);
  double last_loss = 0.0;
  const std::size_t every = std::max<std::size_t>(1, ec.epochs / 10);
  const EmbeddingTable table =
      train_translation_embedding(in.graph, ec, [&](std::size_t epoch, double loss) {
        last_loss = loss;
        if (epoch % every == 0) {
          log("[" + task + "] embed epoch " + std::to_string(epoch) + " loss " +
              format_number(loss));
        }
      });
  write_file(dir / "embedding.bin", [&](std::ostream& out) { save_embedding(out, table); });
  write_file(dir / "names.tsv", [&](std::ostream& out) {
    out << "# config_hash " << hex64(stage_hash(task, Stage::kEmbed)) << " seed "
        << config_.seed << '\n';
    write_embedding_names(out, in.graph);
  });
  write_manifest(dir, "embed", task, stage_hash(task, Stage::kEmbed), config_.seed,
                 task_seed(task), {{"final_mean_loss", format_number(last_loss)}});
}

EmbeddingTable Pipeline::load_embedding_stage(const std::string& task) const {
  auto in = open_in(stage_dir(task, Stage::kEmbed) / "embedding.bin");
  return load_embedding(in);
}

void Pipeline::train_sl(const std::string& task, const fs::path& dir) {
  const IngestArtifacts in = load_ingest(task);
  const EmbeddingTable table = load_embedding_stage(task);
  const std::uint64_t ts = task_seed(task);
  const PolicyParams initial = init_policy(2 * table.dim(), config_.hidden1, config_.hidden2,
                                           in.graph.relation_count(), derive_seed(ts, 3));
  SupervisedConfig sc;
  sc.episodes = config_.sl_episodes;
  sc.num_intermediates = config_.sl_num_intermediates;
  sc.depth_limit = config_.sl_depth_limit;
  sc.optimizer.learning_rate = config_.policy_learning_rate;
  sc.optimizer.l2 = config_.policy_l2;
  sc.seed = derive_seed(ts, 4);
  const std::size_t every = std::max<std::size_t>(1, sc.episodes / 10);
  const SupervisedResult result = train_supervised(
      initial, in.graph, table, in.split.train_positives, sc,
      [&](std::size_t episode, const PolicyParams&) {
        if (episode % every == 0) log("[" + task + "] train-sl episode " + std::to_string(episode));
      });

  const std::uint64_t hash = stage_hash(task, Stage::kTrainSl);
  const auto& held_out = in.split.test_positives;
  const std::uint64_t eval_seed = derive_seed(ts, 6);
  const double before = success_ratio_at(initial, in.graph, table, held_out, config_.eval_k,
                                         config_.eval_trials, eval_seed);
  const double after = success_ratio_at(result.policy, in.graph, table, held_out,
                                        config_.eval_k, config_.eval_trials, eval_seed);

  write_file(dir / "policy.bin", [&](std::ostream& out) {
    save_policy(out, result.policy, &result.optimizer, {hash, ts});
  });
  write_file(dir / "teacher_paths.txt", [&](std::ostream& out) {
    out << "# config_hash " << hex64(hash) << " seed " << config_.seed << '\n';
    write_teacher_paths(out, in.graph, result.teacher_paths);
  });
  const std::string k = std::to_string(config_.eval_k);
  write_manifest(dir, "train-sl", task, hash, config_.seed, ts,
                 {{"episodes", std::to_string(result.episodes_run)},
                  {"updates", std::to_string(result.updates)},
                  {"pairs_without_paths", std::to_string(result.pairs_without_paths)},
                  {"succ_" + k + "_before", format_number(before)},
                  {"succ_" + k + "_after", format_number(after)}});
}

PolicyCheckpoint Pipeline::load_policy_stage(const std::string& task, Stage stage) const {
  auto in = open_in(stage_dir(task, stage) / "policy.bin");
  return load_policy(in);
}

void Pipeline::train_rl(const std::string& task, const fs::path& dir) {
  const IngestArtifacts in = load_ingest(task);
  const EmbeddingTable table = load_embedding_stage(task);
  const std::uint64_t ts = task_seed(task);
  const std::uint64_t hash = stage_hash(task, Stage::kTrainRl);

  RetrainConfig rc;
  rc.episodes = config_.rl_episodes;
  rc.max_length = config_.rl_max_length;
  rc.weights = config_.rl_weights;
  rc.optimizer.learning_rate = config_.policy_learning_rate;
  rc.optimizer.l2 = config_.policy_l2;
  rc.seed = derive_seed(ts, 5);

  fs::path partial = stage_dir(task, Stage::kTrainRl);
  partial += ".partial";
  const fs::path checkpoint = partial / "checkpoint.bin";
  RetrainState state;
  if (fs::is_regular_file(checkpoint)) {
    auto cin = open_in(checkpoint);
    state = load_retrain_state(cin);
    log("[" + task + "] train-rl: resuming at episode " + std::to_string(state.next_episode));
  } else {
    state = begin_retrain(load_policy_stage(task, Stage::kTrainSl).params, rc);
  }

  auto save_checkpoint = [&] {
    fs::create_directories(partial);
    fs::path tmp = checkpoint;
    tmp += ".tmp";
    write_file(tmp, [&](std::ostream& out) { save_retrain_state(out, state); });
    fs::rename(tmp, checkpoint);
  };

  while (state.next_episode < rc.episodes) {
    std::size_t until = std::min(rc.episodes, state.next_episode + config_.rl_checkpoint_every);
    if (config_.rl_stop_after > 0) until = std::min(until, config_.rl_stop_after);
    if (until <= state.next_episode) break;
    try {
      continue_retrain(state, in.graph, table, in.split.train_positives, rc, until);
    } catch (const NumericError&) {
      save_checkpoint();
      throw;
    }
    save_checkpoint();
    log("[" + task + "] train-rl episode " + std::to_string(state.next_episode) + " successes " +
        std::to_string(state.successes) + " paths " + std::to_string(state.paths.size()));
  }
  if (state.next_episode < rc.episodes) {
    throw Interrupted("train-rl for task '" + task + "' stopped after episode " +
                      std::to_string(state.next_episode) + "; checkpoint at " +
                      checkpoint.string());
  }

  write_file(dir / "policy.bin",
             [&](std::ostream& out) { save_policy(out, state.policy, &state.optimizer, {hash, ts}); });
  write_file(dir / "checkpoint.bin", [&](std::ostream& out) { save_retrain_state(out, state); });
  const auto ranked = state.paths.ranked();
  write_formulas(dir / "formulas.txt", in.graph, ranked, hash, config_.seed);
  write_file(dir / "paths.tsv", [&](std::ostream& out) {
    out << "# config_hash " << hex64(hash) << " seed " << config_.seed << '\n';
    for (const auto& e : state.paths.entries()) {
      out << format_formula(in.graph, e.formula) << '\t' << e.successes << '\n';
    }
  });
  write_file(dir / "manifest.txt", [&](std::ostream& out) {
    out << "stage = train-rl\n";
    out << "task = " << task << '\n';
    out << "config_hash = " << hex64(hash) << '\n';
    out << "task_seed = " << ts << '\n';
    for (const KeyDef& d : key_table()) {
      if (d.stage >= 0) out << d.name << " = " << d.get(config_) << '\n';
    }
    out << "episodes_run = " << state.next_episode << '\n';
    out << "successes = " << state.successes << '\n';
    out << "success_ratio = "
        << format_number(static_cast<double>(state.successes) /
                         static_cast<double>(state.next_episode))
        << '\n';
    out << "penalty_updates = " << state.penalty_updates << '\n';
    out << "success_updates = " << state.success_updates << '\n';
    out << "discovered_paths = " << state.paths.size() << '\n';
    for (const auto& e : state.paths.entries()) {
      out << "path = " << format_formula(in.graph, e.formula) << " (" << e.successes << ")\n";
    }
  });
  std::error_code ignored;
  fs::remove_all(partial, ignored);
}

DiscoveredPathSet Pipeline::load_paths(const std::string& task) const {
  const IngestArtifacts in = load_ingest(task);
  auto f = open_in(stage_dir(task, Stage::kTrainRl) / "paths.tsv");
  DiscoveredPathSet paths;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError("malformed paths.tsv line", 0);
    paths.record(parse_formula(in.graph, std::string_view(line).substr(0, tab)),
                 detail::parse_unsigned(std::string_view(line).substr(tab + 1), 0));
  }
  return paths;
}

void Pipeline::extract(const std::string& task, const fs::path& dir) {
  const IngestArtifacts in = load_ingest(task);
  const DiscoveredPathSet paths = load_paths(task);
  const auto formulas = paths.ranked(config_.top_k);
  if (formulas.empty()) throw std::runtime_error("retraining discovered no formulas");
  VerifyOptions options;
  options.frontier_cap = config_.frontier_cap;
  const auto train_rows = in.split.train_rows();
  const auto test_rows = in.split.test_rows();
  const FeatureMatrix train = extract_features(in.graph, formulas, train_rows, options);
  const FeatureMatrix test = extract_features(in.graph, formulas, test_rows, options);
  const std::uint64_t hash = stage_hash(task, Stage::kExtract);
  write_formulas(dir / "formulas.txt", in.graph, formulas, hash, config_.seed);
  write_file(dir / "features_train.tsv",
             [&](std::ostream& out) { write_feature_matrix(out, in.graph, train); });
  write_file(dir / "features_test.tsv",
             [&](std::ostream& out) { write_feature_matrix(out, in.graph, test); });
  write_manifest(dir, "extract", task, hash, config_.seed, task_seed(task),
                 {{"formulas", std::to_string(formulas.size())},
                  {"train_rows", std::to_string(train.rows.size())},
                  {"test_rows", std::to_string(test.rows.size())},
                  {"frontier_overflows", std::to_string(train.overflows + test.overflows)}});
}

ExtractArtifacts Pipeline::load_extract(const std::string& task) const {
  const IngestArtifacts in = load_ingest(task);
  const fs::path dir = stage_dir(task, Stage::kExtract);
  ExtractArtifacts a;
  auto f = open_in(dir / "formulas.txt");
  a.formulas = read_formula_file(f, in.graph);
  auto tr = open_in(dir / "features_train.tsv");
  a.train = read_feature_matrix(tr, in.graph);
  auto te = open_in(dir / "features_test.tsv");
  a.test = read_feature_matrix(te, in.graph);
  return a;
}

void Pipeline::rank(const std::string& task, const fs::path& dir) {
  const IngestArtifacts in = load_ingest(task);
  const ExtractArtifacts features = load_extract(task);
  const RerankModel model = fit_rerank(features.train, config_.rerank_l2);
  const auto scores = score_pairs(model, features.test);
  const std::uint64_t hash = stage_hash(task, Stage::kRank);
  write_file(dir / "model.txt", [&](std::ostream& out) {
    out << "# config_hash " << hex64(hash) << " seed " << config_.seed << '\n';
    save_rerank_model(out, model);
  });
  write_file(dir / "scores.tsv", [&](std::ostream& out) {
    out << "# config_hash " << hex64(hash) << " seed " << config_.seed << '\n';
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const auto& row = features.test.rows[i];
      out << in.graph.entity_name(row.pair.source) << '\t'
          << in.graph.entity_name(row.pair.target) << '\t' << (row.label > 0 ? "+1" : "-1")
          << '\t' << format_number(scores[i]) << '\n';
    }
  });
  write_manifest(dir, "rank", task, hash, config_.seed, task_seed(task),
                 {{"bias_only", model.bias_only ? "1" : "0"}});
}

RerankModel Pipeline::load_rank(const std::string& task) const {
  auto f = open_in(stage_dir(task, Stage::kRank) / "model.txt");
  std::stringstream body;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.front() != '#') body << line << '\n';
  }
  return load_rerank_model(body);
}

void Pipeline::evaluate(const std::string& task, const fs::path& dir) {
  const IngestArtifacts in = load_ingest(task);
  const EmbeddingTable table = load_embedding_stage(task);
  const ExtractArtifacts features = load_extract(task);
  const RerankModel model = load_rank(task);
  const PolicyCheckpoint policy = load_policy_stage(task, Stage::kTrainRl);
  const DiscoveredPathSet paths = load_paths(task);
  const std::uint64_t ts = task_seed(task);

  const auto scores = score_pairs(model, features.test);
  const PairScorer scorer = scorer_from_rows(features.test.rows, scores);
  EvalReport report;
  report.task = task;
  report.link_prediction = map_link_prediction(scorer, in.split);
  report.fact_prediction = map_fact_prediction(scorer, in.split);
  report.paths = path_statistics(paths);
  report.success_curve = success_curve(policy.params, in.graph, table, in.split.test_positives,
                                       config_.eval_k, config_.eval_trials, derive_seed(ts, 6));
  report.config_hash = stage_hash(task, Stage::kEvaluate);
  report.seed = config_.seed;

  write_file(dir / "report.txt", [&](std::ostream& out) {
    write_report(out, std::span<const EvalReport>(&report, 1));
  });
  std::vector<std::pair<double, double>> curve;
  for (std::size_t k = 0; k < report.success_curve.size(); ++k) {
    curve.emplace_back(static_cast<double>(k + 1), report.success_curve[k]);
  }
  write_file(dir / "success_curve.tsv", [&](std::ostream& out) { write_two_column(out, curve); });
  std::vector<std::pair<double, double>> hist;
  for (const auto& [len, count] : report.paths.length_histogram) {
    hist.emplace_back(static_cast<double>(len), static_cast<double>(count));
  }
  write_file(dir / "path_lengths.tsv", [&](std::ostream& out) { write_two_column(out, hist); });
  write_manifest(dir, "evaluate", task, report.config_hash, config_.seed, ts, {});
}

EvalReport Pipeline::load_report(const std::string& task) const {
  auto f = open_in(stage_dir(task, Stage::kEvaluate) / "report.txt");
  const auto kv = read_key_values(f);
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("report lacks key " + key, 0);
    return it->second;
  };
  EvalReport r;
  r.task = task;
  r.config_hash = std::stoull(get("config_hash"), nullptr, 16);
  r.seed = std::stoull(get("seed"));
  r.link_prediction.map = std::stod(get("link_prediction_map"));
  r.link_prediction.queries = std::stoull(get("link_prediction_queries"));
  r.link_prediction.skipped = std::stoull(get("link_prediction_skipped"));
  r.fact_prediction = std::stod(get("fact_prediction_map"));
  r.paths.count = std::stoull(get("path_count"));
  r.paths.mean_length = std::stod(get("path_mean_length"));
  for (const auto& [key, value] : kv) {
    if (key.rfind("path_length_", 0) == 0) {
      r.paths.length_histogram[std::stoull(key.substr(12))] = std::stoull(value);
    }
  }
  for (std::size_t k = 1;; ++k) {
    const auto it = kv.find("succ_" + std::to_string(k));
    if (it == kv.end()) break;
    r.success_curve.push_back(std::stod(it->second));
  }
  return r;
}

}  // namespace kgpath
