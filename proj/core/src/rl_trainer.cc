#include "kgpath/rl_trainer.h"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "binary_io.h"

namespace kgpath {
namespace {

constexpr std::string_view kRetrainMagic = "KGPRTS01";

}  // namespace

bool DiscoveredPathSet::record(const PathFormula& formula, std::size_t count) {
  if (auto it = index_.find(formula); it != index_.end()) {
    entries_[it->second].successes += count;
    return false;
  }
  index_.emplace(formula, entries_.size());
  entries_.push_back({formula, count});
  return true;
}

std::size_t DiscoveredPathSet::successes(const PathFormula& formula) const {
  auto it = index_.find(formula);
  return it == index_.end() ? 0 : entries_[it->second].successes;
}

std::vector<PathFormula> DiscoveredPathSet::formulas() const {
  std::vector<PathFormula> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.formula);
  return out;
}

std::vector<PathFormula> DiscoveredPathSet::ranked(std::size_t top_k) const {
  std::vector<std::size_t> order(entries_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    return entries_[a].successes > entries_[b].successes;
  });
  if (top_k > 0 && top_k < order.size()) order.resize(top_k);
  std::vector<PathFormula> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(entries_[i].formula);
  return out;
}

EpisodeResult run_episode(const PolicyParams& policy, const KnowledgeGraph& kg,
                          const EmbeddingTable& table, EntityPair pair,
                          std::size_t max_length, Rng& rng) {
  EpisodeResult result;
  EnvState state = reset(kg, pair);
  if (state.at_target()) {
    result.success = true;
    result.walk = {{}, state.trace};
    result.path = result.walk;
    return result;
  }
  while (state.steps_taken < max_length) {
    StateVector s = embed_state(table, state.current, state.target);
    const RelationId action = sample_action(forward(policy, s), rng);
    const EntityId from = state.current;
    const StepKind kind = advance(kg, state, action, rng);
    const double reward = kind == StepKind::kFailed ? -1.0 : 0.0;
    result.log.push_back({state.steps_taken, from, action, kind, reward});
    if (kind == StepKind::kFailed) {
      result.failed.push_back({std::move(s), action});
    } else {
      result.trajectory.steps.push_back({std::move(s), action});
    }
    if (kind == StepKind::kReachedTarget) {
      result.success = true;
      break;
    }
  }
  result.walk = {state.path, state.trace};
  result.path = result.success ? remove_cycles(result.walk) : result.walk;
  return result;
}

RetrainState begin_retrain(PolicyParams supervised, const RetrainConfig& config) {
  RetrainState state;
  state.optimizer = AdamState::for_params(supervised);
  state.policy = std::move(supervised);
  state.rng.seed(derive_seed(config.seed, 3));
  return state;
}

void continue_retrain(RetrainState& state, const KnowledgeGraph& kg,
                      const EmbeddingTable& table, std::span<const EntityPair> positives,
                      const RetrainConfig& config, std::size_t stop_after,
                      const std::function<void(const EpisodeSummary&)>& on_episode) {
  if (positives.empty()) throw std::invalid_argument("retraining needs positive pairs");
  if (config.max_length == 0) throw std::invalid_argument("max_length must be >= 1");
  const std::size_t end = std::min(stop_after, config.episodes);

  while (state.next_episode < end) {
    // Work on copies so a NumericError leaves the last completed episode.
    RetrainState next = state;
    const std::size_t episode = next.next_episode;
    const EntityPair pair = positives[episode % positives.size()];
    EpisodeResult ep = run_episode(next.policy, kg, table, pair, config.max_length, next.rng);

    EpisodeSummary summary{episode, ep.success, 0.0, ep.path.relations.size()};
    if (!ep.failed.empty()) {
      Trajectory penalty{std::move(ep.failed), -1.0};
      apply_update(next.policy, reinforce_gradient(next.policy, penalty), next.optimizer,
                   config.optimizer);
      ++next.penalty_updates;
    }
    if (ep.success && !ep.path.relations.empty()) {
      const PathFormula& formula = ep.path.relations;
      const double diversity =
          config.weights.diversity != 0.0
              ? reward_diversity(table, formula, next.paths.formulas())
              : 0.0;
      const double total = combine_rewards(config.weights, reward_global(true),
                                           reward_efficiency(formula), diversity);
      ep.trajectory.reward = total;
      apply_update(next.policy, reinforce_gradient(next.policy, ep.trajectory), next.optimizer,
                   config.optimizer);
      ++next.success_updates;
      next.paths.record(formula);
      summary.total_reward = total;
    }
    if (ep.success) ++next.successes;
    ++next.next_episode;
    state = std::move(next);
    if (on_episode) on_episode(summary);
  }
}

RetrainResult retrain(PolicyParams supervised, const KnowledgeGraph& kg,
                      const EmbeddingTable& table, std::span<const EntityPair> positives,
                      const RetrainConfig& config) {
  RetrainState state = begin_retrain(std::move(supervised), config);
  continue_retrain(state, kg, table, positives, config, config.episodes);
  return {std::move(state.policy), std::move(state.paths), state.next_episode,
          state.successes};
}

void save_retrain_state(std::ostream& out, const RetrainState& state) {
  detail::write_magic(out, kRetrainMagic);
  detail::write_u64(out, state.next_episode);
  detail::write_u64(out, state.successes);
  detail::write_u64(out, state.penalty_updates);
  detail::write_u64(out, state.success_updates);
  detail::write_u64(out, state.paths.size());
  for (const auto& e : state.paths.entries()) {
    detail::write_u64(out, e.successes);
    detail::write_u64(out, e.formula.size());
    for (RelationId r : e.formula) detail::write_u64(out, r);
  }
  std::ostringstream rng_text;
  rng_text << state.rng;
  const std::string text = rng_text.str();
  detail::write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  save_policy(out, state.policy, &state.optimizer);
}

RetrainState load_retrain_state(std::istream& in) {
  detail::expect_magic(in, kRetrainMagic);
  RetrainState state;
  state.next_episode = detail::read_u64(in);
  state.successes = detail::read_u64(in);
  state.penalty_updates = detail::read_u64(in);
  state.success_updates = detail::read_u64(in);
  const auto path_count = detail::read_u64(in);
  for (std::uint64_t i = 0; i < path_count; ++i) {
    const auto successes = detail::read_u64(in);
    PathFormula formula(detail::read_u64(in));
    for (auto& r : formula) r = static_cast<RelationId>(detail::read_u64(in));
    state.paths.record(formula, successes);
  }
  std::string text(detail::read_u64(in), '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw std::runtime_error("truncated retrain checkpoint");
  }
  std::istringstream rng_text(text);
  rng_text >> state.rng;
  PolicyCheckpoint ckpt = load_policy(in);
  if (!ckpt.optimizer) throw std::runtime_error("retrain checkpoint lacks optimizer state");
  state.policy = std::move(ckpt.params);
  state.optimizer = std::move(*ckpt.optimizer);
  return state;
}

}  // namespace kgpath
