#include <benchmark/benchmark.h>

#include <random>
#include <set>

#include "kgpath/embedding.h"
#include "kgpath/policy.h"
#include "kgpath/reasoner.h"
#include "kgpath/synthetic.h"

namespace {

using namespace kgpath;

const SyntheticTask& task() {
  static const SyntheticTask t = [] {
    PlantedRuleSpec spec;
    spec.positive_pairs = 200;
    spec.entity_count = 1600;
    spec.noise_edges = 16000;
    spec.decoy_relations = 2;
    spec.body_length = 3;
    spec.seed = 1;
    return generate(spec);
  }();
  return t;
}

// Formulas read off random walks, so frontiers rarely die out early; the
// target is the walk's end half of the time and a random entity otherwise.
std::vector<std::pair<PathFormula, EntityPair>> queries(std::size_t n) {
  const auto& kg = task().graph;
  Rng rng(2);
  std::uniform_int_distribution<EntityId> ent(0, static_cast<EntityId>(kg.entity_count() - 1));
  std::vector<std::pair<PathFormula, EntityPair>> out;
  while (out.size() < n) {
    const EntityId source = ent(rng);
    EntityId at = source;
    PathFormula f;
    for (int step = 0; step < 4; ++step) {
      const auto edges = kg.out_edges(at);
      if (edges.size() == 0) break;
      const std::size_t k = std::uniform_int_distribution<std::size_t>(0, edges.size() - 1)(rng);
      f.push_back(edges.relations[k]);
      at = edges.tails[k];
    }
    if (f.size() < 4) continue;
    out.push_back({f, {source, (rng() & 1) ? at : ent(rng)}});
  }
  return out;
}

void BM_BidirectionalVerify(benchmark::State& state) {
  const auto& kg = task().graph;
  const auto q = queries(256);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [f, p] = q[i++ % q.size()];
    benchmark::DoNotOptimize(bidirectional_verify(kg, f, p).connected);
  }
}
BENCHMARK(BM_BidirectionalVerify);

// Forward set expansion from the source only, for comparison.
void BM_NaiveForwardVerify(benchmark::State& state) {
  const auto& kg = task().graph;
  const auto q = queries(256);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [f, p] = q[i++ % q.size()];
    std::set<EntityId> frontier{p.source};
    for (RelationId r : f) {
      std::set<EntityId> next;
      for (EntityId e : frontier) {
        for (EntityId t : kg.neighbors(e, r)) next.insert(t);
      }
      frontier.swap(next);
    }
    benchmark::DoNotOptimize(frontier.contains(p.target));
  }
}
BENCHMARK(BM_NaiveForwardVerify);

void BM_PolicyForward(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const std::size_t actions = 400;
  const PolicyParams p = init_policy(200, hidden, 2 * hidden, actions, 3);
  StateVector s = StateVector::Random(200);
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, s).probs.data());
}
BENCHMARK(BM_PolicyForward)->Arg(64)->Arg(512);

void BM_ReinforceGradient(benchmark::State& state) {
  const PolicyParams p = init_policy(200, 512, 1024, 400, 3);
  Trajectory t;
  for (RelationId a = 0; a < 3; ++a) t.steps.push_back({StateVector::Random(200), a});
  for (auto _ : state) benchmark::DoNotOptimize(reinforce_gradient(p, t).w3.data());
}
BENCHMARK(BM_ReinforceGradient)->Unit(benchmark::kMillisecond);

void BM_EmbeddingEpoch(benchmark::State& state) {
  EmbeddingConfig c;
  c.dim = static_cast<std::size_t>(state.range(0));
  c.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_translation_embedding(task().graph, c));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(task().graph.triple_count()));
}
BENCHMARK(BM_EmbeddingEpoch)->Arg(32)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
