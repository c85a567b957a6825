#include <benchmark/benchmark.h>

#include "cpt/fidelity.hpp"
#include "cpt/generator.hpp"
#include "cpt/model.hpp"
#include "cpt/rng.hpp"
#include "cpt/smm.hpp"
#include "cpt/state_machine.hpp"
#include "cpt/tokenizer.hpp"

namespace {

cpt::TokenizerConfig bench_tokenizer() {
  cpt::TokenizerConfig tok;
  tok.generation = cpt::Generation::G4;
  tok.scaler_min = 0.0;
  tok.scaler_max = 5.0;
  return tok;
}

std::vector<cpt::Token> random_tokens(std::size_t n, const cpt::TokenizerConfig& tok,
                                      std::uint64_t seed) {
  cpt::Rng rng(seed);
  std::vector<cpt::Token> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto kind = static_cast<cpt::EventKind>(std::size_t(rng.uniform() * 6));
    out.push_back(cpt::make_token(i == 0 ? 0.0 : rng.uniform(), kind,
                                  i + 1 == n, tok));
  }
  return out;
}

cpt::SemiMarkovModel bench_smm() {
  const auto def = cpt::build_state_machine(cpt::Generation::G4);
  cpt::SemiMarkovModel m;
  m.generation = cpt::Generation::G4;
  m.mean_flow_length = 20.0;
  m.initial_state.assign(def.state_count(), 0.0);
  m.initial_state[def.state_index(
      {cpt::TopState::Connected, cpt::SubState::SrvReqS})] = 1.0;
  for (std::size_t s = 0; s < def.state_count(); ++s) {
    const auto edges = def.edges_from(s);
    for (const auto& [ev, dst] : edges) {
      cpt::SmmEdge e;
      e.from = s;
      e.event = ev;
      e.to = dst;
      e.probability = 1.0 / double(edges.size());
      e.sojourn = {0.5, 1.0, 2.0, 4.0, 8.0};
      m.edges.push_back(e);
    }
  }
  return m;
}

void BM_ForwardPass(benchmark::State& state) {
  cpt::ModelConfig cfg;
  const auto tok = bench_tokenizer();
  const auto ckpt = cpt::init_model(cfg, tok, 7);
  const auto tokens = random_tokens(std::size_t(state.range(0)), tok, 11);
  for (auto _ : state) {
    auto out = cpt::forward(ckpt, tokens);
    benchmark::DoNotOptimize(out.event_logits.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardPass)->Arg(32)->Arg(128);

void BM_Replay(benchmark::State& state) {
  const auto def = cpt::build_state_machine(cpt::Generation::G4);
  const auto ds = cpt::generate_smm(bench_smm(), def, 200, 500, 5);
  for (auto _ : state) {
    for (const auto& s : ds.streams) {
      auto r = cpt::replay(s, def);
      benchmark::DoNotOptimize(r.violating_event_count);
    }
  }
  state.SetItemsProcessed(state.iterations() * 200);
}
BENCHMARK(BM_Replay);

void BM_MaxYDistance(benchmark::State& state) {
  cpt::Rng rng(3);
  std::vector<double> a(std::size_t(state.range(0))), b(a.size());
  for (auto& v : a) v = rng.uniform();
  for (auto& v : b) v = rng.uniform();
  for (auto _ : state) {
    benchmark::DoNotOptimize(cpt::max_y_distance(a, b));
  }
}
BENCHMARK(BM_MaxYDistance)->Arg(1000)->Arg(100000);

void BM_SmmGenerate(benchmark::State& state) {
  const auto def = cpt::build_state_machine(cpt::Generation::G4);
  const auto model = bench_smm();
  for (auto _ : state) {
    auto ds = cpt::generate_smm(model, def, 100, 500, 17);
    benchmark::DoNotOptimize(ds.streams.size());
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_SmmGenerate);

void BM_GenerateStream(benchmark::State& state) {
  cpt::ModelConfig cfg;
  const auto tok = bench_tokenizer();
  auto ckpt = cpt::init_model(cfg, tok, 7);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto s = cpt::generate_stream(ckpt, ++seed);
    benchmark::DoNotOptimize(s.events.size());
  }
}
BENCHMARK(BM_GenerateStream);

}  // namespace

BENCHMARK_MAIN();
