#include <cmath>
#include <fstream>
#include <numeric>

#include "cpt/generator.hpp"
#include "cpt/model.hpp"
#include "cpt/rng.hpp"
#include "cpt/smm.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cpt;
using cpt::test::TempDir;
using cpt::test::uniform_smm;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_blocks = 1;
  cfg.mlp_hidden = 32;
  cfg.n_heads = 2;
  cfg.max_context = 24;
  return cfg;
}

TokenizerConfig tiny_tokenizer(Generation gen = Generation::G4) {
  TokenizerConfig tok;
  tok.generation = gen;
  tok.scaler_min = 0.0;
  tok.scaler_max = std::log1p(50.0);
  return tok;
}

std::vector<Token> random_tokens(std::size_t n, const TokenizerConfig& tok,
                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Token> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto kind = static_cast<EventKind>(
        std::size_t(rng.uniform() * double(tok.vocab())));
    out.push_back(make_token(i == 0 ? 0.0 : rng.uniform(), kind, i + 1 == n, tok));
  }
  return out;
}

TraceDataset small_training_set(std::size_t n, std::uint64_t seed) {
  const StateMachineDef def = build_state_machine(Generation::G4);
  return generate_smm(uniform_smm(Generation::G4, 8.0), def, n, 20, seed);
}

}  // namespace

TEST_CASE("parameter count matches the default architecture") {
  ModelConfig cfg;  // d_model 128, 2 blocks, mlp 1024, ctx 500
  const std::size_t count = parameter_count(cfg, 9);
  CHECK(count == 726538);
  CHECK(std::abs(double(count) - 725000.0) / 725000.0 < 0.10);
}

TEST_CASE("init_model is seeded and validates its config") {
  const TokenizerConfig tok = tiny_tokenizer();
  const ModelConfig cfg = tiny_config();
  const Checkpoint a = init_model(cfg, tok, 42);
  const Checkpoint b = init_model(cfg, tok, 42);
  CHECK(a.params == b.params);
  const Checkpoint c = init_model(cfg, tok, 43);
  CHECK(a.params != c.params);

  ModelConfig bad = cfg;
  bad.d_model = 127;
  bad.n_heads = 4;
  CHECK_THROWS_AS(init_model(bad, tok, 1), Error);
  bad = cfg;
  bad.max_context = 1;
  CHECK_THROWS_AS(init_model(bad, tok, 1), Error);

  SUBCASE("layer norms start at identity") {
    const auto g = a.tensor("block0.ln1.g");
    for (float v : g) CHECK(v == 1.0f);
    const auto bias = a.tensor("embed.b");
    for (float v : bias) CHECK(v == 0.0f);
  }
}

TEST_CASE("forward: shapes, finiteness, sigma positivity") {
  const TokenizerConfig tok = tiny_tokenizer();
  const Checkpoint ckpt = init_model(tiny_config(), tok, 7);
  const auto tokens = random_tokens(12, tok, 5);
  const HeadOutputs out = forward(ckpt, tokens);
  CHECK(out.length == 12);
  CHECK(out.event_logits.size() == 12 * 6);
  CHECK(out.arrival_mean.size() == 12);
  CHECK(out.arrival_sigma.size() == 12);
  CHECK(out.stop_logits.size() == 24);
  for (double v : out.event_logits) CHECK(std::isfinite(v));
  for (double v : out.arrival_sigma) CHECK(v > 0.0);

  SUBCASE("too-long sequences error") {
    CHECK_THROWS_AS(forward(ckpt, random_tokens(25, tok, 1)), Error);
  }
  SUBCASE("scalar ablation head has no sigma") {
    ModelConfig cfg = tiny_config();
    cfg.distribution_head = false;
    const Checkpoint abl = init_model(cfg, tok, 7);
    const HeadOutputs o = forward(abl, tokens);
    CHECK(o.arrival_sigma.empty());
    CHECK(o.arrival_mean.size() == 12);
  }
}

TEST_CASE("forward is causal") {
  const TokenizerConfig tok = tiny_tokenizer();
  const Checkpoint ckpt = init_model(tiny_config(), tok, 11);
  auto tokens = random_tokens(10, tok, 21);
  const HeadOutputs base = forward(ckpt, tokens);
  // Perturb token 6; outputs at positions < 6 must be bit-identical.
  tokens[6] = make_token(0.9, EventKind::Detach, false, tok);
  const HeadOutputs mod = forward(ckpt, tokens);
  for (std::size_t l = 0; l < 6; ++l) {
    for (std::size_t v = 0; v < 6; ++v)
      CHECK(base.event_logits[l * 6 + v] == mod.event_logits[l * 6 + v]);
    CHECK(base.arrival_mean[l] == mod.arrival_mean[l]);
    CHECK(base.stop_logits[l * 2] == mod.stop_logits[l * 2]);
  }
  bool later_changed = false;
  for (std::size_t l = 6; l < 10 && !later_changed; ++l)
    later_changed = base.event_logits[l * 6] != mod.event_logits[l * 6];
  CHECK(later_changed);
}

TEST_CASE("loss: analytic values") {
  const TokenizerConfig tok = tiny_tokenizer();
  HeadOutputs out;
  out.length = 2;
  out.vocab = 6;
  out.distribution_head = true;
  out.event_logits.assign(12, 0.0);  // uniform over 6 classes
  out.arrival_mean = {0.3, 0.0};
  out.arrival_sigma = {1.0, 1.0};
  out.stop_logits.assign(4, 0.0);  // uniform over 2 classes

  TargetSequence tgt;
  tgt.event_target = {2, -1};
  tgt.arrival_target = {0.3, 0.0};  // x == mu at the unmasked position
  tgt.stop_target = {0, 1};

  const LossBreakdown parts = loss_parts(out, tgt);
  CHECK(parts.event == doctest::Approx(std::log(6.0)));            // ln 6
  CHECK(parts.arrival == doctest::Approx(0.5 * std::log(2.0 * M_PI)));
  CHECK(parts.stop == doctest::Approx(std::log(2.0)));

  SUBCASE("loss is linear in the weights") {
    const double l111 = loss(out, tgt, {1, 1, 1});
    const double l311 = loss(out, tgt, {3, 1, 1});
    CHECK(l311 == doctest::Approx(l111 + 2.0 * parts.event));
  }
  SUBCASE("sigma <= 0 breaches the invariant") {
    out.arrival_sigma[0] = 0.0;
    CHECK_THROWS_AS(loss_parts(out, tgt), Error);
  }
  SUBCASE("weights must not be all zero") {
    CHECK_THROWS_AS(loss(out, tgt, {0, 0, 0}), Error);
  }
  (void)tok;
}

TEST_CASE("targets_for: next-token alignment with a final stop target") {
  const TokenizerConfig tok = tiny_tokenizer();
  TraceDataset ds;
  ds.generation = tok.generation;
  ds.streams.push_back(cpt::test::make_stream(
      "u", tok.generation, {{0, "SRV_REQ"}, {1, "HO"}, {2, "S1_CONN_REL"}}));
  const auto toks = encode_stream(ds.streams[0], tok, true);
  const TargetSequence tgt = targets_for(toks, tok);
  CHECK(tgt.event_target ==
        std::vector<int>{int(EventKind::Handover), int(EventKind::Release), -1});
  CHECK(tgt.stop_target == std::vector<int>{0, 1, 1});
  CHECK(tgt.arrival_target[0] == doctest::Approx(scale(1.0, tok)));
}

TEST_CASE("grad_check: analytic gradients match finite differences") {
  const TokenizerConfig tok = tiny_tokenizer();
  const Checkpoint ckpt = init_model(tiny_config(), tok, 3);
  const auto tokens = random_tokens(8, tok, 17);
  CHECK(grad_check(ckpt, tokens, {1, 1, 1}) < 1e-4);

  SUBCASE("scalar-head variant") {
    ModelConfig cfg = tiny_config();
    cfg.distribution_head = false;
    const Checkpoint abl = init_model(cfg, tok, 3);
    CHECK(grad_check(abl, tokens, {1, 1, 1}) < 1e-4);
  }
  SUBCASE("deterministic") {
    const double a = grad_check(ckpt, tokens, {1, 1, 1});
    const double b = grad_check(ckpt, tokens, {1, 1, 1});
    CHECK(a == b);
  }
}

TEST_CASE("zeroed loss weights freeze the unused heads") {
  const TokenizerConfig tok = tiny_tokenizer();
  const Checkpoint init = init_model(tiny_config(), tok, 5);
  TrainConfig tc;
  tc.epochs = 1;
  tc.ckpt_every = 1;
  tc.batch_size = 8;
  tc.seed = 2;
  tc.threads = 1;
  tc.weights = {1.0, 0.0, 0.0};  // event head only
  const TraceDataset data = small_training_set(32, 4);
  const TrainResult result = train(init, data, tc);
  REQUIRE(result.checkpoints.size() == 1);
  const Checkpoint& after = result.checkpoints[0];

  auto unchanged = [&](std::string_view name) {
    const auto a = init.tensor(name);
    const auto b = after.tensor(name);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) return false;
    return true;
  };
  CHECK(unchanged("head.arrival.w"));
  CHECK(unchanged("head.stop.w"));
  CHECK_FALSE(unchanged("head.event.w"));
  CHECK_FALSE(unchanged("block0.attn.wq"));  // shared trunk still learns
}

TEST_CASE("train: loss decreases, checkpoint cadence, determinism") {
  const TokenizerConfig tok = tiny_tokenizer();
  const Checkpoint init = init_model(tiny_config(), tok, 9);
  const TraceDataset data = small_training_set(200, 31);

  TrainConfig tc;
  tc.epochs = 20;
  tc.ckpt_every = 5;
  tc.batch_size = 16;
  tc.seed = 7;
  tc.threads = 2;

  const TrainResult run = train(init, data, tc);
  REQUIRE(run.checkpoints.size() == 4);  // K/N = 20/5
  CHECK(run.checkpoints[0].epoch == 5);
  CHECK(run.checkpoints[3].epoch == 20);
  REQUIRE(run.history.size() == 20);
  CHECK(run.history.back().total < run.history.front().total);
  CHECK(run.checkpoints.back().initial_events.probability.size() == 6);

  SUBCASE("identical seeds give identical weights") {
    const TrainResult again = train(init, data, tc);
    CHECK(again.checkpoints.back().params == run.checkpoints.back().params);
  }
  SUBCASE("results are independent of the thread count") {
    TrainConfig serial = tc;
    serial.threads = 1;
    const TrainResult one = train(init, data, serial);
    CHECK(one.checkpoints.back().params == run.checkpoints.back().params);
    CHECK(one.history.back().total == run.history.back().total);
  }
  SUBCASE("a different seed changes the outcome") {
    TrainConfig other = tc;
    other.seed = 8;
    const TrainResult alt = train(init, data, other);
    CHECK(alt.checkpoints.back().params != run.checkpoints.back().params);
  }
}

TEST_CASE("train drops short and over-long streams") {
  const TokenizerConfig tok = tiny_tokenizer();
  const Checkpoint init = init_model(tiny_config(), tok, 9);
  TraceDataset data = small_training_set(40, 13);
  data.streams.push_back(cpt::test::make_stream("one", tok.generation, {{0, "SRV_REQ"}}));
  Stream long_s;
  long_s.ue_id = "long";
  for (int i = 0; i < 30; ++i)
    long_s.events.push_back(Event{double(i), EventKind::ServiceRequest});
  data.streams.push_back(long_s);

  TrainConfig tc;
  tc.epochs = 1;
  tc.ckpt_every = 1;
  tc.batch_size = 8;
  const TrainResult run = train(init, data, tc);
  CHECK(run.streams_dropped_short >= 1);
  CHECK(run.streams_dropped_long == 1);
  CHECK(run.streams_used <= 40);
}

TEST_CASE("epoch-averaged loss decreases over the first five epochs") {
  // Smoke property, averaged over three seeds.
  const TokenizerConfig tok = tiny_tokenizer();
  const TraceDataset data = small_training_set(150, 55);
  std::vector<double> avg(5, 0.0);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const Checkpoint init = init_model(tiny_config(), tok, seed);
    TrainConfig tc;
    tc.epochs = 5;
    tc.ckpt_every = 5;
    tc.batch_size = 16;
    tc.seed = seed;
    const TrainResult run = train(init, data, tc);
    for (std::size_t e = 0; e < 5; ++e) avg[e] += run.history[e].total / 3.0;
  }
  for (std::size_t e = 1; e < 5; ++e) CHECK(avg[e] < avg[e - 1]);
}

TEST_CASE("finetune resumes from weights with a fresh optimizer") {
  const TokenizerConfig tok = tiny_tokenizer();
  const Checkpoint init = init_model(tiny_config(), tok, 19);
  const TraceDataset data = small_training_set(120, 77);
  TrainConfig tc;
  tc.epochs = 6;
  tc.ckpt_every = 6;
  tc.batch_size = 16;
  tc.seed = 5;
  const TrainResult base = train(init, data, tc);
  const Checkpoint& trained = base.checkpoints.back();

  SUBCASE("zero epochs returns the checkpoint unchanged") {
    TrainConfig zero = tc;
    zero.epochs = 0;
    const TrainResult r = finetune(trained, data, zero);
    REQUIRE(r.checkpoints.size() == 1);
    CHECK(r.checkpoints[0].params == trained.params);
    CHECK(r.checkpoints[0].epoch == trained.epoch);
  }
  SUBCASE("loss starts near the trained loss, far below a fresh start") {
    TrainConfig one = tc;
    one.epochs = 1;
    one.ckpt_every = 1;
    const TrainResult warm = finetune(trained, data, one);
    const TrainResult cold = train(init_model(tiny_config(), tok, 99), data, one);
    CHECK(warm.history[0].total < cold.history[0].total);
    CHECK(warm.history[0].total <
          base.history[2].total);  // no worse than mid-training
    CHECK(warm.checkpoints[0].adam_step > 0);
  }
  SUBCASE("generation mismatch errors") {
    TraceDataset wrong;
    wrong.generation = Generation::G5;
    wrong.streams.push_back(cpt::test::make_stream(
        "w", Generation::G5, {{0, "SRV_REQ"}, {1, "AN_REL"}}));
    CHECK_THROWS_AS(finetune(trained, wrong, tc), Error);
  }
}

TEST_CASE("checkpoint save/load round trip is bit-exact") {
  TempDir dir("ckpt_rt");
  const TokenizerConfig tok = tiny_tokenizer();
  const Checkpoint init = init_model(tiny_config(), tok, 23);
  const TraceDataset data = small_training_set(60, 3);
  TrainConfig tc;
  tc.epochs = 2;
  tc.ckpt_every = 2;
  tc.batch_size = 8;
  const TrainResult run = train(init, data, tc);
  const Checkpoint& ckpt = run.checkpoints.back();

  const auto file = dir.path() / "m.bin";
  save_checkpoint(ckpt, file);
  const Checkpoint back = load_checkpoint(file);
  CHECK(back.params == ckpt.params);
  CHECK(back.adam_m == ckpt.adam_m);
  CHECK(back.adam_v == ckpt.adam_v);
  CHECK(back.epoch == ckpt.epoch);
  CHECK(back.adam_step == ckpt.adam_step);
  CHECK(back.model == ckpt.model);
  CHECK(back.tokenizer == ckpt.tokenizer);
  CHECK(back.initial_events.probability == ckpt.initial_events.probability);

  const auto tokens = random_tokens(6, tok, 2);
  const HeadOutputs a = forward(ckpt, tokens);
  const HeadOutputs b = forward(back, tokens);
  CHECK(a.event_logits == b.event_logits);
  CHECK(a.arrival_mean == b.arrival_mean);
  CHECK(a.stop_logits == b.stop_logits);

  SUBCASE("garbage files are rejected") {
    const auto bad = dir.path() / "bad.bin";
    std::ofstream(bad) << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(bad), Error);
  }
}

TEST_CASE("incremental decoder matches the full forward pass") {
  const TokenizerConfig tok = tiny_tokenizer();
  const Checkpoint ckpt = init_model(tiny_config(), tok, 29);
  const auto tokens = random_tokens(10, tok, 41);
  const HeadOutputs full = forward(ckpt, tokens);

  StreamDecoder dec(ckpt);
  for (std::size_t l = 0; l < tokens.size(); ++l) {
    const auto step = dec.step(tokens[l]);
    for (std::size_t v = 0; v < 6; ++v)
      CHECK(step.event_logits[v] ==
            doctest::Approx(full.event_logits[l * 6 + v]).epsilon(1e-5));
    CHECK(step.arrival_mean == doctest::Approx(full.arrival_mean[l]).epsilon(1e-5));
    CHECK(step.arrival_sigma ==
          doctest::Approx(full.arrival_sigma[l]).epsilon(1e-5));
    CHECK(step.stop_logits[1] ==
          doctest::Approx(full.stop_logits[l * 2 + 1]).epsilon(1e-5));
  }
  CHECK(dec.length() == 10);
  dec.reset();
  CHECK(dec.length() == 0);
}

TEST_CASE("evaluate_loss equals the public per-stream loss") {
  const TokenizerConfig tok = tiny_tokenizer();
  const Checkpoint ckpt = init_model(tiny_config(), tok, 37);
  const TraceDataset data = small_training_set(30, 9);

  const LossBreakdown agg = evaluate_loss(ckpt, data, 2);

  double ev = 0, arr = 0, st = 0;
  std::size_t ev_n = 0, st_n = 0;
  for (const Stream& s : data.streams) {
    if (s.events.size() < 2 || s.events.size() > ckpt.model.max_context) continue;
    const auto toks = encode_stream(s, tok, true);
    const TargetSequence tgt = targets_for(toks, tok);
    const LossBreakdown parts = loss_parts(forward(ckpt, toks), tgt);
    const std::size_t m = toks.size() - 1;
    ev += parts.event * double(m);
    arr += parts.arrival * double(m);
    st += parts.stop * double(toks.size());
    ev_n += m;
    st_n += toks.size();
  }
  CHECK(agg.event == doctest::Approx(ev / double(ev_n)).epsilon(1e-6));
  CHECK(agg.arrival == doctest::Approx(arr / double(ev_n)).epsilon(1e-6));
  CHECK(agg.stop == doctest::Approx(st / double(st_n)).epsilon(1e-6));
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  const TokenizerConfig tok = tiny_tokenizer();
  Checkpoint init = init_model(tiny_config(), tok, 3);
  for (float& v : init.params) v = 1e30f;  // guaranteed overflow
  TrainConfig tc;
  tc.epochs = 1;
  tc.ckpt_every = 1;
  CHECK_THROWS_WITH_AS(train(init, small_training_set(20, 1), tc),
                       doctest::Contains("epoch 1"), Error);
}
