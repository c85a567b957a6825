#include <cmath>
#include <set>

#include "cpt/rng.hpp"
#include "cpt/smm.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cpt;
using cpt::test::TempDir;
using cpt::test::make_stream;
using cpt::test::uniform_smm;

namespace {

const UEState kConnSrv{TopState::Connected, SubState::SrvReqS};
const UEState kIdleRel1{TopState::Idle, SubState::S1RelS1};

double edge_prob(const SemiMarkovModel& m, const StateMachineDef& def,
                 const UEState& from, EventKind ev) {
  for (const SmmEdge& e : m.edges)
    if (e.from == def.state_index(from) && e.event == ev) return e.probability;
  return -1.0;
}

}  // namespace

TEST_CASE("fit_smm: hand-counted transition probabilities") {
  const Generation g = Generation::G4;
  const StateMachineDef def = build_state_machine(g);
  TraceDataset ds;
  ds.generation = g;
  // Out of CONNECTED/SRV_REQ_S: S1_CONN_REL x2, HO x1.
  ds.streams.push_back(make_stream("u", g,
                                   {{0, "SRV_REQ"},
                                    {1, "S1_CONN_REL"},
                                    {2, "SRV_REQ"},
                                    {3, "S1_CONN_REL"},
                                    {4, "SRV_REQ"},
                                    {5, "HO"}}));
  const SemiMarkovModel m = fit_smm(ds, def);
  CHECK(edge_prob(m, def, kConnSrv, EventKind::Release) == doctest::Approx(2.0 / 3.0));
  CHECK(edge_prob(m, def, kConnSrv, EventKind::Handover) == doctest::Approx(1.0 / 3.0));
  CHECK(edge_prob(m, def, kConnSrv, EventKind::Detach) == 0.0);
  CHECK(edge_prob(m, def, kIdleRel1, EventKind::ServiceRequest) == 1.0);
  // Sojourn samples follow the interarrival preceding each departure.
  for (const SmmEdge& e : m.edges)
    if (e.from == def.state_index(kConnSrv) && e.event == EventKind::Release)
      CHECK(e.sojourn == std::vector<double>{1.0, 1.0});
}

TEST_CASE("fit_smm: degenerate single transition and uniform fallback") {
  const Generation g = Generation::G4;
  const StateMachineDef def = build_state_machine(g);
  TraceDataset ds;
  ds.generation = g;
  ds.streams.push_back(make_stream("u", g, {{0, "SRV_REQ"}, {2, "S1_CONN_REL"}}));
  const SemiMarkovModel m = fit_smm(ds, def);
  CHECK(edge_prob(m, def, kConnSrv, EventKind::Release) == 1.0);
  // States never left fall back to uniform and are flagged.
  CHECK(!m.uniform_fallback_states.empty());
  const auto idle = def.state_index(kIdleRel1);
  CHECK(std::find(m.uniform_fallback_states.begin(), m.uniform_fallback_states.end(),
                  idle) != m.uniform_fallback_states.end());
  CHECK(edge_prob(m, def, kIdleRel1, EventKind::ServiceRequest) ==
        doctest::Approx(1.0 / 3.0));
}

TEST_CASE("fit_smm skips violating events") {
  const Generation g = Generation::G4;
  const StateMachineDef def = build_state_machine(g);
  TraceDataset ds;
  ds.generation = g;
  // The second SRV_REQ violates; it must contribute no transition.
  ds.streams.push_back(make_stream(
      "u", g, {{0, "SRV_REQ"}, {1, "SRV_REQ"}, {2, "S1_CONN_REL"}}));
  const SemiMarkovModel m = fit_smm(ds, def);
  CHECK(edge_prob(m, def, kConnSrv, EventKind::Release) == 1.0);
}

TEST_CASE("sample_ecdf: hand ECDF steps and membership") {
  const std::vector<double> sorted{1.0, 1.0, 3.0};
  CHECK(sample_ecdf(sorted, 0.0) == 1.0);
  CHECK(sample_ecdf(sorted, 0.6) == 1.0);    // below 2/3
  CHECK(sample_ecdf(sorted, 0.67) == 3.0);   // above 2/3
  CHECK(sample_ecdf(sorted, 0.999) == 3.0);
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const double v = sample_ecdf(sorted, rng.uniform());
    CHECK((v == 1.0 || v == 3.0));
  }
}

TEST_CASE("generate_smm: degenerate cycle produces constant interarrivals") {
  const Generation g = Generation::G4;
  const StateMachineDef def = build_state_machine(g);
  SemiMarkovModel m;
  m.generation = g;
  m.mean_flow_length = 1e9;  // effectively never stop before max_len
  m.initial_state.assign(def.state_count(), 0.0);
  m.initial_state[def.state_index(kConnSrv)] = 1.0;
  SmmEdge out;
  out.from = def.state_index(kConnSrv);
  out.event = EventKind::Release;
  out.to = def.state_index(kIdleRel1);
  out.probability = 1.0;
  out.sojourn = {2.0};
  SmmEdge back;
  back.from = def.state_index(kIdleRel1);
  back.event = EventKind::ServiceRequest;
  back.to = def.state_index(kConnSrv);
  back.probability = 1.0;
  back.sojourn = {2.0};
  m.edges = {out, back};

  const TraceDataset ds = generate_smm(m, def, 1, 6, 123);
  REQUIRE(ds.streams.size() == 1);
  CHECK(interarrivals(ds.streams[0]) ==
        std::vector<double>{0, 2, 2, 2, 2, 2});
  CHECK(ds.streams[0].events[0].timestamp == 0.0);
}

TEST_CASE("generate_smm: determinism and stream count") {
  const StateMachineDef def = build_state_machine(Generation::G4);
  const SemiMarkovModel m = uniform_smm(Generation::G4);
  const TraceDataset a = generate_smm(m, def, 50, 100, 7);
  const TraceDataset b = generate_smm(m, def, 50, 100, 7);
  REQUIRE(a.streams.size() == 50);
  for (std::size_t i = 0; i < a.streams.size(); ++i) {
    CHECK(a.streams[i].ue_id == b.streams[i].ue_id);
    REQUIRE(a.streams[i].events.size() == b.streams[i].events.size());
    for (std::size_t k = 0; k < a.streams[i].events.size(); ++k) {
      CHECK(a.streams[i].events[k].timestamp == b.streams[i].events[k].timestamp);
      CHECK(a.streams[i].events[k].type == b.streams[i].events[k].type);
    }
  }
  const TraceDataset c = generate_smm(m, def, 50, 100, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < c.streams.size() && !any_diff; ++i)
    any_diff = c.streams[i].events.size() != a.streams[i].events.size();
  CHECK(any_diff);
}

TEST_CASE("generate_smm: walks never violate the state machine") {
  for (const Generation g : {Generation::G4, Generation::G5}) {
    const StateMachineDef def = build_state_machine(g);
    const SemiMarkovModel m = uniform_smm(g);
    const TraceDataset ds = generate_smm(m, def, 300, 200, 21);
    const DatasetValidation v = validate_dataset(ds, def);
    CHECK(v.violating_events == 0);
    CHECK(v.stream_violation_rate == 0.0);
  }
}

TEST_CASE("generate_smm: lengths respect the cap and the geometric stop") {
  const StateMachineDef def = build_state_machine(Generation::G4);
  SemiMarkovModel m = uniform_smm(Generation::G4, 10.0);
  const TraceDataset ds = generate_smm(m, def, 2000, 37, 11);
  double mean = 0;
  for (const Stream& s : ds.streams) {
    CHECK(s.events.size() >= 1);
    CHECK(s.events.size() <= 37);
    mean += double(s.events.size());
  }
  mean /= double(ds.streams.size());
  // Geometric with mean 10, truncated at 37.
  CHECK(mean > 7.5);
  CHECK(mean < 11.5);
}

TEST_CASE("refit on generated output recovers transition probabilities") {
  const Generation g = Generation::G4;
  const StateMachineDef def = build_state_machine(g);
  SemiMarkovModel truth = uniform_smm(g, 25.0);
  // Non-uniform probabilities to make recovery meaningful.
  for (SmmEdge& e : truth.edges) {
    const auto& legal = def.edges_from(e.from);
    if (legal.size() > 1) {
      double w = e.event == EventKind::Release || e.event == EventKind::ServiceRequest
                     ? 4.0
                     : 1.0;
      e.probability = w;
    }
  }
  for (std::size_t s = 0; s < def.state_count(); ++s) {
    double total = 0;
    for (SmmEdge& e : truth.edges)
      if (e.from == s) total += e.probability;
    for (SmmEdge& e : truth.edges)
      if (e.from == s) e.probability /= total;
  }
  truth.validate(def);

  const TraceDataset sample = generate_smm(truth, def, 12000, 400, 99);
  std::size_t transitions = 0;
  for (const Stream& s : sample.streams) transitions += s.events.size() - 1;
  REQUIRE(transitions >= 10000);

  const SemiMarkovModel fitted = fit_smm(sample, def);
  for (const SmmEdge& e : truth.edges) {
    const double got = edge_prob(fitted, def, def.state_at(e.from), e.event);
    CHECK(std::abs(got - e.probability) <= 0.02);
  }
}

TEST_CASE("smm json round trip and validation") {
  TempDir dir("smm_json");
  const StateMachineDef def = build_state_machine(Generation::G4);
  const SemiMarkovModel m = uniform_smm(Generation::G4);
  const auto file = dir.path() / "m.json";
  save_smm(m, file);
  const SemiMarkovModel back = load_smm(file);
  CHECK(back.generation == m.generation);
  CHECK(back.mean_flow_length == m.mean_flow_length);
  REQUIRE(back.edges.size() == m.edges.size());
  for (std::size_t i = 0; i < m.edges.size(); ++i) {
    CHECK(back.edges[i].from == m.edges[i].from);
    CHECK(back.edges[i].event == m.edges[i].event);
    CHECK(back.edges[i].probability == m.edges[i].probability);
    CHECK(back.edges[i].sojourn == m.edges[i].sojourn);
  }

  SUBCASE("illegal edges are rejected") {
    std::string text = smm_to_json(m);
    const auto at = text.find("\"event\": \"HO\"");
    REQUIRE(at != std::string::npos);
    // An HO edge out of an IDLE state does not exist; forge one.
    text.replace(text.find("\"from\": \"CONNECTED/SRV_REQ_S\""),
                 std::string("\"from\": \"CONNECTED/SRV_REQ_S\"").size(),
                 "\"from\": \"IDLE/S1_REL_S_1\"");
    CHECK_THROWS_AS(smm_from_json(text), Error);
  }

  SUBCASE("probabilities must sum to one per state") {
    SemiMarkovModel bad = m;
    bad.edges[0].probability += 0.5;
    CHECK_THROWS_AS(bad.validate(def), Error);
  }

  SUBCASE("negative sojourns are rejected") {
    SemiMarkovModel bad = m;
    bad.edges[0].sojourn.insert(bad.edges[0].sojourn.begin(), -1.0);
    CHECK_THROWS_AS(bad.validate(def), Error);
  }
}

TEST_CASE("fit_smm errors on empty input") {
  const StateMachineDef def = build_state_machine(Generation::G4);
  TraceDataset empty;
  CHECK_THROWS_AS(fit_smm(empty, def), Error);
}
