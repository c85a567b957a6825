#include "cpt/smm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cpt/rng.hpp"
#include "json.hpp"

namespace cpt {

std::vector<const SmmEdge*> SemiMarkovModel::edges_from(std::size_t state) const {
  std::vector<const SmmEdge*> out;
  for (const SmmEdge& e : edges)
    if (e.from == state) out.push_back(&e);
  return out;
}

void SemiMarkovModel::validate(const StateMachineDef& def) const {
  if (generation != def.generation())
    throw Error("SMM generation does not match the state machine");
  if (initial_state.size() != def.state_count())
    throw Error("SMM initial-state vector has wrong length");
  double init_sum = 0.0;
  for (double p : initial_state) {
    if (p < 0.0) throw Error("negative initial-state probability");
    init_sum += p;
  }
  if (std::abs(init_sum - 1.0) > 1e-9)
    throw Error("initial-state probabilities sum to " + std::to_string(init_sum));
  if (mean_flow_length < 1.0)
    throw Error("mean flow length must be >= 1");

  std::vector<double> per_state(def.state_count(), 0.0);
  for (const SmmEdge& e : edges) {
    if (e.from >= def.state_count() || e.to >= def.state_count())
      throw Error("SMM edge references an unknown state");
    const auto dst = def.next_index(e.from, e.event);
    if (!dst || *dst != e.to)
      throw Error("SMM edge " + state_name(def.state_at(e.from)) + " --" +
                  std::string(event_name(generation, e.event)) +
                  "--> " + state_name(def.state_at(e.to)) +
                  " is not a legal transition");
    if (e.probability < 0.0) throw Error("negative edge probability");
    per_state[e.from] += e.probability;
    for (double s : e.sojourn)
      if (!(s >= 0.0) || !std::isfinite(s))
        throw Error("sojourn samples must be finite and non-negative");
    if (!std::is_sorted(e.sojourn.begin(), e.sojourn.end()))
      throw Error("sojourn samples must be sorted");
  }
  for (std::size_t s = 0; s < per_state.size(); ++s) {
    if (per_state[s] == 0.0) continue;  // unreachable state is fine
    if (std::abs(per_state[s] - 1.0) > 1e-9)
      throw Error("outgoing probabilities of " + state_name(def.state_at(s)) +
                  " sum to " + std::to_string(per_state[s]));
  }
}

SemiMarkovModel fit_smm(const TraceDataset& dataset, const StateMachineDef& def) {
  if (dataset.streams.empty()) throw Error("cannot fit an SMM on an empty dataset");
  if (dataset.generation != def.generation())
    throw Error("dataset generation does not match the state machine");

  const std::size_t n_states = def.state_count();
  // counts[state][edge slot in def.edges_from(state)]
  std::vector<std::vector<std::uint64_t>> counts(n_states);
  std::vector<std::vector<std::vector<double>>> sojourns(n_states);
  std::vector<std::vector<std::pair<EventKind, std::size_t>>> legal(n_states);
  for (std::size_t s = 0; s < n_states; ++s) {
    legal[s] = def.edges_from(s);
    counts[s].assign(legal[s].size(), 0);
    sojourns[s].resize(legal[s].size());
  }
  auto slot_of = [&](std::size_t state, EventKind ev) -> std::size_t {
    for (std::size_t k = 0; k < legal[state].size(); ++k)
      if (legal[state][k].first == ev) return k;
    throw Error("internal: transition missing from legal edge set");
  };

  std::vector<double> initial(n_states, 0.0);
  double total_len = 0.0;
  std::size_t bootstrapped = 0;

  for (const Stream& stream : dataset.streams) {
    total_len += static_cast<double>(stream.events.size());
    const auto boot = bootstrap_state(stream, def);
    if (!boot) continue;
    ++bootstrapped;
    std::size_t state = def.state_index(boot->state);
    initial[state] += 1.0;
    for (std::size_t i = boot->index + 1; i < stream.events.size(); ++i) {
      const Event& ev = stream.events[i];
      const auto dst = def.next_index(state, ev.type);
      if (!dst) continue;  // violating events are skipped, not counted
      const std::size_t slot = slot_of(state, ev.type);
      counts[state][slot]++;
      sojourns[state][slot].push_back(ev.timestamp - stream.events[i - 1].timestamp);
      state = *dst;
    }
  }
  if (bootstrapped == 0)
    throw Error("no stream in the dataset reaches a bootstrap event");

  SemiMarkovModel model;
  model.generation = dataset.generation;
  model.mean_flow_length =
      std::max(1.0, total_len / static_cast<double>(dataset.streams.size()));
  model.initial_state.assign(n_states, 0.0);
  for (std::size_t s = 0; s < n_states; ++s)
    model.initial_state[s] = initial[s] / static_cast<double>(bootstrapped);

  for (std::size_t s = 0; s < n_states; ++s) {
    std::uint64_t total = 0;
    for (std::uint64_t c : counts[s]) total += c;
    if (total == 0) model.uniform_fallback_states.push_back(s);
    for (std::size_t k = 0; k < legal[s].size(); ++k) {
      SmmEdge e;
      e.from = s;
      e.event = legal[s][k].first;
      e.to = legal[s][k].second;
      e.probability = total == 0
                          ? 1.0 / static_cast<double>(legal[s].size())
                          : static_cast<double>(counts[s][k]) / static_cast<double>(total);
      e.sojourn = std::move(sojourns[s][k]);
      std::sort(e.sojourn.begin(), e.sojourn.end());
      model.edges.push_back(std::move(e));
    }
  }
  return model;
}

double sample_ecdf(const std::vector<double>& sorted_samples, double u) {
  if (sorted_samples.empty()) return 0.0;
  const auto m = static_cast<double>(sorted_samples.size());
  auto idx = static_cast<std::size_t>(u * m);
  if (idx >= sorted_samples.size()) idx = sorted_samples.size() - 1;
  return sorted_samples[idx];
}

TraceDataset generate_smm(const SemiMarkovModel& model, const StateMachineDef& def,
                          std::size_t n_streams, std::size_t max_len,
                          std::uint64_t seed, DeviceType device_type) {
  if (max_len < 1) throw Error("max_len must be >= 1");
  model.validate(def);

  // Pre-group edges per state for the walk.
  std::vector<std::vector<const SmmEdge*>> by_state(def.state_count());
  std::vector<std::vector<double>> probs(def.state_count());
  std::vector<double> mass(def.state_count(), 0.0);
  for (const SmmEdge& e : model.edges) {
    by_state[e.from].push_back(&e);
    probs[e.from].push_back(e.probability);
    mass[e.from] += e.probability;
  }
  const double stop_p = 1.0 / model.mean_flow_length;

  TraceDataset out;
  out.generation = model.generation;
  out.streams.resize(n_streams);
  for (std::size_t i = 0; i < n_streams; ++i) {
    Rng rng(derive_seed(seed, i));
    Stream s;
    s.device_type = device_type;
    s.ue_id = rng.hex_id();
    std::size_t state = rng.categorical(model.initial_state);
    double now = 0.0;
    for (std::size_t step = 0; step < max_len; ++step) {
      if (by_state[state].empty() || mass[state] <= 0.0)
        throw Error("SMM walk reached state '" + state_name(def.state_at(state)) +
                    "' with no outgoing probability mass");
      const std::size_t pick = rng.categorical(probs[state]);
      const SmmEdge* edge = by_state[state][pick];
      if (step > 0) now += sample_ecdf(edge->sojourn, rng.uniform());
      s.events.push_back(Event{now, edge->event});
      state = edge->to;
      if (step + 1 >= max_len) break;
      if (rng.uniform() < stop_p) break;
    }
    out.streams[i] = std::move(s);
  }
  return out;
}

namespace {

nlohmann::json smm_json(const SemiMarkovModel& model) {
  const StateMachineDef def = build_state_machine(model.generation);
  nlohmann::json j;
  j["format"] = "cpt-smm-v1";
  j["generation"] = std::string(generation_name(model.generation));
  j["mean_flow_length"] = model.mean_flow_length;
  nlohmann::json init = nlohmann::json::object();
  for (std::size_t s = 0; s < model.initial_state.size(); ++s)
    if (model.initial_state[s] > 0.0)
      init[state_name(def.state_at(s))] = model.initial_state[s];
  j["initial_state"] = std::move(init);
  nlohmann::json edges = nlohmann::json::array();
  for (const SmmEdge& e : model.edges) {
    nlohmann::json je;
    je["from"] = state_name(def.state_at(e.from));
    je["event"] = std::string(event_name(model.generation, e.event));
    je["prob"] = e.probability;
    je["sojourn"] = e.sojourn;
    edges.push_back(std::move(je));
  }
  j["edges"] = std::move(edges);
  if (!model.uniform_fallback_states.empty()) {
    nlohmann::json fb = nlohmann::json::array();
    for (std::size_t s : model.uniform_fallback_states)
      fb.push_back(state_name(def.state_at(s)));
    j["uniform_fallback_states"] = std::move(fb);
  }
  return j;
}

UEState parse_state_name(const StateMachineDef& def, const std::string& name) {
  for (const UEState& s : def.states())
    if (state_name(s) == name) return s;
  throw Error("unknown state '" + name + "' for " +
              std::string(generation_name(def.generation())));
}

}  // namespace

std::string smm_to_json(const SemiMarkovModel& model) {
  return smm_json(model).dump(2) + "\n";
}

SemiMarkovModel smm_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("SMM JSON parse error: ") + e.what());
  }
  try {
    if (j.value("format", "") != "cpt-smm-v1")
      throw Error("missing or unsupported SMM format tag (expected cpt-smm-v1)");
    SemiMarkovModel model;
    model.generation = parse_generation(j.at("generation").get<std::string>());
    const StateMachineDef def = build_state_machine(model.generation);
    model.mean_flow_length = j.at("mean_flow_length").get<double>();
    model.initial_state.assign(def.state_count(), 0.0);
    for (const auto& [name, p] : j.at("initial_state").items())
      model.initial_state[def.state_index(parse_state_name(def, name))] =
          p.get<double>();
    for (const auto& je : j.at("edges")) {
      SmmEdge e;
      e.from = def.state_index(parse_state_name(def, je.at("from").get<std::string>()));
      e.event = parse_event(model.generation, je.at("event").get<std::string>());
      const auto dst = def.next_index(e.from, e.event);
      if (!dst)
        throw Error("edge " + je.at("from").get<std::string>() + " --" +
                    je.at("event").get<std::string>() + "--> is not a legal transition");
      e.to = *dst;
      e.probability = je.at("prob").get<double>();
      e.sojourn = je.at("sojourn").get<std::vector<double>>();
      std::sort(e.sojourn.begin(), e.sojourn.end());
      model.edges.push_back(std::move(e));
    }
    model.validate(def);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("SMM JSON schema error: ") + e.what());
  }
}

void save_smm(const SemiMarkovModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write SMM file '" + path.string() + "'");
  out << smm_to_json(model);
  if (!out) throw Error("I/O failure while writing '" + path.string() + "'");
}

SemiMarkovModel load_smm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open SMM file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return smm_from_json(ss.str());
}

std::string smm_report(const SemiMarkovModel& model, const StateMachineDef& def) {
  std::ostringstream os;
  os << "semi-Markov model (" << generation_name(model.generation) << ")\n"
     << "mean flow length: " << model.mean_flow_length << "\n"
     << "initial states:\n";
  for (std::size_t s = 0; s < model.initial_state.size(); ++s)
    if (model.initial_state[s] > 0.0)
      os << "  " << state_name(def.state_at(s)) << ": " << model.initial_state[s] << "\n";
  os << "edges:\n";
  for (const SmmEdge& e : model.edges) {
    os << "  " << state_name(def.state_at(e.from)) << " --"
       << event_name(model.generation, e.event) << "--> "
       << state_name(def.state_at(e.to)) << "  p=" << e.probability
       << "  sojourn n=" << e.sojourn.size();
    if (!e.sojourn.empty())
      os << " min=" << e.sojourn.front() << " max=" << e.sojourn.back();
    os << "\n";
  }
  for (std::size_t s : model.uniform_fallback_states)
    os << "note: " << state_name(def.state_at(s))
       << " had no observed transitions; uniform fallback\n";
  return os.str();
}

}  // namespace cpt
