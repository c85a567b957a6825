#include "cpt/fidelity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace cpt {

double max_y_distance(const std::vector<double>& samples_a,
                      const std::vector<double>& samples_b) {
  if (samples_a.empty() || samples_b.empty())
    throw Error("max_y_distance needs non-empty samples on both sides");
  std::vector<double> a = samples_a, b = samples_b;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = double(a.size()), nb = double(b.size());
  std::size_t ia = 0, ib = 0;
  double d = 0.0;
  while (ia < a.size() || ib < b.size()) {
    double x;
    if (ib >= b.size() || (ia < a.size() && a[ia] <= b[ib]))
      x = a[ia];
    else
      x = b[ib];
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    d = std::max(d, std::abs(double(ia) / na - double(ib) / nb));
  }
  return d;
}

namespace {

struct PerUEAverages {
  std::vector<double> connected;
  std::vector<double> idle;
};

PerUEAverages per_ue_average_sojourns(const TraceDataset& ds,
                                      const StateMachineDef& def) {
  PerUEAverages out;
  for (const Stream& s : ds.streams) {
    const ReplayResult r = replay(s, def);
    if (!r.connected_sojourns.empty()) {
      double sum = 0;
      for (double v : r.connected_sojourns) sum += v;
      out.connected.push_back(sum / double(r.connected_sojourns.size()));
    }
    if (!r.idle_sojourns.empty()) {
      double sum = 0;
      for (double v : r.idle_sojourns) sum += v;
      out.idle.push_back(sum / double(r.idle_sojourns.size()));
    }
  }
  return out;
}

}  // namespace

SojournDistances sojourn_distance(const TraceDataset& real,
                                  const TraceDataset& synth,
                                  const StateMachineDef& def) {
  if (real.streams.empty() || synth.streams.empty())
    throw Error("sojourn_distance needs non-empty datasets");
  const PerUEAverages r = per_ue_average_sojourns(real, def);
  const PerUEAverages s = per_ue_average_sojourns(synth, def);
  SojournDistances out;
  if (!r.connected.empty() && !s.connected.empty())
    out.connected = max_y_distance(r.connected, s.connected);
  if (!r.idle.empty() && !s.idle.empty())
    out.idle = max_y_distance(r.idle, s.idle);
  return out;
}

FlowLengthDistances flow_length_distance(const TraceDataset& real,
                                         const TraceDataset& synth) {
  if (real.streams.empty() || synth.streams.empty())
    throw Error("flow_length_distance needs non-empty datasets");
  auto counts = [](const TraceDataset& ds, std::optional<EventKind> kind) {
    std::vector<double> out;
    out.reserve(ds.streams.size());
    for (const Stream& s : ds.streams) {
      if (!kind) {
        out.push_back(double(s.events.size()));
        continue;
      }
      std::size_t c = 0;
      for (const Event& e : s.events)
        if (e.type == *kind) ++c;
      out.push_back(double(c));
    }
    return out;
  };
  FlowLengthDistances out;
  out.all = max_y_distance(counts(real, std::nullopt), counts(synth, std::nullopt));
  out.service_request = max_y_distance(counts(real, EventKind::ServiceRequest),
                                       counts(synth, EventKind::ServiceRequest));
  out.release = max_y_distance(counts(real, EventKind::Release),
                               counts(synth, EventKind::Release));
  return out;
}

std::vector<double> breakdown_diff(const TraceDataset& real,
                                   const TraceDataset& synth) {
  if (real.streams.empty() || synth.streams.empty())
    throw Error("breakdown_diff needs non-empty datasets");
  if (real.generation != synth.generation)
    throw Error("breakdown_diff needs matching generations");
  auto shares = [](const TraceDataset& ds) {
    std::vector<double> out(vocab_size(ds.generation), 0.0);
    double total = 0;
    for (const Stream& s : ds.streams) {
      for (const Event& e : s.events) out[std::size_t(e.type)] += 1.0;
      total += double(s.events.size());
    }
    for (double& v : out) v /= total;
    return out;
  };
  const std::vector<double> r = shares(real), s = shares(synth);
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = s[i] - r[i];
  return out;
}

namespace {

// Event-type window key for the n-gram index.
std::string type_key(const Stream& s, std::size_t start, std::size_t n) {
  std::string key(n, '\0');
  for (std::size_t i = 0; i < n; ++i)
    key[i] = char('A' + int(s.events[start + i].type));
  return key;
}

bool gaps_match(const std::vector<double>& real_gaps, std::size_t real_at,
                const std::vector<double>& synth_gaps, std::size_t synth_at,
                std::size_t n, double eps) {
  for (std::size_t i = 0; i < n; ++i) {
    const double tr = real_gaps[real_at + i];
    const double tg = synth_gaps[synth_at + i];
    if (tr == 0.0) {
      if (tg != 0.0) return false;
      continue;
    }
    const double ratio = tg / tr;
    if (!(ratio > 1.0 - eps && ratio < 1.0 + eps)) return false;
  }
  return true;
}

}  // namespace

double memorization(const TraceDataset& real, const TraceDataset& synth,
                    std::size_t n, double epsilon) {
  if (n < 1) throw Error("n-gram length must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw Error("memorization tolerance must lie in (0, 1)");

  // Index of real n-grams: type sequence -> (stream, start) occurrences.
  std::unordered_map<std::string, std::vector<std::pair<std::size_t, std::size_t>>>
      index;
  std::vector<std::vector<double>> real_gaps(real.streams.size());
  for (std::size_t si = 0; si < real.streams.size(); ++si) {
    const Stream& s = real.streams[si];
    if (s.events.size() < n) continue;
    real_gaps[si] = interarrivals(s);
    for (std::size_t start = 0; start + n <= s.events.size(); ++start)
      index[type_key(s, start, n)].emplace_back(si, start);
  }

  std::uint64_t total = 0, repeated = 0;
  for (const Stream& s : synth.streams) {
    if (s.events.size() < n) continue;
    const std::vector<double> gaps = interarrivals(s);
    for (std::size_t start = 0; start + n <= s.events.size(); ++start) {
      ++total;
      const auto it = index.find(type_key(s, start, n));
      if (it == index.end()) continue;
      for (const auto& [ri, rstart] : it->second) {
        if (gaps_match(real_gaps[ri], rstart, gaps, start, n, epsilon)) {
          ++repeated;
          break;
        }
      }
    }
  }
  if (total == 0)
    throw Error("synthesized dataset yields no n-grams of length " +
                std::to_string(n));
  return double(repeated) / double(total);
}

FidelityReport full_report(const TraceDataset& real, const TraceDataset& synth,
                           const StateMachineDef& def,
                           const std::vector<MemorizationParams>& memo) {
  if (real.generation != synth.generation ||
      real.generation != def.generation())
    throw Error("full_report needs matching generations");
  FidelityReport rep;
  rep.generation = synth.generation;
  const DatasetValidation v = validate_dataset(synth, def);
  rep.event_violation_rate = v.event_violation_rate;
  rep.stream_violation_rate = v.stream_violation_rate;
  const SojournDistances sj = sojourn_distance(real, synth, def);
  rep.sojourn_connected = sj.connected;
  rep.sojourn_idle = sj.idle;
  rep.flow_length = flow_length_distance(real, synth);
  rep.breakdown = breakdown_diff(real, synth);
  for (const MemorizationParams& mp : memo) {
    MemorizationEntry e;
    e.n = mp.n;
    e.epsilon = mp.epsilon;
    try {
      e.repeated_fraction = memorization(real, synth, mp.n, mp.epsilon);
    } catch (const Error& err) {
      throw Error("memorization (n=" + std::to_string(mp.n) +
                  "): " + err.what());
    }
    rep.memorization.push_back(e);
  }
  return rep;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

}  // namespace

std::string report_to_json(const FidelityReport& rep) {
  nlohmann::json j;
  j["generation"] = std::string(generation_name(rep.generation));
  j["event_violation_rate"] = rep.event_violation_rate;
  j["stream_violation_rate"] = rep.stream_violation_rate;
  j["sojourn_max_y"] = {{"CONNECTED", optional_json(rep.sojourn_connected)},
                        {"IDLE", optional_json(rep.sojourn_idle)}};
  const std::string release_name(
      event_name(rep.generation, EventKind::Release));
  j["flow_length_max_y"] = {
      {"all", rep.flow_length.all},
      {"SRV_REQ", rep.flow_length.service_request},
      {release_name, rep.flow_length.release}};
  nlohmann::json bd = nlohmann::json::object();
  for (std::size_t i = 0; i < rep.breakdown.size(); ++i)
    bd[std::string(event_name(rep.generation, EventKind(i)))] = rep.breakdown[i];
  j["event_breakdown_diff"] = std::move(bd);
  nlohmann::json memo = nlohmann::json::array();
  for (const MemorizationEntry& e : rep.memorization)
    memo.push_back({{"n", e.n},
                    {"epsilon", e.epsilon},
                    {"repeated_fraction", e.repeated_fraction}});
  j["memorization"] = std::move(memo);
  return j.dump(2) + "\n";
}

FidelityReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("report parse error: ") + e.what());
  }
  try {
    FidelityReport rep;
    rep.generation = parse_generation(j.at("generation").get<std::string>());
    rep.event_violation_rate = j.at("event_violation_rate").get<double>();
    rep.stream_violation_rate = j.at("stream_violation_rate").get<double>();
    const auto& sj = j.at("sojourn_max_y");
    if (!sj.at("CONNECTED").is_null())
      rep.sojourn_connected = sj.at("CONNECTED").get<double>();
    if (!sj.at("IDLE").is_null()) rep.sojourn_idle = sj.at("IDLE").get<double>();
    const auto& fl = j.at("flow_length_max_y");
    rep.flow_length.all = fl.at("all").get<double>();
    rep.flow_length.service_request = fl.at("SRV_REQ").get<double>();
    rep.flow_length.release =
        fl.at(std::string(event_name(rep.generation, EventKind::Release)))
            .get<double>();
    rep.breakdown.assign(vocab_size(rep.generation), 0.0);
    for (const auto& [name, v] : j.at("event_breakdown_diff").items())
      rep.breakdown[std::size_t(parse_event(rep.generation, name))] =
          v.get<double>();
    for (const auto& e : j.at("memorization")) {
      MemorizationEntry me;
      me.n = e.at("n").get<std::size_t>();
      me.epsilon = e.at("epsilon").get<double>();
      me.repeated_fraction = e.at("repeated_fraction").get<double>();
      rep.memorization.push_back(me);
    }
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("report schema error: ") + e.what());
  }
}

std::string report_to_table(const FidelityReport& rep) {
  std::ostringstream os;
  auto pct = [](double v) {
    std::ostringstream o;
    o.precision(3);
    o << v * 100.0 << "%";
    return o.str();
  };
  os << "metric                         value\n";
  os << "event violations               " << pct(rep.event_violation_rate) << "\n";
  os << "stream violations              " << pct(rep.stream_violation_rate) << "\n";
  os << "sojourn max-y CONNECTED        "
     << (rep.sojourn_connected ? pct(*rep.sojourn_connected) : "n/a") << "\n";
  os << "sojourn max-y IDLE             "
     << (rep.sojourn_idle ? pct(*rep.sojourn_idle) : "n/a") << "\n";
  os << "flow length max-y (all)        " << pct(rep.flow_length.all) << "\n";
  os << "flow length max-y (SRV_REQ)    " << pct(rep.flow_length.service_request)
     << "\n";
  os << "flow length max-y ("
     << event_name(rep.generation, EventKind::Release)
     << ")" << std::string(rep.generation == Generation::G4 ? 1 : 6, ' ')
     << pct(rep.flow_length.release) << "\n";
  for (std::size_t i = 0; i < rep.breakdown.size(); ++i)
    os << "breakdown diff " << event_name(rep.generation, EventKind(i)) << ": "
       << pct(rep.breakdown[i]) << "\n";
  for (const MemorizationEntry& e : rep.memorization)
    os << "memorization n=" << e.n << " eps=" << e.epsilon << "        "
       << pct(e.repeated_fraction) << "\n";
  return os.str();
}

}  // namespace cpt
