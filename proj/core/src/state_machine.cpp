#include "cpt/state_machine.hpp"

#include <algorithm>
#include <sstream>

namespace cpt {

namespace {

std::string_view sub_name(SubState s) {
  switch (s) {
    case SubState::None: return "";
    case SubState::SrvReqS: return "SRV_REQ_S";
    case SubState::HoS: return "HO_S";
    case SubState::TauSConn: return "TAU_S_CONN";
    case SubState::S1RelS1: return "S1_REL_S_1";
    case SubState::S1RelS2: return "S1_REL_S_2";
    case SubState::TauSIdle: return "TAU_S_IDLE";
    case SubState::AnRelS: return "AN_REL_S";
  }
  return "";
}

std::string_view top_name(TopState t) {
  switch (t) {
    case TopState::Deregistered: return "DEREGISTERED";
    case TopState::Connected: return "CONNECTED";
    case TopState::Idle: return "IDLE";
  }
  return "";
}

}  // namespace

std::string state_name(const UEState& s) {
  if (s.top == TopState::Deregistered) return std::string(top_name(s.top));
  return std::string(top_name(s.top)) + "/" + std::string(sub_name(s.sub));
}

std::size_t StateMachineDef::state_index(const UEState& s) const {
  for (std::size_t i = 0; i < states_.size(); ++i)
    if (states_[i] == s) return i;
  throw Error("state '" + state_name(s) + "' does not belong to the " +
              std::string(generation_name(gen_)) + " state machine");
}

std::optional<std::size_t> StateMachineDef::next_index(std::size_t from,
                                                       EventKind ev) const {
  const std::size_t v = vocab_size(gen_);
  const auto e = static_cast<std::size_t>(ev);
  if (e >= v) return std::nullopt;
  const std::int8_t dst = table_[from * v + e];
  if (dst < 0) return std::nullopt;
  return static_cast<std::size_t>(dst);
}

std::optional<UEState> StateMachineDef::next(const UEState& from, EventKind ev) const {
  const auto dst = next_index(state_index(from), ev);
  if (!dst) return std::nullopt;
  return states_[*dst];
}

std::vector<std::pair<EventKind, std::size_t>> StateMachineDef::edges_from(
    std::size_t from) const {
  std::vector<std::pair<EventKind, std::size_t>> out;
  const std::size_t v = vocab_size(gen_);
  for (std::size_t e = 0; e < v; ++e) {
    const std::int8_t dst = table_[from * v + e];
    if (dst >= 0) out.emplace_back(static_cast<EventKind>(e), static_cast<std::size_t>(dst));
  }
  return out;
}

std::string StateMachineDef::table_report() const {
  std::ostringstream os;
  os << generation_name(gen_) << " UE state machine\n";
  const std::size_t v = vocab_size(gen_);
  for (std::size_t s = 0; s < states_.size(); ++s) {
    for (std::size_t e = 0; e < v; ++e) {
      const std::int8_t dst = table_[s * v + e];
      os << state_name(states_[s]) << ", "
         << event_name(gen_, static_cast<EventKind>(e)) << " -> "
         << (dst < 0 ? std::string("VIOLATION") : state_name(states_[dst])) << "\n";
    }
  }
  return os.str();
}

StateMachineDef build_state_machine(Generation gen) {
  StateMachineDef def;
  def.gen_ = gen;

  const UEState dereg{TopState::Deregistered, SubState::None};
  const UEState c_srv{TopState::Connected, SubState::SrvReqS};
  const UEState c_ho{TopState::Connected, SubState::HoS};

  if (gen == Generation::G4) {
    const UEState c_tau{TopState::Connected, SubState::TauSConn};
    const UEState i_rel1{TopState::Idle, SubState::S1RelS1};
    const UEState i_rel2{TopState::Idle, SubState::S1RelS2};
    const UEState i_tau{TopState::Idle, SubState::TauSIdle};
    def.states_ = {dereg, c_srv, c_ho, c_tau, i_rel1, i_rel2, i_tau};
  } else {
    const UEState i_rel{TopState::Idle, SubState::AnRelS};
    def.states_ = {dereg, c_srv, c_ho, i_rel};
  }

  const std::size_t v = vocab_size(gen);
  def.table_.assign(def.states_.size() * v, -1);
  auto idx = [&](const UEState& s) { return def.state_index(s); };
  auto add = [&](const UEState& from, EventKind ev, const UEState& to) {
    def.table_[idx(from) * v + static_cast<std::size_t>(ev)] =
        static_cast<std::int8_t>(idx(to));
  };

  add(dereg, EventKind::Attach, c_srv);
  for (const UEState& s : def.states_) {
    if (s.top == TopState::Deregistered) continue;
    add(s, EventKind::Detach, dereg);
    if (s.top == TopState::Connected) {
      // Connected sub-machine: Release drops to IDLE, HO (and TAU in 4G)
      // move between sub-states; a repeated ServiceRequest is illegal.
      add(s, EventKind::Handover, c_ho);
      if (gen == Generation::G4) {
        add(s, EventKind::Tau, {TopState::Connected, SubState::TauSConn});
        add(s, EventKind::Release, {TopState::Idle, SubState::S1RelS1});
      } else {
        add(s, EventKind::Release, {TopState::Idle, SubState::AnRelS});
      }
    } else {
      // Idle sub-machine: ServiceRequest reconnects; in 4G, TAU is legal
      // while idle and a Release is legal only right after a TAU.
      add(s, EventKind::ServiceRequest, c_srv);
      if (gen == Generation::G4) {
        add(s, EventKind::Tau, {TopState::Idle, SubState::TauSIdle});
        if (s.sub == SubState::TauSIdle)
          add(s, EventKind::Release, {TopState::Idle, SubState::S1RelS2});
      }
    }
  }
  return def;
}

std::optional<BootstrapResult> bootstrap_state(const Stream& stream,
                                               const StateMachineDef& def) {
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    switch (stream.events[i].type) {
      case EventKind::Attach:
      case EventKind::ServiceRequest:
        return BootstrapResult{{TopState::Connected, SubState::SrvReqS}, i};
      case EventKind::Detach:
        return BootstrapResult{{TopState::Deregistered, SubState::None}, i};
      case EventKind::Handover:
        return BootstrapResult{{TopState::Connected, SubState::HoS}, i};
      default:
        break;
    }
  }
  (void)def;
  return std::nullopt;
}

ReplayResult replay(const Stream& stream, const StateMachineDef& def) {
  ReplayResult res;
  const auto boot = bootstrap_state(stream, def);
  if (!boot) return res;
  res.bootstrap_index = boot->index;
  res.total_counted_events = stream.events.size() - boot->index - 1;

  std::size_t state = def.state_index(boot->state);
  TopState top = boot->state.top;
  double entered_at = stream.events[boot->index].timestamp;

  for (std::size_t i = boot->index + 1; i < stream.events.size(); ++i) {
    const Event& ev = stream.events[i];
    const auto dst = def.next_index(state, ev.type);
    if (!dst) {
      // Violation: count it and stay in place.
      res.violating_event_count++;
      res.per_pair_violations[{def.state_at(state), ev.type}]++;
      continue;
    }
    const TopState next_top = def.state_at(*dst).top;
    if (next_top != top) {
      if (top == TopState::Connected)
        res.connected_sojourns.push_back(ev.timestamp - entered_at);
      else if (top == TopState::Idle)
        res.idle_sojourns.push_back(ev.timestamp - entered_at);
      entered_at = ev.timestamp;
      top = next_top;
    }
    state = *dst;
  }
  // Intervals still open at stream end are discarded.
  return res;
}

std::string violation_report_label(const UEState& s) {
  if (s.top == TopState::Connected) return "CONNECTED";
  if (s.sub == SubState::S1RelS1 || s.sub == SubState::S1RelS2) return "S1_REL_S";
  return state_name(s);
}

DatasetValidation validate_dataset(const TraceDataset& dataset,
                                   const StateMachineDef& def) {
  if (dataset.streams.empty())
    throw Error("cannot validate an empty dataset");
  DatasetValidation out;
  for (const Stream& s : dataset.streams) {
    const ReplayResult r = replay(s, def);
    out.violating_events += r.violating_event_count;
    out.counted_events += r.total_counted_events;
    if (r.violating_event_count > 0) out.violating_streams++;
    for (const auto& [key, count] : r.per_pair_violations)
      out.per_pair_breakdown[{violation_report_label(key.first), key.second}] += count;
  }
  out.event_violation_rate =
      out.counted_events == 0
          ? 0.0
          : static_cast<double>(out.violating_events) / static_cast<double>(out.counted_events);
  out.stream_violation_rate =
      static_cast<double>(out.violating_streams) / static_cast<double>(dataset.streams.size());
  return out;
}

}  // namespace cpt
