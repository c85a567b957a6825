#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpt/trace.hpp"

namespace cpt {

enum class TopState : std::uint8_t { Deregistered, Connected, Idle };

enum class SubState : std::uint8_t {
  None,      // DEREGISTERED only
  SrvReqS,   // CONNECTED (4G and 5G)
  HoS,       // CONNECTED (4G and 5G)
  TauSConn,  // CONNECTED (4G)
  S1RelS1,   // IDLE (4G)
  S1RelS2,   // IDLE (4G)
  TauSIdle,  // IDLE (4G)
  AnRelS,    // IDLE (5G)
};

struct UEState {
  TopState top = TopState::Deregistered;
  SubState sub = SubState::None;

  friend bool operator==(const UEState&, const UEState&) = default;
  friend auto operator<=>(const UEState&, const UEState&) = default;
};

std::string state_name(const UEState& s);

// Two-level hierarchical UE state machine. States are indexed densely so
// replay is a table walk; an absent (state, event) pair is a violation.
class StateMachineDef {
 public:
  Generation generation() const { return gen_; }
  std::size_t state_count() const { return states_.size(); }
  const std::vector<UEState>& states() const { return states_; }

  std::size_t state_index(const UEState& s) const;
  const UEState& state_at(std::size_t idx) const { return states_[idx]; }

  // Destination state, or nullopt when the event violates the semantics.
  std::optional<UEState> next(const UEState& from, EventKind ev) const;
  std::optional<std::size_t> next_index(std::size_t from, EventKind ev) const;

  // All outgoing (event, destination) pairs of a state, in a fixed order.
  std::vector<std::pair<EventKind, std::size_t>> edges_from(std::size_t from) const;

  // Plain-text table, one "STATE, EVENT -> STATE|VIOLATION" row per pair.
  std::string table_report() const;

  friend StateMachineDef build_state_machine(Generation gen);

 private:
  Generation gen_ = Generation::G4;
  std::vector<UEState> states_;
  std::vector<std::int8_t> table_;  // state_count x vocab, -1 = violation
};

StateMachineDef build_state_machine(Generation gen);

// Events whose destination state is fixed regardless of the source state
// (Attach, Detach, ServiceRequest, Handover) pin the replay state; the first
// such event in a stream is the bootstrap point.
struct BootstrapResult {
  UEState state;
  std::size_t index;  // index of the bootstrap event itself
};
std::optional<BootstrapResult> bootstrap_state(const Stream& stream,
                                               const StateMachineDef& def);

struct ReplayResult {
  std::optional<std::size_t> bootstrap_index;
  std::uint64_t violating_event_count = 0;
  std::uint64_t total_counted_events = 0;
  // Keyed by the exact source state; aggregation to report labels happens
  // in validate_dataset.
  std::map<std::pair<UEState, EventKind>, std::uint64_t> per_pair_violations;
  std::vector<double> connected_sojourns;  // completed intervals only
  std::vector<double> idle_sojourns;
};

ReplayResult replay(const Stream& stream, const StateMachineDef& def);

// S1_REL_S_1 / S1_REL_S_2 are reported under one "S1_REL_S" label and
// CONNECTED sub-states under "CONNECTED"; counts stay separate internally.
std::string violation_report_label(const UEState& s);

struct DatasetValidation {
  double event_violation_rate = 0.0;   // violating / counted events
  double stream_violation_rate = 0.0;  // streams with >= 1 violation
  std::uint64_t violating_events = 0;
  std::uint64_t counted_events = 0;
  std::uint64_t violating_streams = 0;
  std::map<std::pair<std::string, EventKind>, std::uint64_t> per_pair_breakdown;
};

DatasetValidation validate_dataset(const TraceDataset& dataset,
                                   const StateMachineDef& def);

}  // namespace cpt
