#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cpt/state_machine.hpp"
#include "cpt/trace.hpp"

namespace cpt {

// Semi-Markov model over the UE states of one state machine. Each edge
// carries a transition probability and an empirical sojourn sample set;
// sampling a sojourn is inverse-ECDF over the sorted samples.
struct SmmEdge {
  std::size_t from = 0;  // state index in the StateMachineDef
  EventKind event = EventKind::Attach;
  std::size_t to = 0;
  double probability = 0.0;     // conditional on leaving `from`
  std::vector<double> sojourn;  // sorted, non-negative seconds
};

struct SemiMarkovModel {
  Generation generation = Generation::G4;
  double mean_flow_length = 1.0;  // drives the per-step geometric stop
  std::vector<double> initial_state;  // per state index, sums to 1
  std::vector<SmmEdge> edges;         // grouped by `from`, fixed order
  // States whose outgoing distribution had no observations and fell back
  // to uniform over the legal edges.
  std::vector<std::size_t> uniform_fallback_states;

  std::vector<const SmmEdge*> edges_from(std::size_t state) const;
  void validate(const StateMachineDef& def) const;
};

// Fits SMM-1: transition counts and sojourn samples from replaying every
// stream; violating events are skipped and do not contribute.
SemiMarkovModel fit_smm(const TraceDataset& dataset, const StateMachineDef& def);

TraceDataset generate_smm(const SemiMarkovModel& model, const StateMachineDef& def,
                          std::size_t n_streams, std::size_t max_len,
                          std::uint64_t seed,
                          DeviceType device_type = DeviceType::Phone);

// JSON document ("cpt-smm-v1") usable both for fitted models and for
// hand-written specs that drive `simulate`.
void save_smm(const SemiMarkovModel& model, const std::filesystem::path& path);
SemiMarkovModel load_smm(const std::filesystem::path& path);
std::string smm_to_json(const SemiMarkovModel& model);
SemiMarkovModel smm_from_json(const std::string& text);

// Human-readable dump (states, edge probabilities, sojourn summaries).
std::string smm_report(const SemiMarkovModel& model, const StateMachineDef& def);

// Value at the inverse empirical CDF of `u` in [0,1); returns a member of
// `sorted_samples`.
double sample_ecdf(const std::vector<double>& sorted_samples, double u);

}  // namespace cpt
