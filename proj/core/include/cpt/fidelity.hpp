#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpt/state_machine.hpp"
#include "cpt/trace.hpp"

namespace cpt {

// Exact two-sample Kolmogorov-Smirnov statistic over the merged sample
// points. Errors on empty input.
double max_y_distance(const std::vector<double>& samples_a,
                      const std::vector<double>& samples_b);

struct SojournDistances {
  // nullopt when a state has no completed sojourn in either dataset.
  std::optional<double> connected;
  std::optional<double> idle;
};

// Per-UE average sojourn time distributions compared per top-level state;
// UEs without a completed sojourn in a state are excluded.
SojournDistances sojourn_distance(const TraceDataset& real,
                                  const TraceDataset& synth,
                                  const StateMachineDef& def);

struct FlowLengthDistances {
  double all = 0.0;
  double service_request = 0.0;  // per-stream SRV_REQ counts
  double release = 0.0;          // per-stream S1_CONN_REL / AN_REL counts

  friend bool operator==(const FlowLengthDistances&,
                         const FlowLengthDistances&) = default;
};

FlowLengthDistances flow_length_distance(const TraceDataset& real,
                                         const TraceDataset& synth);

// share(type in synth) - share(type in real), dense over the vocabulary.
std::vector<double> breakdown_diff(const TraceDataset& real,
                                   const TraceDataset& synth);

// Fraction of synthesized n-grams (contiguous event windows) that repeat a
// real n-gram: identical event-type sequence and every interarrival ratio
// inside (1-eps, 1+eps); zero interarrivals match only zero.
double memorization(const TraceDataset& real, const TraceDataset& synth,
                    std::size_t n, double epsilon);

struct MemorizationEntry {
  std::size_t n = 0;
  double epsilon = 0.0;
  double repeated_fraction = 0.0;

  friend bool operator==(const MemorizationEntry&,
                         const MemorizationEntry&) = default;
};

struct FidelityReport {
  Generation generation = Generation::G4;
  double event_violation_rate = 0.0;
  double stream_violation_rate = 0.0;
  std::optional<double> sojourn_connected;
  std::optional<double> sojourn_idle;
  FlowLengthDistances flow_length;
  std::vector<double> breakdown;  // synth share - real share per event kind
  std::vector<MemorizationEntry> memorization;

  friend bool operator==(const FidelityReport&, const FidelityReport&) = default;
};

struct MemorizationParams {
  std::size_t n = 0;
  double epsilon = 0.0;
};

FidelityReport full_report(const TraceDataset& real, const TraceDataset& synth,
                           const StateMachineDef& def,
                           const std::vector<MemorizationParams>& memo = {});

std::string report_to_json(const FidelityReport& report);
FidelityReport report_from_json(const std::string& text);
std::string report_to_table(const FidelityReport& report);

}  // namespace cpt
