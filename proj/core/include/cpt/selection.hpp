#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cpt/model.hpp"
#include "cpt/trace.hpp"

namespace cpt {

struct SelectionOptions {
  std::size_t sample_streams = 1000;  // generated per checkpoint
  std::uint64_t seed = 0;
  DeviceType device_type = DeviceType::Phone;
  std::size_t threads = 0;
};

inline constexpr std::size_t kSelectionMetricCount = 8;
extern const std::array<const char*, kSelectionMetricCount> kSelectionMetricNames;

struct SelectionRow {
  std::size_t checkpoint_index = 0;
  std::size_t epoch = 0;
  std::array<double, kSelectionMetricCount> metrics{};
  std::array<std::size_t, kSelectionMetricCount> ranks{};
  std::size_t rank_sum = 0;
  bool shortlisted = false;
};

struct SelectionResult {
  std::size_t selected_index = 0;
  std::vector<SelectionRow> rows;
  std::string table() const;
};

// The ranking rule alone: per metric, competition ranks (1 = best, ties
// share a rank); shortlist the top 20% (ceiling) by rank sum; return the
// index of the earliest-epoch shortlisted row. Fills ranks, rank_sum and
// shortlisted in place.
std::size_t rank_and_select(std::vector<SelectionRow>& rows);

// Generates a fixed sample per checkpoint, scores it against the validation
// set on every fidelity metric, then applies rank_and_select.
SelectionResult select_checkpoint(const std::vector<Checkpoint>& checkpoints,
                                  const TraceDataset& validation,
                                  const SelectionOptions& opts = {});

}  // namespace cpt
