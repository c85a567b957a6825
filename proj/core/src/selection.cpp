#include "cpt/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cpt/fidelity.hpp"
#include "cpt/generator.hpp"
#include "cpt/rng.hpp"
#include "cpt/state_machine.hpp"

namespace cpt {

const std::array<const char*, kSelectionMetricCount> kSelectionMetricNames = {
    "event_viol", "stream_viol", "sojourn_conn", "sojourn_idle",
    "flow_all",   "flow_srv",    "flow_rel",     "breakdown"};

SelectionResult select_checkpoint(const std::vector<Checkpoint>& checkpoints,
                                  const TraceDataset& validation,
                                  const SelectionOptions& opts) {
  if (checkpoints.empty()) throw Error("no checkpoints to select from");
  if (validation.streams.empty()) throw Error("validation dataset is empty");

  SelectionResult result;
  if (checkpoints.size() == 1) {
    result.selected_index = 0;
    SelectionRow row;
    row.checkpoint_index = 0;
    row.epoch = checkpoints[0].epoch;
    row.shortlisted = true;
    result.rows.push_back(row);
    return result;
  }

  const StateMachineDef def = build_state_machine(validation.generation);
  constexpr double kNa = std::numeric_limits<double>::infinity();

  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    GenerateOptions gopts;
    gopts.device_type = opts.device_type;
    gopts.threads = opts.threads;
    const TraceDataset sample =
        generate_dataset(checkpoints[c], opts.sample_streams,
                         derive_seed(opts.seed, c), gopts);
    const FidelityReport rep = full_report(validation, sample, def);
    double max_abs_breakdown = 0.0;
    for (double d : rep.breakdown)
      max_abs_breakdown = std::max(max_abs_breakdown, std::abs(d));

    SelectionRow row;
    row.checkpoint_index = c;
    row.epoch = checkpoints[c].epoch;
    row.metrics = {rep.event_violation_rate,
                   rep.stream_violation_rate,
                   rep.sojourn_connected.value_or(kNa),
                   rep.sojourn_idle.value_or(kNa),
                   rep.flow_length.all,
                   rep.flow_length.service_request,
                   rep.flow_length.release,
                   max_abs_breakdown};
    result.rows.push_back(row);
  }

  const std::size_t best = rank_and_select(result.rows);
  result.selected_index = result.rows[best].checkpoint_index;
  return result;
}

std::size_t rank_and_select(std::vector<SelectionRow>& rows) {
  if (rows.empty()) throw Error("no rows to rank");

  // Competition ranking per metric: 1 = best (smallest), ties share a rank.
  for (std::size_t m = 0; m < kSelectionMetricCount; ++m) {
    std::vector<std::size_t> idx(rows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return rows[a].metrics[m] < rows[b].metrics[m];
    });
    for (std::size_t pos = 0; pos < idx.size(); ++pos) {
      if (pos > 0 && rows[idx[pos]].metrics[m] == rows[idx[pos - 1]].metrics[m])
        rows[idx[pos]].ranks[m] = rows[idx[pos - 1]].ranks[m];
      else
        rows[idx[pos]].ranks[m] = pos + 1;
    }
  }
  for (SelectionRow& row : rows) {
    row.rank_sum = 0;
    row.shortlisted = false;
    for (std::size_t r : row.ranks) row.rank_sum += r;
  }

  const std::size_t keep = (rows.size() + 4) / 5;  // ceil(20%)
  std::vector<std::size_t> by_sum(rows.size());
  for (std::size_t i = 0; i < by_sum.size(); ++i) by_sum[i] = i;
  std::stable_sort(by_sum.begin(), by_sum.end(), [&](std::size_t a, std::size_t b) {
    if (rows[a].rank_sum != rows[b].rank_sum)
      return rows[a].rank_sum < rows[b].rank_sum;
    return rows[a].epoch < rows[b].epoch;
  });

  std::size_t best = by_sum[0];
  for (std::size_t i = 0; i < keep; ++i) {
    rows[by_sum[i]].shortlisted = true;
    if (rows[by_sum[i]].epoch < rows[best].epoch) best = by_sum[i];
  }
  return best;
}

std::string SelectionResult::table() const {
  std::ostringstream os;
  os << "epoch";
  for (const char* name : kSelectionMetricNames) os << "  " << name;
  os << "  rank_sum  shortlisted\n";
  for (const SelectionRow& row : rows) {
    os << row.epoch;
    os.precision(4);
    for (double m : row.metrics) os << "  " << m;
    os << "  " << row.rank_sum << "  " << (row.shortlisted ? "yes" : "no");
    if (row.checkpoint_index == selected_index && row.shortlisted)
      os << "  <- selected";
    os << "\n";
  }
  return os.str();
}

}  // namespace cpt
