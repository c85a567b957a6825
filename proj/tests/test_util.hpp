#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cpt/rng.hpp"
#include "cpt/smm.hpp"
#include "cpt/state_machine.hpp"
#include "cpt/trace.hpp"

namespace cpt::test {

inline Stream make_stream(std::string ue_id, Generation gen,
                          const std::vector<std::pair<double, const char*>>& events,
                          DeviceType dt = DeviceType::Phone) {
  Stream s;
  s.ue_id = std::move(ue_id);
  s.device_type = dt;
  for (const auto& [t, name] : events)
    s.events.push_back(Event{t, parse_event(gen, name)});
  return s;
}

// Uniform-probability SMM over every legal edge, bimodal sojourns.
inline SemiMarkovModel uniform_smm(Generation gen, double mean_len = 12.0) {
  const StateMachineDef def = build_state_machine(gen);
  SemiMarkovModel m;
  m.generation = gen;
  m.mean_flow_length = mean_len;
  m.initial_state.assign(def.state_count(), 0.0);
  m.initial_state[def.state_index({TopState::Connected, SubState::SrvReqS})] = 0.8;
  m.initial_state[def.state_index({TopState::Connected, SubState::HoS})] = 0.2;
  for (std::size_t s = 0; s < def.state_count(); ++s) {
    const auto edges = def.edges_from(s);
    for (const auto& [ev, dst] : edges) {
      SmmEdge e;
      e.from = s;
      e.event = ev;
      e.to = dst;
      e.probability = 1.0 / double(edges.size());
      e.sojourn = {0.5, 0.8, 1.2, 2.0, 15.0, 25.0, 40.0};
      m.edges.push_back(e);
    }
  }
  return m;
}

// Random but valid dataset (timestamps non-decreasing, generation-correct).
inline TraceDataset random_dataset(Generation gen, std::size_t n_streams,
                                   std::uint64_t seed, std::size_t max_len = 12) {
  Rng rng(seed);
  TraceDataset ds;
  ds.generation = gen;
  for (std::size_t i = 0; i < n_streams; ++i) {
    Stream s;
    s.ue_id = rng.hex_id(64);
    s.device_type = DeviceType::Phone;
    const std::size_t len = 1 + std::size_t(rng.uniform() * double(max_len));
    double now = rng.uniform() < 0.2 ? 0.0 : rng.uniform() * 3.0;
    for (std::size_t k = 0; k < len; ++k) {
      const auto kind = static_cast<EventKind>(
          std::size_t(rng.uniform() * double(vocab_size(gen))));
      s.events.push_back(Event{now, kind});
      now += rng.uniform() < 0.15 ? 0.0 : rng.uniform() * 40.0;
    }
    ds.streams.push_back(std::move(s));
  }
  return ds;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("cpt_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace cpt::test
