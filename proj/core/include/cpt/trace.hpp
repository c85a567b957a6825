#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cpt {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

enum class Generation : std::uint8_t { G4, G5 };

// Control-plane event kinds, indexed by role so the 4G and 5G vocabularies
// share one encoding. TAU exists only in 4G.
enum class EventKind : std::uint8_t {
  Attach = 0,       // ATCH / REGISTER
  Detach = 1,       // DTCH / DEREGISTER
  ServiceRequest = 2,  // SRV_REQ
  Release = 3,      // S1_CONN_REL / AN_REL
  Handover = 4,     // HO
  Tau = 5,          // TAU (4G only)
};

constexpr std::size_t vocab_size(Generation gen) {
  return gen == Generation::G4 ? 6 : 5;
}

std::string_view generation_name(Generation gen);
Generation parse_generation(std::string_view text);

// Wire names exactly as they appear in trace files ("SRV_REQ", "AN_REL", ...).
std::string_view event_name(Generation gen, EventKind kind);
EventKind parse_event(Generation gen, std::string_view name);

enum class DeviceType : std::uint8_t { Phone, ConnectedCar, Tablet };
std::string_view device_type_name(DeviceType dt);
DeviceType parse_device_type(std::string_view text);

struct Event {
  double timestamp = 0.0;  // seconds since stream start, non-negative
  EventKind type = EventKind::Attach;
};

struct Stream {
  std::string ue_id;
  DeviceType device_type = DeviceType::Phone;
  std::vector<Event> events;  // timestamps non-decreasing, length >= 1
};

struct TraceDataset {
  Generation generation = Generation::G4;
  std::vector<Stream> streams;
};

// Probability per event kind, dense over the generation's vocabulary.
struct InitialEventDistribution {
  Generation generation = Generation::G4;
  std::vector<double> probability;  // size == vocab_size(generation)
};

// Throws Error if a stream violates the invariants (empty, unordered
// timestamps, negative or non-finite timestamps, TAU in a 5G dataset).
void validate_stream(const Stream& stream, Generation gen);
void validate_dataset_shape(const TraceDataset& dataset);

// JSONL trace I/O: one stream object per line,
// {"ue_id": ..., "device_type": ..., "events": [[seconds, "TYPE"], ...]}.
TraceDataset load_trace(const std::filesystem::path& path, Generation gen);
void save_trace(const TraceDataset& dataset, const std::filesystem::path& path);

// interarrivals[0] == 0; interarrivals[k] == t_k - t_{k-1}.
std::vector<double> interarrivals(const Stream& stream);

// Share of streams whose first event has each kind. Errors on empty datasets.
InitialEventDistribution initial_event_distribution(const TraceDataset& dataset);

}  // namespace cpt
