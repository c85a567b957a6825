#include "cpt/trace.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace cpt {

namespace {

constexpr std::array<std::string_view, 6> kNames4G = {
    "ATCH", "DTCH", "SRV_REQ", "S1_CONN_REL", "HO", "TAU"};
constexpr std::array<std::string_view, 5> kNames5G = {
    "REGISTER", "DEREGISTER", "SRV_REQ", "AN_REL", "HO"};

}  // namespace

std::string_view generation_name(Generation gen) {
  return gen == Generation::G4 ? "4g" : "5g";
}

Generation parse_generation(std::string_view text) {
  if (text == "4g" || text == "4G") return Generation::G4;
  if (text == "5g" || text == "5G") return Generation::G5;
  throw Error("unknown generation '" + std::string(text) + "' (expected 4g or 5g)");
}

std::string_view event_name(Generation gen, EventKind kind) {
  const auto idx = static_cast<std::size_t>(kind);
  if (gen == Generation::G4) {
    if (idx >= kNames4G.size()) throw Error("event kind out of range for 4g");
    return kNames4G[idx];
  }
  if (idx >= kNames5G.size()) throw Error("event kind out of range for 5g");
  return kNames5G[idx];
}

EventKind parse_event(Generation gen, std::string_view name) {
  if (gen == Generation::G4) {
    for (std::size_t i = 0; i < kNames4G.size(); ++i)
      if (kNames4G[i] == name) return static_cast<EventKind>(i);
  } else {
    for (std::size_t i = 0; i < kNames5G.size(); ++i)
      if (kNames5G[i] == name) return static_cast<EventKind>(i);
  }
  throw Error("unknown " + std::string(generation_name(gen)) + " event type '" +
              std::string(name) + "'");
}

std::string_view device_type_name(DeviceType dt) {
  switch (dt) {
    case DeviceType::Phone: return "phone";
    case DeviceType::ConnectedCar: return "connected_car";
    case DeviceType::Tablet: return "tablet";
  }
  throw Error("invalid device type");
}

DeviceType parse_device_type(std::string_view text) {
  if (text == "phone") return DeviceType::Phone;
  if (text == "connected_car") return DeviceType::ConnectedCar;
  if (text == "tablet") return DeviceType::Tablet;
  throw Error("unknown device type '" + std::string(text) +
              "' (expected phone, connected_car, or tablet)");
}

void validate_stream(const Stream& stream, Generation gen) {
  if (stream.events.empty())
    throw Error("stream '" + stream.ue_id + "' has no events");
  double prev = 0.0;
  bool first = true;
  for (const Event& ev : stream.events) {
    if (!std::isfinite(ev.timestamp) || ev.timestamp < 0.0)
      throw Error("stream '" + stream.ue_id + "' has a negative or non-finite timestamp");
    if (!first && ev.timestamp < prev)
      throw Error("stream '" + stream.ue_id + "' has decreasing timestamps");
    if (static_cast<std::size_t>(ev.type) >= vocab_size(gen))
      throw Error("stream '" + stream.ue_id + "' holds an event type outside the " +
                  std::string(generation_name(gen)) + " vocabulary");
    prev = ev.timestamp;
    first = false;
  }
}

void validate_dataset_shape(const TraceDataset& dataset) {
  for (const Stream& s : dataset.streams) validate_stream(s, dataset.generation);
}

TraceDataset load_trace(const std::filesystem::path& path, Generation gen) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file '" + path.string() + "'");

  TraceDataset out;
  out.generation = gen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) +
                  ": JSON parse error: " + e.what());
    }
    try {
      Stream s;
      s.ue_id = j.at("ue_id").get<std::string>();
      s.device_type = parse_device_type(j.at("device_type").get<std::string>());
      const auto& events = j.at("events");
      if (!events.is_array()) throw Error("'events' must be an array");
      s.events.reserve(events.size());
      for (const auto& e : events) {
        if (!e.is_array() || e.size() != 2)
          throw Error("each event must be a [seconds, type] pair");
        Event ev;
        ev.timestamp = e[0].get<double>();
        ev.type = parse_event(gen, e[1].get<std::string>());
        s.events.push_back(ev);
      }
      validate_stream(s, gen);
      out.streams.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

// Shortest decimal form that parses back to the identical double.
void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
  // Keep JSON number-ness explicit for integral values.
  bool has_dot = false;
  for (const char* p = buf; p != res.ptr; ++p)
    if (*p == '.' || *p == 'e' || *p == 'E') has_dot = true;
  if (!has_dot) out += ".0";
}

}  // namespace

void save_trace(const TraceDataset& dataset, const std::filesystem::path& path) {
  std::ofstream outf(path, std::ios::binary | std::ios::trunc);
  if (!outf) throw Error("cannot write trace file '" + path.string() + "'");
  std::string line;
  for (const Stream& s : dataset.streams) {
    line.clear();
    line += "{\"ue_id\":";
    line += nlohmann::json(s.ue_id).dump();
    line += ",\"device_type\":\"";
    line += device_type_name(s.device_type);
    line += "\",\"events\":[";
    bool first = true;
    for (const Event& ev : s.events) {
      if (!first) line += ',';
      first = false;
      line += '[';
      append_double(line, ev.timestamp);
      line += ",\"";
      line += event_name(dataset.generation, ev.type);
      line += "\"]";
    }
    line += "]}\n";
    outf << line;
  }
  outf.flush();
  if (!outf) throw Error("I/O failure while writing '" + path.string() + "'");
}

std::vector<double> interarrivals(const Stream& stream) {
  std::vector<double> out(stream.events.size(), 0.0);
  for (std::size_t k = 1; k < stream.events.size(); ++k)
    out[k] = stream.events[k].timestamp - stream.events[k - 1].timestamp;
  return out;
}

InitialEventDistribution initial_event_distribution(const TraceDataset& dataset) {
  if (dataset.streams.empty())
    throw Error("cannot derive an initial-event distribution from an empty dataset");
  InitialEventDistribution dist;
  dist.generation = dataset.generation;
  dist.probability.assign(vocab_size(dataset.generation), 0.0);
  for (const Stream& s : dataset.streams)
    dist.probability[static_cast<std::size_t>(s.events.front().type)] += 1.0;
  for (double& p : dist.probability) p /= static_cast<double>(dataset.streams.size());
  return dist;
}

}  // namespace cpt
