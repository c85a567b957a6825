#include "cpt/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cpt {

TokenizerConfig fit_scaler(const TraceDataset& dataset) {
  if (dataset.streams.empty()) throw Error("cannot fit a scaler on an empty dataset");
  TokenizerConfig cfg;
  cfg.generation = dataset.generation;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const Stream& s : dataset.streams) {
    for (double d : interarrivals(s)) {
      const double y = std::log1p(d);
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  cfg.scaler_min = lo;
  cfg.scaler_max = hi;
  return cfg;
}

double scale(double t_seconds, const TokenizerConfig& cfg) {
  const double range = cfg.scaler_max - cfg.scaler_min;
  if (range <= 0.0) return 0.0;
  const double x = (std::log1p(t_seconds) - cfg.scaler_min) / range;
  return std::clamp(x, 0.0, 1.0);
}

double unscale(double x_prime, const TokenizerConfig& cfg) {
  const double x = std::clamp(x_prime, 0.0, 1.0);
  const double range = cfg.scaler_max - cfg.scaler_min;
  if (range <= 0.0) return std::expm1(cfg.scaler_min);
  return std::expm1(x * range + cfg.scaler_min);
}

Token make_token(double scaled_interarrival, EventKind type, bool stop,
                 const TokenizerConfig& cfg) {
  Token t(cfg.d_token(), 0.0f);
  t[0] = static_cast<float>(scaled_interarrival);
  const auto type_idx = static_cast<std::size_t>(type);
  if (type_idx >= cfg.vocab())
    throw Error("event type outside the tokenizer vocabulary");
  t[1 + type_idx] = 1.0f;
  t[1 + cfg.vocab() + (stop ? 1 : 0)] = 1.0f;
  return t;
}

std::vector<Token> encode_stream(const Stream& stream, const TokenizerConfig& cfg,
                                 bool for_training, EncodeStats* stats) {
  if (stream.events.empty()) throw Error("cannot encode an empty stream");
  if (for_training && stream.events.size() < 2)
    throw Error("stream '" + stream.ue_id +
                "' has length 1 and is excluded from training encoding");
  const std::vector<double> gaps = interarrivals(stream);
  std::vector<Token> out;
  out.reserve(stream.events.size());
  for (std::size_t k = 0; k < stream.events.size(); ++k) {
    if (stats && std::log1p(gaps[k]) > cfg.scaler_max) stats->clamped++;
    out.push_back(make_token(scale(gaps[k], cfg), stream.events[k].type,
                             k + 1 == stream.events.size(), cfg));
  }
  return out;
}

TokenFields read_token(const Token& token, const TokenizerConfig& cfg,
                       std::size_t index) {
  if (token.size() != cfg.d_token())
    throw Error("token " + std::to_string(index) + " has dimension " +
                std::to_string(token.size()) + ", expected " +
                std::to_string(cfg.d_token()));
  auto one_hot_index = [&](std::size_t offset, std::size_t n,
                           const char* what) -> std::size_t {
    std::size_t hot = n;
    for (std::size_t i = 0; i < n; ++i) {
      const float v = token[offset + i];
      if (v == 1.0f) {
        if (hot != n)
          throw Error("token " + std::to_string(index) + " has multiple ones in its " +
                      what + " block");
        hot = i;
      } else if (v != 0.0f) {
        throw Error("token " + std::to_string(index) + " has a non-binary value in its " +
                    what + " block");
      }
    }
    if (hot == n)
      throw Error("token " + std::to_string(index) + " has no one in its " + what +
                  " block");
    return hot;
  };
  TokenFields f;
  f.scaled_interarrival = token[0];
  if (!(f.scaled_interarrival >= 0.0 && f.scaled_interarrival <= 1.0))
    throw Error("token " + std::to_string(index) +
                " has a scaled interarrival outside [0,1]");
  f.type = static_cast<EventKind>(one_hot_index(1, cfg.vocab(), "event-type"));
  f.stop = one_hot_index(1 + cfg.vocab(), 2, "stop-flag") == 1;
  return f;
}

Stream decode_stream(const std::vector<Token>& tokens, const TokenizerConfig& cfg,
                     double start_time) {
  if (tokens.empty()) throw Error("cannot decode an empty token sequence");
  Stream s;
  double now = start_time;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const TokenFields f = read_token(tokens[k], cfg, k);
    if (k > 0) now += unscale(f.scaled_interarrival, cfg);
    s.events.push_back(Event{now, f.type});
  }
  return s;
}

}  // namespace cpt
