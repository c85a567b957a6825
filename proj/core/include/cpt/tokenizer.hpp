#pragma once

#include <cstdint>
#include <vector>

#include "cpt/trace.hpp"

namespace cpt {

// Multi-modal token: [scaled interarrival] ++ [one-hot event type] ++
// [one-hot stop flag]. d_token = 1 + V + 2 (9 in 4G, 8 in 5G).
using Token = std::vector<float>;

struct TokenizerConfig {
  Generation generation = Generation::G4;
  double scaler_min = 0.0;  // min of log1p(interarrival) on the fit set
  double scaler_max = 0.0;

  std::size_t vocab() const { return vocab_size(generation); }
  std::size_t d_token() const { return 1 + vocab() + 2; }

  friend bool operator==(const TokenizerConfig&, const TokenizerConfig&) = default;
};

// scaler_min/max over log1p of every interarrival, leading zeros included.
TokenizerConfig fit_scaler(const TraceDataset& dataset);

// x' = (log1p(t) - min) / (max - min), clamped to [0,1]. A degenerate
// scaler (min == max) maps everything to 0.
double scale(double t_seconds, const TokenizerConfig& cfg);
// t = expm1(x' * (max - min) + min); x' clamped to [0,1] first.
double unscale(double x_prime, const TokenizerConfig& cfg);

struct EncodeStats {
  std::uint64_t clamped = 0;  // interarrivals beyond the fitted max
};

Token make_token(double scaled_interarrival, EventKind type, bool stop,
                 const TokenizerConfig& cfg);

// Token sequence for one stream; token k carries interarrival k (0 for the
// first event) and stop=1 only on the last token. `for_training` enforces
// the length >= 2 rule.
std::vector<Token> encode_stream(const Stream& stream, const TokenizerConfig& cfg,
                                 bool for_training = false,
                                 EncodeStats* stats = nullptr);

// Rebuilds timestamps by cumulative summation of unscaled interarrivals.
// Errors name the offending token index.
Stream decode_stream(const std::vector<Token>& tokens, const TokenizerConfig& cfg,
                     double start_time = 0.0);

struct TokenFields {
  double scaled_interarrival = 0.0;
  EventKind type = EventKind::Attach;
  bool stop = false;
};
// Validates the one-hot blocks; `index` is used in error messages.
TokenFields read_token(const Token& token, const TokenizerConfig& cfg,
                       std::size_t index);

}  // namespace cpt
