#include "cpt/generator.hpp"

#include <algorithm>
#include <cmath>

#include "cpt/rng.hpp"
#include "cpt/tokenizer.hpp"
#include "parallel.hpp"

namespace cpt {

namespace {

std::size_t sample_softmax(std::span<const double> logits, double temperature,
                           Rng& rng) {
  std::vector<double> probs(logits.size());
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp((logits[i] - mx) / temperature);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return rng.categorical(probs);
}

Stream rollout(const Checkpoint& ckpt, StreamDecoder& dec, std::uint64_t seed,
               const GenerateOptions& opts) {
  if (!(opts.temperature > 0.0)) throw Error("temperature must be positive");
  const TokenizerConfig& tok = ckpt.tokenizer;
  std::size_t cap = opts.max_len == 0 ? ckpt.model.max_context : opts.max_len;
  cap = std::min(cap, ckpt.model.max_context);

  Rng rng(seed);
  Stream s;
  s.device_type = opts.device_type;
  s.ue_id = rng.hex_id();

  const auto first_type = static_cast<EventKind>(
      rng.categorical(ckpt.initial_events.probability));
  std::vector<Token> seq;
  seq.push_back(make_token(0.0, first_type, false, tok));
  double now = 0.0;
  s.events.push_back(Event{now, first_type});

  dec.reset();
  auto out = dec.step(seq.back());
  while (s.events.size() < cap) {
    const auto type = static_cast<EventKind>(
        sample_softmax(out.event_logits, opts.temperature, rng));
    double x = out.arrival_mean;
    if (ckpt.model.distribution_head)
      x += out.arrival_sigma * rng.normal();
    x = std::clamp(x, 0.0, 1.0);
    const bool stop =
        sample_softmax(std::span<const double>(out.stop_logits.data(), 2),
                       opts.temperature, rng) == 1;
    if (stop) break;  // the stream ends at the already-emitted event
    now += unscale(x, tok);
    s.events.push_back(Event{now, type});
    seq.push_back(make_token(x, type, false, tok));
    out = dec.step(seq.back());
  }
  return s;
}

}  // namespace

Stream generate_stream(const Checkpoint& ckpt, std::uint64_t seed,
                       const GenerateOptions& opts) {
  StreamDecoder dec(ckpt);
  return rollout(ckpt, dec, seed, opts);
}

TraceDataset generate_dataset(const Checkpoint& ckpt, std::size_t n_streams,
                              std::uint64_t seed, const GenerateOptions& opts) {
  if (n_streams < 1) throw Error("n_streams must be >= 1");
  TraceDataset out;
  out.generation = ckpt.tokenizer.generation;
  out.streams.resize(n_streams);

  const std::size_t n_workers = std::min(
      detail::effective_threads(opts.threads), n_streams);
  std::vector<StreamDecoder> decoders;
  decoders.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) decoders.emplace_back(ckpt);

  detail::parallel_for(n_streams, n_workers, [&](std::size_t i, std::size_t wid) {
    out.streams[i] = rollout(ckpt, decoders[wid], derive_seed(seed, i), opts);
  });
  return out;
}

}  // namespace cpt
