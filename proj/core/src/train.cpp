#include <cmath>
#include <numeric>

#include "cpt/model.hpp"
#include "cpt/rng.hpp"
#include "net.hpp"
#include "parallel.hpp"

namespace cpt {

using detail::NetLayout;

namespace {

struct EncodedStream {
  std::vector<Token> tokens;
  TargetSequence targets;
};

struct EncodedData {
  std::vector<EncodedStream> streams;
  std::size_t dropped_short = 0;
  std::size_t dropped_long = 0;
};

EncodedData encode_dataset(const TraceDataset& dataset, const Checkpoint& ckpt) {
  if (dataset.generation != ckpt.tokenizer.generation)
    throw Error("dataset generation does not match the checkpoint tokenizer");
  EncodedData out;
  for (const Stream& s : dataset.streams) {
    if (s.events.size() < 2) {
      out.dropped_short++;
      continue;
    }
    if (s.events.size() > ckpt.model.max_context) {
      out.dropped_long++;
      continue;
    }
    EncodedStream es;
    es.tokens = encode_stream(s, ckpt.tokenizer, /*for_training=*/true);
    es.targets = targets_for(es.tokens, ckpt.tokenizer);
    out.streams.push_back(std::move(es));
  }
  return out;
}

// One worker's reusable buffers.
struct Worker {
  detail::NetActs<float> acts;
  detail::BackwardArena<float> arena;
};

}  // namespace

TrainResult train(const Checkpoint& init, const TraceDataset& dataset,
                  const TrainConfig& cfg) {
  cfg.validate();
  init.model.validate();

  TrainResult result;
  if (cfg.epochs == 0) {
    result.checkpoints.push_back(init);
    return result;
  }

  const NetLayout lay = detail::make_layout(init.model, init.tokenizer.d_token(),
                                            init.tokenizer.vocab());
  EncodedData data = encode_dataset(dataset, init);
  result.streams_used = data.streams.size();
  result.streams_dropped_short = data.dropped_short;
  result.streams_dropped_long = data.dropped_long;
  if (data.streams.empty())
    throw Error("no trainable streams (need length in [2, max_context])");

  Checkpoint ckpt = init;
  ckpt.initial_events = initial_event_distribution(dataset);

  const std::size_t n_params = ckpt.params.size();
  const std::size_t n_threads = detail::effective_threads(cfg.threads);
  const std::size_t batch = std::min(cfg.batch_size, data.streams.size());

  // Per-sequence gradient buffers reduced in sequence order keep results
  // independent of the thread count.
  std::vector<std::vector<float>> seq_grads(batch,
                                            std::vector<float>(n_params, 0.0f));
  std::vector<detail::SeqLoss> seq_losses(batch);
  std::vector<Worker> workers(std::min(n_threads, batch));
  std::vector<float> grad(n_params, 0.0f);

  std::vector<std::size_t> order(data.streams.size());
  std::iota(order.begin(), order.end(), 0);

  double lr = cfg.adam.learning_rate;
  const double b1 = cfg.adam.beta1, b2 = cfg.adam.beta2, eps = cfg.adam.eps;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, epoch));
    deterministic_shuffle(std::span<std::size_t>(order), shuffle_rng);

    double ep_event = 0, ep_arrival = 0, ep_stop = 0;
    std::size_t ep_event_n = 0, ep_stop_n = 0;

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t b_n = std::min(batch, order.size() - start);

      // Position counts are known from the lengths, so per-field gradient
      // scales can be fixed before the backward passes.
      std::size_t n_event = 0, n_stop = 0;
      for (std::size_t i = 0; i < b_n; ++i) {
        const std::size_t len = data.streams[order[start + i]].tokens.size();
        n_event += len - 1;
        n_stop += len;
      }
      const detail::LossScales scales{
          cfg.weights.event / double(n_event),
          cfg.weights.arrival / double(n_event),
          cfg.weights.stop / double(n_stop)};

      detail::parallel_for(b_n, workers.size(), [&](std::size_t i, std::size_t wid) {
        const EncodedStream& es = data.streams[order[start + i]];
        std::fill(seq_grads[i].begin(), seq_grads[i].end(), 0.0f);
        Worker& wk = workers[wid];
        detail::net_forward(ckpt.params.data(), lay, es.tokens, wk.acts);
        seq_losses[i] = detail::net_backward(
            ckpt.params.data(), lay, es.tokens, es.targets, wk.acts,
            ckpt.model.distribution_head, scales, seq_grads[i].data(), wk.arena);
      });

      // Deterministic reduction: parameter slices in parallel, sequences in
      // index order within each slice.
      detail::parallel_for(n_threads, n_threads, [&](std::size_t slice, std::size_t) {
        const std::size_t lo = n_params * slice / n_threads;
        const std::size_t hi = n_params * (slice + 1) / n_threads;
        for (std::size_t j = lo; j < hi; ++j) {
          float acc = 0.0f;
          for (std::size_t i = 0; i < b_n; ++i) acc += seq_grads[i][j];
          grad[j] = acc;
        }
      });

      double batch_event = 0, batch_arrival = 0, batch_stop = 0;
      for (std::size_t i = 0; i < b_n; ++i) {
        batch_event += seq_losses[i].event_sum;
        batch_arrival += seq_losses[i].arrival_sum;
        batch_stop += seq_losses[i].stop_sum;
      }
      const double batch_total = cfg.weights.event * batch_event / double(n_event) +
                                 cfg.weights.arrival * batch_arrival / double(n_event) +
                                 cfg.weights.stop * batch_stop / double(n_stop);
      if (!std::isfinite(batch_total))
        throw Error("non-finite loss at epoch " + std::to_string(epoch + 1) +
                    ", batch " + std::to_string(start / batch + 1));
      ep_event += batch_event;
      ep_arrival += batch_arrival;
      ep_stop += batch_stop;
      ep_event_n += n_event;
      ep_stop_n += n_stop;

      // Adam update.
      ckpt.adam_step++;
      const double corr1 = 1.0 - std::pow(b1, double(ckpt.adam_step));
      const double corr2 = 1.0 - std::pow(b2, double(ckpt.adam_step));
      detail::parallel_for(n_threads, n_threads, [&](std::size_t slice, std::size_t) {
        const std::size_t lo = n_params * slice / n_threads;
        const std::size_t hi = n_params * (slice + 1) / n_threads;
        float* m = ckpt.adam_m.data();
        float* v = ckpt.adam_v.data();
        float* p = ckpt.params.data();
        for (std::size_t j = lo; j < hi; ++j) {
          const double g = grad[j];
          const double mj = b1 * m[j] + (1.0 - b1) * g;
          const double vj = b2 * v[j] + (1.0 - b2) * g * g;
          m[j] = float(mj);
          v[j] = float(vj);
          p[j] = float(p[j] - lr * (mj / corr1) / (std::sqrt(vj / corr2) + eps));
        }
      });
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.parts.event = ep_event / double(ep_event_n);
    stats.parts.arrival = ep_arrival / double(ep_event_n);
    stats.parts.stop = ep_stop / double(ep_stop_n);
    stats.total = stats.parts.total(cfg.weights);
    result.history.push_back(stats);

    if ((epoch + 1) % cfg.ckpt_every == 0) {
      Checkpoint snap = ckpt;
      snap.epoch = epoch + 1;
      result.checkpoints.push_back(std::move(snap));
    }
  }
  return result;
}

TrainResult finetune(const Checkpoint& from, const TraceDataset& dataset,
                     const TrainConfig& cfg) {
  if (from.tokenizer.generation != dataset.generation)
    throw Error("checkpoint vocabulary does not match the dataset generation");
  if (cfg.epochs == 0) {
    TrainResult result;
    result.checkpoints.push_back(from);
    return result;
  }
  Checkpoint start = from;
  start.epoch = 0;
  start.adam_step = 0;  // fresh optimizer state
  std::fill(start.adam_m.begin(), start.adam_m.end(), 0.0f);
  std::fill(start.adam_v.begin(), start.adam_v.end(), 0.0f);
  return train(start, dataset, cfg);
}

LossBreakdown evaluate_loss(const Checkpoint& ckpt, const TraceDataset& dataset,
                            std::size_t threads) {
  const NetLayout lay = detail::make_layout(ckpt.model, ckpt.tokenizer.d_token(),
                                            ckpt.tokenizer.vocab());
  EncodedData data = encode_dataset(dataset, ckpt);
  if (data.streams.empty())
    throw Error("no usable streams to evaluate (need length in [2, max_context])");

  const std::size_t n_threads = detail::effective_threads(threads);
  std::vector<detail::SeqLoss> losses(data.streams.size());
  std::vector<detail::NetActs<float>> acts(
      std::min(n_threads, data.streams.size()));
  detail::parallel_for(
      data.streams.size(), acts.size(), [&](std::size_t i, std::size_t wid) {
        detail::NetActs<float>& a = acts[wid];
        detail::net_forward(ckpt.params.data(), lay, data.streams[i].tokens, a);
        losses[i] = detail::sequence_loss(lay, a, data.streams[i].targets,
                                          ckpt.model.distribution_head);
      });

  double ev = 0, arr = 0, st = 0;
  std::size_t ev_n = 0, st_n = 0;
  for (const auto& l : losses) {
    ev += l.event_sum;
    arr += l.arrival_sum;
    st += l.stop_sum;
    ev_n += l.event_count;
    st_n += l.stop_count;
  }
  LossBreakdown parts;
  parts.event = ev / double(ev_n);
  parts.arrival = arr / double(ev_n);
  parts.stop = st / double(st_n);
  return parts;
}

}  // namespace cpt
