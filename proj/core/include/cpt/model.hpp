#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpt/tokenizer.hpp"
#include "cpt/trace.hpp"

namespace cpt {

// Decoder-only transformer: input linear (d_token -> d_model), learned
// positional embeddings, pre-norm attention blocks, and three output heads
// (event type, interarrival, stop flag).
struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t n_blocks = 2;
  std::size_t mlp_hidden = 1024;
  std::size_t n_heads = 4;
  std::size_t max_context = 500;
  // true: the interarrival head emits (mean, std) of a Gaussian; false:
  // a bare scalar trained with squared error.
  bool distribution_head = true;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LossWeights {
  double event = 1.0;
  double arrival = 1.0;
  double stop = 1.0;
  void validate() const;  // non-negative, not all zero
};

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::size_t ckpt_every = 5;  // emit a checkpoint every N epochs
  std::uint64_t seed = 1;
  LossWeights weights;
  // Execution knob only; results are independent of it. 0 = all cores.
  std::size_t threads = 0;

  void validate() const;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;  // element offset into the flat parameter buffer
  std::size_t size = 0;
};

std::vector<TensorInfo> tensor_manifest(const ModelConfig& cfg, std::size_t d_token);
std::size_t parameter_count(const ModelConfig& cfg, std::size_t d_token);

struct Checkpoint {
  ModelConfig model;
  TokenizerConfig tokenizer;
  std::size_t epoch = 0;       // completed training epochs
  std::uint64_t adam_step = 0;
  InitialEventDistribution initial_events;
  std::vector<float> params;
  std::vector<float> adam_m;
  std::vector<float> adam_v;
  std::vector<TensorInfo> manifest;

  std::span<float> tensor(std::string_view name);
  std::span<const float> tensor(std::string_view name) const;
};

// Seeded weight initialization; bit-identical for identical seeds.
Checkpoint init_model(const ModelConfig& cfg, const TokenizerConfig& tok,
                      std::uint64_t seed);

// Single versioned container: JSON header plus raw little-endian float32
// tensor data addressed by the manifest.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct HeadOutputs {
  std::size_t length = 0;
  std::size_t vocab = 0;
  bool distribution_head = true;
  std::vector<double> event_logits;   // length x vocab
  std::vector<double> arrival_mean;   // length; the bare scalar when !distribution_head
  std::vector<double> arrival_sigma;  // length; empty when !distribution_head
  std::vector<double> stop_logits;    // length x 2
};

// Causal forward pass over an encoded stream (length <= max_context).
HeadOutputs forward(const Checkpoint& ckpt, const std::vector<Token>& tokens);

// Next-token targets: target at position k is token k+1; the final
// position keeps only its stop target (1). -1 marks a masked position.
struct TargetSequence {
  std::vector<int> event_target;
  std::vector<double> arrival_target;
  std::vector<int> stop_target;
};
TargetSequence targets_for(const std::vector<Token>& tokens, const TokenizerConfig& cfg);

struct LossBreakdown {
  double event = 0.0;
  double arrival = 0.0;
  double stop = 0.0;
  double total(const LossWeights& w) const {
    return w.event * event + w.arrival * arrival + w.stop * stop;
  }
};

// Per-field means over unmasked positions; cross-entropy for event/stop,
// Gaussian NLL (or squared error) for the interarrival.
LossBreakdown loss_parts(const HeadOutputs& outputs, const TargetSequence& targets);
double loss(const HeadOutputs& outputs, const TargetSequence& targets,
            const LossWeights& weights);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown parts;    // dataset means for that epoch
  double total = 0.0;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<EpochStats> history;
  std::size_t streams_used = 0;
  std::size_t streams_dropped_short = 0;  // length < 2
  std::size_t streams_dropped_long = 0;   // length > max_context
};

// Adam + teacher forcing on the mixed loss. Deterministic for a fixed seed
// regardless of thread count. Streams of length 1 or longer than
// max_context are dropped.
TrainResult train(const Checkpoint& init, const TraceDataset& dataset,
                  const TrainConfig& cfg);

// Same loop started from trained weights; optimizer state is reset.
// epochs == 0 returns the checkpoint unchanged.
TrainResult finetune(const Checkpoint& from, const TraceDataset& dataset,
                     const TrainConfig& cfg);

// Forward-only mean loss over a dataset (same stream-dropping rules).
LossBreakdown evaluate_loss(const Checkpoint& ckpt, const TraceDataset& dataset,
                            std::size_t threads = 0);

// Max relative error between analytic gradients and 64-bit central finite
// differences (step 1e-4) over every parameter.
double grad_check(const Checkpoint& ckpt, const std::vector<Token>& tokens,
                  const LossWeights& weights, double fd_step = 1e-4);

// Incremental decoding with a KV cache; step() appends one token and
// returns the head outputs at that position.
class StreamDecoder {
 public:
  explicit StreamDecoder(const Checkpoint& ckpt);
  ~StreamDecoder();
  StreamDecoder(StreamDecoder&&) noexcept;
  StreamDecoder& operator=(StreamDecoder&&) noexcept;

  struct StepOutputs {
    std::vector<double> event_logits;
    double arrival_mean = 0.0;   // bare scalar when !distribution_head
    double arrival_sigma = 0.0;  // 0 when !distribution_head
    std::array<double, 2> stop_logits{};
  };

  StepOutputs step(const Token& token);
  std::size_t length() const;
  void reset();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cpt
