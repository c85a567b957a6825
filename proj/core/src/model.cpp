#include "cpt/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "cpt/rng.hpp"
#include "json.hpp"
#include "net.hpp"

namespace cpt {

using detail::NetLayout;

void ModelConfig::validate() const {
  if (d_model == 0 || n_blocks == 0 || mlp_hidden == 0 || n_heads == 0)
    throw Error("model dimensions must be positive");
  if (d_model % n_heads != 0)
    throw Error("d_model (" + std::to_string(d_model) +
                ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
  if (max_context < 2) throw Error("max_context must be >= 2");
}

void LossWeights::validate() const {
  if (event < 0 || arrival < 0 || stop < 0)
    throw Error("loss weights must be non-negative");
  if (event == 0 && arrival == 0 && stop == 0)
    throw Error("at least one loss weight must be positive");
}

void TrainConfig::validate() const {
  if (ckpt_every < 1) throw Error("ckpt_every must be >= 1");
  if (epochs > 0 && epochs < ckpt_every)
    throw Error("epochs must be >= ckpt_every");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(adam.learning_rate > 0)) throw Error("learning rate must be positive");
  weights.validate();
}

std::vector<TensorInfo> tensor_manifest(const ModelConfig& cfg, std::size_t d_token) {
  cfg.validate();
  std::vector<TensorInfo> manifest;
  const std::size_t vocab = d_token - 3;  // d_token = 1 + V + 2
  detail::make_layout(cfg, d_token, vocab, &manifest);
  return manifest;
}

std::size_t parameter_count(const ModelConfig& cfg, std::size_t d_token) {
  const std::size_t vocab = d_token - 3;
  return detail::make_layout(cfg, d_token, vocab).total;
}

std::span<float> Checkpoint::tensor(std::string_view name) {
  for (const TensorInfo& t : manifest)
    if (t.name == name) return std::span<float>(params.data() + t.offset, t.size);
  throw Error("unknown tensor '" + std::string(name) + "'");
}

std::span<const float> Checkpoint::tensor(std::string_view name) const {
  for (const TensorInfo& t : manifest)
    if (t.name == name)
      return std::span<const float>(params.data() + t.offset, t.size);
  throw Error("unknown tensor '" + std::string(name) + "'");
}

Checkpoint init_model(const ModelConfig& cfg, const TokenizerConfig& tok,
                      std::uint64_t seed) {
  cfg.validate();
  Checkpoint ckpt;
  ckpt.model = cfg;
  ckpt.tokenizer = tok;
  ckpt.manifest = tensor_manifest(cfg, tok.d_token());
  const std::size_t total = parameter_count(cfg, tok.d_token());
  ckpt.params.assign(total, 0.0f);
  ckpt.adam_m.assign(total, 0.0f);
  ckpt.adam_v.assign(total, 0.0f);
  ckpt.initial_events.generation = tok.generation;
  ckpt.initial_events.probability.assign(tok.vocab(), 1.0 / double(tok.vocab()));

  Rng rng(seed);
  for (const TensorInfo& t : ckpt.manifest) {
    float* dst = ckpt.params.data() + t.offset;
    const bool is_matrix = t.shape.size() == 2 || t.name == "pos";
    const bool is_ln_gain = t.name.ends_with(".g");
    if (is_ln_gain) {
      for (std::size_t i = 0; i < t.size; ++i) dst[i] = 1.0f;
    } else if (is_matrix) {
      for (std::size_t i = 0; i < t.size; ++i)
        dst[i] = static_cast<float>(rng.normal() * 0.02);
    }
    // biases and layer-norm shifts stay zero
  }
  return ckpt;
}

namespace {

NetLayout layout_of(const Checkpoint& ckpt) {
  return detail::make_layout(ckpt.model, ckpt.tokenizer.d_token(),
                             ckpt.tokenizer.vocab());
}

void check_tokens(const Checkpoint& ckpt, const std::vector<Token>& tokens) {
  if (tokens.empty()) throw Error("token sequence is empty");
  if (tokens.size() > ckpt.model.max_context)
    throw Error("sequence length " + std::to_string(tokens.size()) +
                " exceeds max_context " + std::to_string(ckpt.model.max_context));
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i].size() != ckpt.tokenizer.d_token())
      throw Error("token " + std::to_string(i) + " has the wrong dimension");
}

}  // namespace

HeadOutputs forward(const Checkpoint& ckpt, const std::vector<Token>& tokens) {
  check_tokens(ckpt, tokens);
  const NetLayout lay = layout_of(ckpt);
  detail::NetActs<float> acts;
  detail::net_forward(ckpt.params.data(), lay, tokens, acts);
  return detail::head_outputs_from_acts(lay, acts, ckpt.model.distribution_head);
}

TargetSequence targets_for(const std::vector<Token>& tokens,
                           const TokenizerConfig& cfg) {
  if (tokens.empty()) throw Error("cannot build targets for an empty sequence");
  const std::size_t n = tokens.size();
  TargetSequence t;
  t.event_target.assign(n, -1);
  t.arrival_target.assign(n, 0.0);
  t.stop_target.assign(n, 0);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const TokenFields next = read_token(tokens[k + 1], cfg, k + 1);
    t.event_target[k] = static_cast<int>(next.type);
    t.arrival_target[k] = next.scaled_interarrival;
    t.stop_target[k] = next.stop ? 1 : 0;
  }
  t.stop_target[n - 1] = 1;  // the stop=1 token is its own final target
  return t;
}

LossBreakdown loss_parts(const HeadOutputs& out, const TargetSequence& tgt) {
  const std::size_t L = out.length, V = out.vocab;
  if (tgt.event_target.size() != L || tgt.stop_target.size() != L)
    throw Error("targets are not aligned with the outputs");
  LossBreakdown parts;
  std::size_t masked_n = 0;
  for (std::size_t l = 0; l < L; ++l) {
    if (tgt.event_target[l] >= 0) {
      ++masked_n;
      const double* logits = out.event_logits.data() + l * V;
      double mx = logits[0];
      for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, logits[v]);
      double z = 0;
      for (std::size_t v = 0; v < V; ++v) z += std::exp(logits[v] - mx);
      parts.event += mx + std::log(z) - logits[tgt.event_target[l]];

      const double x = tgt.arrival_target[l];
      if (out.distribution_head) {
        const double sigma = out.arrival_sigma[l];
        if (!(sigma > 0.0))
          throw Error("arrival sigma must be strictly positive");
        const double zz = (x - out.arrival_mean[l]) / sigma;
        parts.arrival += 0.5 * std::log(2.0 * 3.141592653589793238462643383279502884) +
                         std::log(sigma) + 0.5 * zz * zz;
      } else {
        const double diff = out.arrival_mean[l] - x;
        parts.arrival += diff * diff;
      }
    }
    const double a = out.stop_logits[l * 2], b = out.stop_logits[l * 2 + 1];
    const double mx = std::max(a, b);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    parts.stop += lse - (tgt.stop_target[l] == 1 ? b : a);
  }
  if (masked_n > 0) {
    parts.event /= double(masked_n);
    parts.arrival /= double(masked_n);
  }
  parts.stop /= double(L);
  return parts;
}

double loss(const HeadOutputs& out, const TargetSequence& tgt,
            const LossWeights& w) {
  w.validate();
  return loss_parts(out, tgt).total(w);
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic, u64 header length, JSON header, raw float32.

namespace {

constexpr char kMagic[8] = {'C', 'P', 'T', 'C', 'K', 'P', 'T', '1'};

nlohmann::json model_config_json(const ModelConfig& m) {
  return {{"d_model", m.d_model},       {"n_blocks", m.n_blocks},
          {"mlp_hidden", m.mlp_hidden}, {"n_heads", m.n_heads},
          {"max_context", m.max_context},
          {"distribution_head", m.distribution_head}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.d_model = j.at("d_model").get<std::size_t>();
  m.n_blocks = j.at("n_blocks").get<std::size_t>();
  m.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  m.n_heads = j.at("n_heads").get<std::size_t>();
  m.max_context = j.at("max_context").get<std::size_t>();
  m.distribution_head = j.at("distribution_head").get<bool>();
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = "cpt-ckpt-v1";
  header["model"] = model_config_json(ckpt.model);
  header["tokenizer"] = {
      {"generation", std::string(generation_name(ckpt.tokenizer.generation))},
      {"scaler_min", ckpt.tokenizer.scaler_min},
      {"scaler_max", ckpt.tokenizer.scaler_max}};
  header["epoch"] = ckpt.epoch;
  header["adam_step"] = ckpt.adam_step;
  nlohmann::json init = nlohmann::json::object();
  for (std::size_t i = 0; i < ckpt.initial_events.probability.size(); ++i)
    init[std::string(event_name(ckpt.tokenizer.generation,
                                static_cast<EventKind>(i)))] =
        ckpt.initial_events.probability[i];
  header["initial_event_distribution"] = std::move(init);

  // Data section: parameters tensor-by-tensor, then optimizer moments.
  nlohmann::json tensors = nlohmann::json::array();
  for (const TensorInfo& t : ckpt.manifest)
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"offset", t.offset * sizeof(float)}});
  const std::size_t n = ckpt.params.size();
  tensors.push_back({{"name", "adam.m"},
                     {"shape", {n}},
                     {"offset", n * sizeof(float)}});
  tensors.push_back({{"name", "adam.v"},
                     {"shape", {n}},
                     {"offset", 2 * n * sizeof(float)}});
  header["tensors"] = std::move(tensors);

  const std::string hdr = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = hdr.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  auto write_floats = [&](const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  };
  write_floats(ckpt.params);
  write_floats(ckpt.adam_m);
  write_floats(ckpt.adam_v);
  out.flush();
  if (!out) throw Error("I/O failure while writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error("'" + path.string() + "' is not a checkpoint file");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen > (1ull << 30)) throw Error("corrupt checkpoint header");
  std::string hdr(hlen, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw Error("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint header parse error: ") + e.what());
  }
  try {
    if (header.value("format", "") != "cpt-ckpt-v1")
      throw Error("unsupported checkpoint format tag");
    Checkpoint ckpt;
    ckpt.model = model_config_from_json(header.at("model"));
    ckpt.tokenizer.generation =
        parse_generation(header.at("tokenizer").at("generation").get<std::string>());
    ckpt.tokenizer.scaler_min = header.at("tokenizer").at("scaler_min").get<double>();
    ckpt.tokenizer.scaler_max = header.at("tokenizer").at("scaler_max").get<double>();
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.adam_step = header.at("adam_step").get<std::uint64_t>();
    ckpt.initial_events.generation = ckpt.tokenizer.generation;
    ckpt.initial_events.probability.assign(ckpt.tokenizer.vocab(), 0.0);
    for (const auto& [name, p] :
         header.at("initial_event_distribution").items()) {
      const EventKind k = parse_event(ckpt.tokenizer.generation, name);
      ckpt.initial_events.probability[static_cast<std::size_t>(k)] = p.get<double>();
    }

    ckpt.manifest = tensor_manifest(ckpt.model, ckpt.tokenizer.d_token());
    const std::size_t n = parameter_count(ckpt.model, ckpt.tokenizer.d_token());

    // Validate the stored manifest against the expected layout.
    const auto& tensors = header.at("tensors");
    if (tensors.size() != ckpt.manifest.size() + 2)
      throw Error("checkpoint tensor manifest does not match the model config");
    for (std::size_t i = 0; i < ckpt.manifest.size(); ++i) {
      const auto& t = tensors[i];
      if (t.at("name").get<std::string>() != ckpt.manifest[i].name ||
          t.at("shape").get<std::vector<std::size_t>>() != ckpt.manifest[i].shape ||
          t.at("offset").get<std::size_t>() != ckpt.manifest[i].offset * sizeof(float))
        throw Error("checkpoint tensor '" + ckpt.manifest[i].name +
                    "' does not match the expected layout");
    }

    ckpt.params.resize(n);
    ckpt.adam_m.resize(n);
    ckpt.adam_v.resize(n);
    auto read_floats = [&](std::vector<float>& v) {
      in.read(reinterpret_cast<char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
    };
    read_floats(ckpt.params);
    read_floats(ckpt.adam_m);
    read_floats(ckpt.adam_v);
    if (!in) throw Error("truncated checkpoint tensor data");
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint header schema error: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Gradient oracle: analytic backward vs central finite differences, both in
// 64-bit precision.

double grad_check(const Checkpoint& ckpt, const std::vector<Token>& tokens,
                  const LossWeights& weights, double fd_step) {
  check_tokens(ckpt, tokens);
  weights.validate();
  if (tokens.size() < 2)
    throw Error("grad_check needs a sequence of length >= 2");
  const NetLayout lay = layout_of(ckpt);
  std::vector<double> p(ckpt.params.begin(), ckpt.params.end());
  const TargetSequence tgt = targets_for(tokens, ckpt.tokenizer);

  const auto masked = static_cast<double>(tokens.size() - 1);
  const auto total = static_cast<double>(tokens.size());
  detail::LossScales scales{weights.event / masked, weights.arrival / masked,
                            weights.stop / total};

  detail::NetActs<double> acts;
  detail::net_forward(p.data(), lay, tokens, acts);
  std::vector<double> grad(p.size(), 0.0);
  detail::BackwardArena<double> arena;
  detail::net_backward(p.data(), lay, tokens, tgt, acts,
                       ckpt.model.distribution_head, scales, grad.data(), arena);

  auto loss_at = [&](std::vector<double>& params) {
    detail::net_forward(params.data(), lay, tokens, acts);
    const HeadOutputs out =
        detail::head_outputs_from_acts(lay, acts, ckpt.model.distribution_head);
    return loss(out, tgt, weights);
  };

  double max_rel = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + fd_step;
    const double up = loss_at(p);
    p[i] = saved - fd_step;
    const double down = loss_at(p);
    p[i] = saved;
    const double fd = (up - down) / (2.0 * fd_step);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    max_rel = std::max(max_rel, std::abs(fd - grad[i]) / denom);
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Incremental decoding with cached keys/values.

struct StreamDecoder::Impl {
  Checkpoint ckpt;  // owned copy so the decoder can outlive the source
  NetLayout lay;
  std::size_t len = 0;
  std::vector<std::vector<float>> kcache, vcache;  // per block, len*d
  std::vector<float> x, row, q, concat, scratch;

  explicit Impl(const Checkpoint& c) : ckpt(c), lay(layout_of(c)) {
    kcache.assign(lay.n_blocks, {});
    vcache.assign(lay.n_blocks, {});
    for (auto& k : kcache) k.reserve(lay.max_context * lay.d_model);
    for (auto& v : vcache) v.reserve(lay.max_context * lay.d_model);
    x.resize(lay.d_model);
    row.resize(std::max(lay.d_model, lay.mlp_hidden));
    q.resize(lay.d_model);
    concat.resize(lay.d_model);
    scratch.resize(std::max(lay.mlp_hidden, lay.max_context));
  }

  StepOutputs step(const Token& token) {
    if (len >= lay.max_context)
      throw Error("decoder exceeded max_context " + std::to_string(lay.max_context));
    if (token.size() != lay.d_token)
      throw Error("decoder token has the wrong dimension");
    const float* p = ckpt.params.data();
    const std::size_t d = lay.d_model, f = lay.mlp_hidden;
    const std::size_t H = lay.n_heads, dh = lay.head_dim;
    const std::size_t l = len;

    detail::linear_forward(p + lay.embed_w, p + lay.embed_b, token.data(),
                           x.data(), d, lay.d_token);
    detail::axpy(1.0f, p + lay.pos + l * d, x.data(), d);

    const float scale = 1.0f / std::sqrt(float(dh));
    float rstd = 0.0f;
    std::vector<float> nhat(d), xmid(d);
    for (std::size_t b = 0; b < lay.n_blocks; ++b) {
      const auto& pb = lay.blocks[b];
      detail::layernorm_row(x.data(), p + pb.ln1_g, p + pb.ln1_b, d, nhat.data(),
                            &rstd, row.data());
      auto& kc = kcache[b];
      auto& vc = vcache[b];
      kc.resize((l + 1) * d);
      vc.resize((l + 1) * d);
      detail::linear_forward(p + pb.wq, p + pb.bq, row.data(), q.data(), d, d);
      detail::linear_forward(p + pb.wk, p + pb.bk, row.data(), kc.data() + l * d,
                             d, d);
      detail::linear_forward(p + pb.wv, p + pb.bv, row.data(), vc.data() + l * d,
                             d, d);

      for (std::size_t h = 0; h < H; ++h) {
        float* s = scratch.data();
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j <= l; ++j) {
          s[j] = detail::dot(q.data() + h * dh, kc.data() + j * d + h * dh, dh) *
                 scale;
          mx = std::max(mx, s[j]);
        }
        float sum = 0.0f;
        for (std::size_t j = 0; j <= l; ++j) {
          s[j] = std::exp(s[j] - mx);
          sum += s[j];
        }
        const float inv = 1.0f / sum;
        float* orow = concat.data() + h * dh;
        for (std::size_t c = 0; c < dh; ++c) orow[c] = 0.0f;
        for (std::size_t j = 0; j <= l; ++j)
          detail::axpy(s[j] * inv, vc.data() + j * d + h * dh, orow, dh);
      }

      detail::linear_forward(p + pb.wo, p + pb.bo, concat.data(), xmid.data(), d,
                             d);
      detail::axpy(1.0f, x.data(), xmid.data(), d);

      detail::layernorm_row(xmid.data(), p + pb.ln2_g, p + pb.ln2_b, d,
                            nhat.data(), &rstd, row.data());
      std::vector<float>& h_act = scratch;
      detail::linear_forward(p + pb.w1, p + pb.b1, row.data(), h_act.data(), f, d);
      for (std::size_t i = 0; i < f; ++i) h_act[i] = detail::gelu(h_act[i]);
      detail::linear_forward(p + pb.w2, p + pb.b2, h_act.data(), x.data(), d, f);
      detail::axpy(1.0f, xmid.data(), x.data(), d);
    }

    detail::layernorm_row(x.data(), p + lay.lnf_g, p + lay.lnf_b, d, nhat.data(),
                          &rstd, row.data());
    StepOutputs out;
    std::vector<float> logits(std::max(lay.vocab, std::size_t(2)));
    detail::linear_forward(p + lay.ev_w, p + lay.ev_b, row.data(), logits.data(),
                           lay.vocab, d);
    out.event_logits.assign(logits.begin(), logits.begin() + lay.vocab);
    float arr[2] = {0.0f, 0.0f};
    detail::linear_forward(p + lay.ar_w, p + lay.ar_b, row.data(), arr,
                           lay.arr_dim, d);
    if (ckpt.model.distribution_head) {
      out.arrival_mean = arr[0];
      out.arrival_sigma = detail::softplus(double(arr[1])) + detail::kSigmaFloor;
    } else {
      out.arrival_mean = arr[0];
      out.arrival_sigma = 0.0;
    }
    detail::linear_forward(p + lay.st_w, p + lay.st_b, row.data(), logits.data(),
                           2, d);
    out.stop_logits = {double(logits[0]), double(logits[1])};
    ++len;
    return out;
  }
};

StreamDecoder::StreamDecoder(const Checkpoint& ckpt)
    : impl_(std::make_unique<Impl>(ckpt)) {}
StreamDecoder::~StreamDecoder() = default;
StreamDecoder::StreamDecoder(StreamDecoder&&) noexcept = default;
StreamDecoder& StreamDecoder::operator=(StreamDecoder&&) noexcept = default;

StreamDecoder::StepOutputs StreamDecoder::step(const Token& token) {
  return impl_->step(token);
}

std::size_t StreamDecoder::length() const { return impl_->len; }

void StreamDecoder::reset() {
  impl_->len = 0;
  for (auto& k : impl_->kcache) k.clear();
  for (auto& v : impl_->vcache) v.clear();
}

}  // namespace cpt
