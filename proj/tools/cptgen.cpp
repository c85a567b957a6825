// cptgen: synthesize cellular control-plane traffic and score it against
// reference traces. Subcommands cover the whole workflow: simulate (SMM
// ground truth), fit-smm, train, finetune, generate, evaluate, memcheck,
// gradcheck, select-checkpoint.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cpt/fidelity.hpp"
#include "cpt/generator.hpp"
#include "cpt/model.hpp"
#include "cpt/rng.hpp"
#include "cpt/selection.hpp"
#include "cpt/smm.hpp"
#include "cpt/state_machine.hpp"
#include "cpt/tokenizer.hpp"
#include "cpt/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ToolConfig {
  cpt::ModelConfig model;
  cpt::TrainConfig train;
};

json config_to_json(const ToolConfig& c) {
  json j;
  j["model"] = {{"d_model", c.model.d_model},
                {"n_blocks", c.model.n_blocks},
                {"mlp_hidden", c.model.mlp_hidden},
                {"n_heads", c.model.n_heads},
                {"max_context", c.model.max_context},
                {"distribution_head", c.model.distribution_head}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.adam.learning_rate},
                {"adam_beta1", c.train.adam.beta1},
                {"adam_beta2", c.train.adam.beta2},
                {"adam_eps", c.train.adam.eps},
                {"ckpt_every", c.train.ckpt_every},
                {"seed", c.train.seed},
                {"loss_weights",
                 {{"event", c.train.weights.event},
                  {"arrival", c.train.weights.arrival},
                  {"stop", c.train.weights.stop}}},
                {"threads", c.train.threads}};
  return j;
}

// Strict schema: unknown keys are rejected so typos fail before training.
void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw cpt::Error("config: unknown key '" + key + "' in " + where);
  }
}

ToolConfig load_config(const fs::path& path) {
  ToolConfig c;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw cpt::Error("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw cpt::Error("config parse error in '" + path.string() + "': " + e.what());
  }
  try {
    check_keys(j, {"model", "train"}, "top level");
    if (j.contains("model")) {
      const json& m = j["model"];
      check_keys(m,
                 {"d_model", "n_blocks", "mlp_hidden", "n_heads", "max_context",
                  "distribution_head"},
                 "model");
      c.model.d_model = m.value("d_model", c.model.d_model);
      c.model.n_blocks = m.value("n_blocks", c.model.n_blocks);
      c.model.mlp_hidden = m.value("mlp_hidden", c.model.mlp_hidden);
      c.model.n_heads = m.value("n_heads", c.model.n_heads);
      c.model.max_context = m.value("max_context", c.model.max_context);
      c.model.distribution_head =
          m.value("distribution_head", c.model.distribution_head);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      check_keys(t,
                 {"epochs", "batch_size", "learning_rate", "adam_beta1",
                  "adam_beta2", "adam_eps", "ckpt_every", "seed", "loss_weights",
                  "threads"},
                 "train");
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.adam.learning_rate =
          t.value("learning_rate", c.train.adam.learning_rate);
      c.train.adam.beta1 = t.value("adam_beta1", c.train.adam.beta1);
      c.train.adam.beta2 = t.value("adam_beta2", c.train.adam.beta2);
      c.train.adam.eps = t.value("adam_eps", c.train.adam.eps);
      c.train.ckpt_every = t.value("ckpt_every", c.train.ckpt_every);
      c.train.seed = t.value("seed", c.train.seed);
      c.train.threads = t.value("threads", c.train.threads);
      if (t.contains("loss_weights")) {
        const json& w = t["loss_weights"];
        check_keys(w, {"event", "arrival", "stop"}, "loss_weights");
        c.train.weights.event = w.value("event", c.train.weights.event);
        c.train.weights.arrival = w.value("arrival", c.train.weights.arrival);
        c.train.weights.stop = w.value("stop", c.train.weights.stop);
      }
    }
  } catch (const json::exception& e) {
    throw cpt::Error("config schema error in '" + path.string() + "': " + e.what());
  }
  c.model.validate();
  c.train.validate();
  return c;
}

cpt::LossWeights parse_weights(const std::string& spec) {
  cpt::LossWeights w;
  std::istringstream is(spec);
  std::string part;
  double* slots[3] = {&w.event, &w.arrival, &w.stop};
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(is, part, ':'))
      throw cpt::Error("--weights expects event:arrival:stop, got '" + spec + "'");
    *slots[i] = std::stod(part);
  }
  w.validate();
  return w;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw cpt::Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw cpt::Error("I/O failure while writing '" + path.string() + "'");
}

std::string train_log_json(const cpt::TrainResult& result) {
  json j;
  j["streams_used"] = result.streams_used;
  j["streams_dropped_short"] = result.streams_dropped_short;
  j["streams_dropped_long"] = result.streams_dropped_long;
  json hist = json::array();
  for (const cpt::EpochStats& e : result.history)
    hist.push_back({{"epoch", e.epoch},
                    {"event", e.parts.event},
                    {"arrival", e.parts.arrival},
                    {"stop", e.parts.stop},
                    {"total", e.total}});
  j["epochs"] = std::move(hist);
  return j.dump(2) + "\n";
}

std::vector<cpt::Checkpoint> save_train_outputs(const cpt::TrainResult& result,
                                                const fs::path& out_dir) {
  fs::create_directories(out_dir);
  char name[64];
  for (const cpt::Checkpoint& c : result.checkpoints) {
    std::snprintf(name, sizeof(name), "ckpt_epoch_%04zu.bin", c.epoch);
    cpt::save_checkpoint(c, out_dir / name);
  }
  write_text(out_dir / "train_log.json", train_log_json(result));
  return result.checkpoints;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"control-plane traffic synthesis and evaluation"};
  app.require_subcommand(1);

  std::string gen_str = "4g";
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  std::string device = "phone";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "RNG seed; all stochasticity derives from it")
        ->envname("CPTGEN_SEED");
    cmd->add_option("--threads", threads,
                    "worker threads (0 = all cores); never changes results")
        ->envname("CPTGEN_THREADS");
  };

  // --- simulate ---------------------------------------------------------
  auto* sim = app.add_subcommand(
      "simulate", "generate a trace from a semi-Markov model spec");
  std::string sim_smm, sim_out;
  std::size_t sim_n = 1000, sim_max_len = 500;
  sim->add_option("--smm", sim_smm, "SMM spec/model JSON")->required();
  sim->add_option("--n", sim_n, "number of streams");
  sim->add_option("--out", sim_out, "output trace (JSONL)")->required();
  sim->add_option("--max-len", sim_max_len, "hard stream-length cap");
  sim->add_option("--device-type", device, "phone|connected_car|tablet");
  add_common(sim);

  // --- fit-smm ----------------------------------------------------------
  auto* fit = app.add_subcommand("fit-smm", "fit a semi-Markov model on a trace");
  std::string fit_trace, fit_out;
  fit->add_option("--trace", fit_trace, "input trace (JSONL)")->required();
  fit->add_option("--gen", gen_str, "4g|5g")->envname("CPTGEN_GEN");
  fit->add_option("--out", fit_out, "output model JSON")->required();

  // --- show-smm ---------------------------------------------------------
  auto* show = app.add_subcommand("show-smm", "print a fitted SMM readably");
  std::string show_model;
  show->add_option("--model", show_model, "SMM JSON")->required();

  // --- state-machine ----------------------------------------------------
  auto* sm = app.add_subcommand("state-machine",
                                "print the UE state machine transition table");
  std::string sm_out;
  sm->add_option("--gen", gen_str, "4g|5g")->envname("CPTGEN_GEN");
  sm->add_option("--out", sm_out, "write the table to a file instead of stdout");

  // --- train / finetune -------------------------------------------------
  std::string tr_trace, tr_config, tr_out, tr_weights, ft_ckpt;
  std::size_t tr_epochs = 0, tr_ckpt_every = 0, tr_batch = 0;
  double tr_lr = 0.0;
  bool tr_no_dist = false;
  auto add_train_opts = [&](CLI::App* cmd) {
    cmd->add_option("--trace", tr_trace, "training trace (JSONL)")->required();
    cmd->add_option("--config", tr_config, "model/train config JSON")
        ->envname("CPTGEN_CONFIG");
    cmd->add_option("--out", tr_out, "checkpoint output directory")->required();
    cmd->add_option("--epochs", tr_epochs, "override config epochs");
    cmd->add_option("--ckpt-every", tr_ckpt_every, "override checkpoint interval");
    cmd->add_option("--batch", tr_batch, "override batch size");
    cmd->add_option("--lr", tr_lr, "override learning rate");
    cmd->add_option("--weights", tr_weights, "loss weights event:arrival:stop");
    cmd->add_flag("--no-dist-head", tr_no_dist,
                  "predict a bare interarrival scalar instead of (mean, std)");
    add_common(cmd);
  };
  auto* tr = app.add_subcommand("train", "train a model from scratch");
  tr->add_option("--gen", gen_str, "4g|5g")->envname("CPTGEN_GEN");
  add_train_opts(tr);
  auto* ft = app.add_subcommand("finetune", "continue training from a checkpoint");
  ft->add_option("--ckpt", ft_ckpt, "starting checkpoint")->required();
  add_train_opts(ft);

  // --- generate ----------------------------------------------------------
  auto* gn = app.add_subcommand("generate", "synthesize streams from a checkpoint");
  std::string gn_ckpt, gn_out;
  std::size_t gn_n = 1000, gn_max_len = 0;
  double gn_temp = 1.0;
  gn->add_option("--ckpt", gn_ckpt, "trained checkpoint")->required();
  gn->add_option("--n", gn_n, "number of streams");
  gn->add_option("--out", gn_out, "output trace (JSONL)")->required();
  gn->add_option("--max-len", gn_max_len, "length cap (0 = model max_context)");
  gn->add_option("--temperature", gn_temp, "sampling temperature");
  gn->add_option("--device-type", device, "phone|connected_car|tablet");
  add_common(gn);

  // --- evaluate ----------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate",
                                "fidelity report of a synthesized trace");
  std::string ev_real, ev_synth, ev_out, ev_format = "json";
  std::vector<std::string> ev_memo;
  ev->add_option("--real", ev_real, "reference trace (JSONL)")->required();
  ev->add_option("--synth", ev_synth, "synthesized trace (JSONL)")->required();
  ev->add_option("--gen", gen_str, "4g|5g")->envname("CPTGEN_GEN");
  ev->add_option("--out", ev_out, "write the report to a file");
  ev->add_option("--format", ev_format, "json|table")->envname("CPTGEN_FORMAT");
  ev->add_option("--memo", ev_memo,
                 "memorization audits as n:epsilon (repeatable)");

  // --- memcheck ----------------------------------------------------------
  auto* mc = app.add_subcommand("memcheck", "n-gram memorization audit");
  std::string mc_real, mc_synth;
  std::size_t mc_n = 20;
  double mc_eps = 0.1;
  mc->add_option("--real", mc_real, "reference trace (JSONL)")->required();
  mc->add_option("--synth", mc_synth, "synthesized trace (JSONL)")->required();
  mc->add_option("--gen", gen_str, "4g|5g")->envname("CPTGEN_GEN");
  mc->add_option("--n", mc_n, "n-gram length");
  mc->add_option("--eps", mc_eps, "relative interarrival tolerance");

  // --- gradcheck ----------------------------------------------------------
  auto* gc = app.add_subcommand(
      "gradcheck", "verify analytic gradients against finite differences");
  std::size_t gc_d_model = 16, gc_blocks = 1, gc_heads = 2, gc_hidden = 32;
  std::size_t gc_ctx = 16, gc_len = 8;
  bool gc_no_dist = false;
  gc->add_option("--d-model", gc_d_model, "embedding width");
  gc->add_option("--blocks", gc_blocks, "attention blocks");
  gc->add_option("--heads", gc_heads, "attention heads");
  gc->add_option("--mlp-hidden", gc_hidden, "feed-forward width");
  gc->add_option("--max-context", gc_ctx, "positional table length");
  gc->add_option("--len", gc_len, "probe sequence length");
  gc->add_option("--gen", gen_str, "4g|5g")->envname("CPTGEN_GEN");
  gc->add_flag("--no-dist-head", gc_no_dist, "check the scalar-head variant");
  add_common(gc);

  // --- select-checkpoint ---------------------------------------------------
  auto* sel = app.add_subcommand(
      "select-checkpoint", "rank checkpoints on fidelity and pick one");
  std::string sel_dir, sel_val, sel_out;
  std::size_t sel_sample = 1000;
  sel->add_option("--ckpt-dir", sel_dir, "directory of ckpt_epoch_*.bin")
      ->required();
  sel->add_option("--validation", sel_val, "validation trace (JSONL)")->required();
  sel->add_option("--out", sel_out, "where to copy the selected checkpoint")
      ->required();
  sel->add_option("--sample-n", sel_sample, "streams generated per checkpoint");
  sel->add_option("--device-type", device, "phone|connected_car|tablet");
  add_common(sel);

  // --- print-config ---------------------------------------------------------
  auto* pc = app.add_subcommand("print-config",
                                "dump the default model/train config JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    const cpt::Generation gen = cpt::parse_generation(gen_str);

    if (*sim) {
      const cpt::SemiMarkovModel model = cpt::load_smm(sim_smm);
      const cpt::StateMachineDef def = cpt::build_state_machine(model.generation);
      const cpt::TraceDataset ds =
          cpt::generate_smm(model, def, sim_n, sim_max_len, seed,
                            cpt::parse_device_type(device));
      cpt::save_trace(ds, sim_out);
      std::cerr << "simulate: wrote " << ds.streams.size() << " streams to "
                << sim_out << "\n";
    } else if (*fit) {
      const cpt::TraceDataset ds = cpt::load_trace(fit_trace, gen);
      const cpt::StateMachineDef def = cpt::build_state_machine(gen);
      const cpt::SemiMarkovModel model = cpt::fit_smm(ds, def);
      cpt::save_smm(model, fit_out);
      std::cerr << "fit-smm: wrote " << fit_out << "\n";
      for (std::size_t s : model.uniform_fallback_states)
        std::cerr << "fit-smm: state " << cpt::state_name(def.state_at(s))
                  << " had no observations; uniform fallback\n";
    } else if (*show) {
      const cpt::SemiMarkovModel model = cpt::load_smm(show_model);
      const cpt::StateMachineDef def = cpt::build_state_machine(model.generation);
      std::cout << cpt::smm_report(model, def);
    } else if (*sm) {
      const std::string table = cpt::build_state_machine(gen).table_report();
      if (sm_out.empty())
        std::cout << table;
      else
        write_text(sm_out, table);
    } else if (*tr || *ft) {
      ToolConfig cfg = load_config(tr_config.empty() ? fs::path() : fs::path(tr_config));
      if (tr_epochs > 0) cfg.train.epochs = tr_epochs;
      if (tr_ckpt_every > 0) cfg.train.ckpt_every = tr_ckpt_every;
      if (tr_batch > 0) cfg.train.batch_size = tr_batch;
      if (tr_lr > 0) cfg.train.adam.learning_rate = tr_lr;
      if (!tr_weights.empty()) cfg.train.weights = parse_weights(tr_weights);
      if (tr_no_dist) cfg.model.distribution_head = false;
      CLI::App* active = *tr ? static_cast<CLI::App*>(tr) : static_cast<CLI::App*>(ft);
      if (active->count("--seed")) cfg.train.seed = seed;
      cfg.train.threads = threads;
      cfg.train.validate();

      cpt::TrainResult result;
      if (*tr) {
        const cpt::TraceDataset ds = cpt::load_trace(tr_trace, gen);
        const cpt::TokenizerConfig tok = cpt::fit_scaler(ds);
        const cpt::Checkpoint init =
            cpt::init_model(cfg.model, tok, cpt::derive_seed(cfg.train.seed, 0x11));
        result = cpt::train(init, ds, cfg.train);
      } else {
        const cpt::Checkpoint from = cpt::load_checkpoint(ft_ckpt);
        const cpt::TraceDataset ds =
            cpt::load_trace(tr_trace, from.tokenizer.generation);
        result = cpt::finetune(from, ds, cfg.train);
      }
      save_train_outputs(result, tr_out);
      std::cerr << (*tr ? "train" : "finetune") << ": " << result.checkpoints.size()
                << " checkpoints in " << tr_out << " (streams used "
                << result.streams_used << ", dropped "
                << result.streams_dropped_short << " short / "
                << result.streams_dropped_long << " long)\n";
      if (!result.history.empty())
        std::cerr << "final loss " << result.history.back().total << "\n";
    } else if (*gn) {
      const cpt::Checkpoint ckpt = cpt::load_checkpoint(gn_ckpt);
      cpt::GenerateOptions opts;
      opts.max_len = gn_max_len;
      opts.temperature = gn_temp;
      opts.device_type = cpt::parse_device_type(device);
      opts.threads = threads;
      const cpt::TraceDataset ds = cpt::generate_dataset(ckpt, gn_n, seed, opts);
      cpt::save_trace(ds, gn_out);
      std::cerr << "generate: wrote " << ds.streams.size() << " streams to "
                << gn_out << "\n";
    } else if (*ev) {
      const cpt::TraceDataset real = cpt::load_trace(ev_real, gen);
      const cpt::TraceDataset synth = cpt::load_trace(ev_synth, gen);
      std::vector<cpt::MemorizationParams> memo;
      for (const std::string& m : ev_memo) {
        const auto colon = m.find(':');
        if (colon == std::string::npos)
          throw cpt::Error("--memo expects n:epsilon, got '" + m + "'");
        memo.push_back({std::stoul(m.substr(0, colon)),
                        std::stod(m.substr(colon + 1))});
      }
      const cpt::FidelityReport rep =
          cpt::full_report(real, synth, cpt::build_state_machine(gen), memo);
      std::string text;
      if (ev_format == "json")
        text = cpt::report_to_json(rep);
      else if (ev_format == "table")
        text = cpt::report_to_table(rep);
      else
        throw cpt::Error("--format must be json or table");
      if (ev_out.empty())
        std::cout << text;
      else
        write_text(ev_out, text);
    } else if (*mc) {
      const cpt::TraceDataset real = cpt::load_trace(mc_real, gen);
      const cpt::TraceDataset synth = cpt::load_trace(mc_synth, gen);
      const double frac = cpt::memorization(real, synth, mc_n, mc_eps);
      json j{{"n", mc_n}, {"epsilon", mc_eps}, {"repeated_fraction", frac}};
      std::cout << j.dump() << "\n";
    } else if (*gc) {
      cpt::ModelConfig mc_cfg;
      mc_cfg.d_model = gc_d_model;
      mc_cfg.n_blocks = gc_blocks;
      mc_cfg.n_heads = gc_heads;
      mc_cfg.mlp_hidden = gc_hidden;
      mc_cfg.max_context = gc_ctx;
      mc_cfg.distribution_head = !gc_no_dist;
      cpt::TokenizerConfig tok;
      tok.generation = gen;
      tok.scaler_min = 0.0;
      tok.scaler_max = 1.0;
      const cpt::Checkpoint ckpt =
          cpt::init_model(mc_cfg, tok, cpt::derive_seed(seed, 0x11));
      cpt::Rng rng(cpt::derive_seed(seed, 0x22));
      std::vector<cpt::Token> tokens;
      for (std::size_t i = 0; i < gc_len; ++i) {
        const auto kind = static_cast<cpt::EventKind>(
            std::size_t(rng.uniform() * double(cpt::vocab_size(gen))));
        tokens.push_back(cpt::make_token(i == 0 ? 0.0 : rng.uniform(), kind,
                                         i + 1 == gc_len, tok));
      }
      const double err = cpt::grad_check(ckpt, tokens, cpt::LossWeights{});
      json j{{"max_relative_error", err}, {"parameters", ckpt.params.size()}};
      std::cout << j.dump() << "\n";
      if (err >= 1e-4) {
        std::cerr << "gradcheck: FAILED (max relative error " << err << ")\n";
        return 1;
      }
      std::cerr << "gradcheck: ok (max relative error " << err << ")\n";
    } else if (*sel) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(sel_dir)) {
        const std::string name = e.path().filename().string();
        if (name.starts_with("ckpt_") && name.ends_with(".bin"))
          files.push_back(e.path());
      }
      if (files.empty())
        throw cpt::Error("no ckpt_*.bin files in '" + sel_dir + "'");
      std::sort(files.begin(), files.end());
      std::vector<cpt::Checkpoint> ckpts;
      ckpts.reserve(files.size());
      for (const fs::path& f : files) ckpts.push_back(cpt::load_checkpoint(f));
      const cpt::TraceDataset val =
          cpt::load_trace(sel_val, ckpts.front().tokenizer.generation);
      cpt::SelectionOptions opts;
      opts.sample_streams = sel_sample;
      opts.seed = seed;
      opts.device_type = cpt::parse_device_type(device);
      opts.threads = threads;
      const cpt::SelectionResult res = cpt::select_checkpoint(ckpts, val, opts);
      cpt::save_checkpoint(ckpts[res.selected_index], sel_out);
      std::cerr << res.table();
      std::cerr << "select-checkpoint: epoch "
                << ckpts[res.selected_index].epoch << " -> " << sel_out << "\n";
    } else if (*pc) {
      std::cout << config_to_json(ToolConfig{}).dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
