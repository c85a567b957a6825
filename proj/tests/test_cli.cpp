// End-to-end checks of the cptgen binary: every subcommand, artifact
// determinism, and error reporting. The binary path comes from CPTGEN_BIN.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cpt/smm.hpp"
#include "cpt/state_machine.hpp"
#include "cpt/trace.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace cpt;
using cpt::test::TempDir;

namespace {

int run(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd =
      std::string(CPTGEN_BIN) + " " + args + " >" + log.string() + " 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cptgen end-to-end workflow") {
  TempDir dir("cli");
  const auto d = dir.path();
  const auto log = d / "log.txt";

  // A hand-written SMM spec drives everything else.
  save_smm(cpt::test::uniform_smm(Generation::G4, 9.0), d / "smm.json");

  REQUIRE(run("simulate --smm " + (d / "smm.json").string() + " --n 80 --out " +
                  (d / "train.jsonl").string() + " --seed 1 --max-len 30",
              log) == 0);
  REQUIRE(run("simulate --smm " + (d / "smm.json").string() + " --n 40 --out " +
                  (d / "val.jsonl").string() + " --seed 2 --max-len 30",
              log) == 0);
  CHECK(load_trace(d / "train.jsonl", Generation::G4).streams.size() == 80);

  SUBCASE("fit-smm and show-smm") {
    REQUIRE(run("fit-smm --trace " + (d / "train.jsonl").string() +
                    " --gen 4g --out " + (d / "fitted.json").string(),
                log) == 0);
    const SemiMarkovModel fitted = load_smm(d / "fitted.json");
    CHECK(fitted.generation == Generation::G4);
    REQUIRE(run("show-smm --model " + (d / "fitted.json").string(), log) == 0);
    CHECK(slurp(log).find("semi-Markov model") != std::string::npos);
  }

  SUBCASE("state-machine table export") {
    REQUIRE(run("state-machine --gen 5g --out " + (d / "sm.txt").string(), log) == 0);
    CHECK(slurp(d / "sm.txt").find("AN_REL") != std::string::npos);
  }

  SUBCASE("train, generate, evaluate, select") {
    {
      std::ofstream cfg(d / "config.json");
      cfg << R"({"model":{"d_model":16,"n_blocks":1,"mlp_hidden":16,"n_heads":2,
                 "max_context":40},
                 "train":{"epochs":2,"batch_size":16,"ckpt_every":1,"seed":3}})";
    }
    REQUIRE(run("train --trace " + (d / "train.jsonl").string() + " --gen 4g" +
                    " --config " + (d / "config.json").string() + " --out " +
                    (d / "ckpts").string() + " --threads 2",
                log) == 0);
    CHECK(std::filesystem::exists(d / "ckpts" / "ckpt_epoch_0001.bin"));
    CHECK(std::filesystem::exists(d / "ckpts" / "ckpt_epoch_0002.bin"));
    const auto train_log =
        nlohmann::json::parse(slurp(d / "ckpts" / "train_log.json"));
    CHECK(train_log.at("epochs").size() == 2);

    REQUIRE(run("generate --ckpt " + (d / "ckpts" / "ckpt_epoch_0002.bin").string() +
                    " --n 25 --out " + (d / "synth.jsonl").string() + " --seed 4",
                log) == 0);
    CHECK(load_trace(d / "synth.jsonl", Generation::G4).streams.size() == 25);

    // Identical seeds must give byte-identical artifacts.
    REQUIRE(run("generate --ckpt " + (d / "ckpts" / "ckpt_epoch_0002.bin").string() +
                    " --n 25 --out " + (d / "synth2.jsonl").string() + " --seed 4",
                log) == 0);
    CHECK(slurp(d / "synth.jsonl") == slurp(d / "synth2.jsonl"));

    REQUIRE(run("evaluate --real " + (d / "train.jsonl").string() + " --synth " +
                    (d / "train.jsonl").string() + " --gen 4g --memo 3:0.1 --out " +
                    (d / "report.json").string(),
                log) == 0);
    const auto rep = nlohmann::json::parse(slurp(d / "report.json"));
    CHECK(rep.at("flow_length_max_y").at("all").get<double>() == 0.0);
    CHECK(rep.at("event_violation_rate").get<double>() == 0.0);
    CHECK(rep.at("memorization")[0].at("repeated_fraction").get<double>() == 1.0);

    REQUIRE(run("evaluate --real " + (d / "train.jsonl").string() + " --synth " +
                    (d / "synth.jsonl").string() + " --gen 4g --format table",
                log) == 0);
    CHECK(slurp(log).find("flow length") != std::string::npos);

    REQUIRE(run("select-checkpoint --ckpt-dir " + (d / "ckpts").string() +
                    " --validation " + (d / "val.jsonl").string() + " --out " +
                    (d / "best.bin").string() + " --sample-n 20 --seed 5",
                log) == 0);
    CHECK(std::filesystem::exists(d / "best.bin"));
  }

  SUBCASE("memcheck") {
    REQUIRE(run("memcheck --real " + (d / "train.jsonl").string() + " --synth " +
                    (d / "train.jsonl").string() + " --gen 4g --n 3 --eps 0.1",
                log) == 0);
    const auto out = nlohmann::json::parse(slurp(log));
    CHECK(out.at("repeated_fraction").get<double>() == 1.0);
  }

  SUBCASE("gradcheck") {
    REQUIRE(run("gradcheck --seed 6", log) == 0);
    CHECK(slurp(log).find("max_relative_error") != std::string::npos);
  }

  SUBCASE("print-config emits valid JSON with the documented defaults") {
    REQUIRE(run("print-config", log) == 0);
    const auto cfg = nlohmann::json::parse(slurp(log));
    CHECK(cfg.at("model").at("d_model").get<int>() == 128);
    CHECK(cfg.at("model").at("max_context").get<int>() == 500);
    CHECK(cfg.at("train").at("learning_rate").get<double>() == 3e-4);
  }

  SUBCASE("errors are reported with actionable messages") {
    CHECK(run("simulate --smm " + (d / "missing.json").string() + " --n 5 --out " +
                  (d / "x.jsonl").string(),
              log) != 0);
    CHECK(slurp(log).find("error:") != std::string::npos);
    CHECK(run("evaluate --real nope.jsonl --synth nope.jsonl --gen 4g", log) != 0);
    CHECK(run("train --bogus-flag 1", log) != 0);
    {
      std::ofstream cfg(d / "bad.json");
      cfg << R"({"model":{"d_modle":16}})";  // typo must be caught
    }
    CHECK(run("train --trace " + (d / "train.jsonl").string() + " --config " +
                  (d / "bad.json").string() + " --out " + (d / "c").string(),
              log) != 0);
    CHECK(slurp(log).find("unknown key") != std::string::npos);
  }
}
