// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <sys/wait.h>

#include "flexoffload/cli.hpp"
#include "support/test_support.hpp"

using namespace flexoffload;
using flexoffload::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result Cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> Lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Toy model in units of 4096 bytes: attn 1, ffn 3, two layers.
Result GenerateToy(const TempDir& dir, const std::string& sub = "m") {
  return Cli({"generate", "--layers", "2", "--attn-bytes", "4096", "--ffn-bytes", "12288",
              "--out", (dir / sub).string()});
}

int Binary(const std::string& args) {
  std::string cmd = std::string(FLEXOFFLOAD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("generate writes a model and is repeatable", "[cli]") {
  TempDir dir;
  auto r = GenerateToy(dir);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("per-layer bytes: 53248") != std::string::npos);
  CHECK(r.out.find("1:3") != std::string::npos);
  auto blob = Slurp(dir / "m" / "model.blob");
  REQUIRE(GenerateToy(dir, "again").code == 0);
  CHECK(Slurp(dir / "again" / "model.blob") == blob);
  CHECK(Slurp(dir / "again" / "model.manifest") == Slurp(dir / "m" / "model.manifest"));
}

TEST_CASE("plan summaries on the toy model", "[cli]") {
  TempDir dir;
  REQUIRE(GenerateToy(dir).code == 0);
  const std::string model = (dir / "m").string();

  auto flex = Cli({"plan", "--model", model, "--budget-frac", "0.5", "--strategy", "flex"});
  REQUIRE(flex.code == 0);
  CHECK(flex.out.find("residual spread: 4096 (attention tensor 4096)") != std::string::npos);
  CHECK(flex.out.find("io bytes per token: 53248") != std::string::npos);
  auto plan_text = Slurp(dir / "m" / "plan.txt");
  CHECK(plan_text.rfind("FLEXPLAN\t1\t53248\t53248\n", 0) == 0);

  auto none = Cli({"plan", "--model", model, "--budget-frac", "0.5", "--strategy", "none"});
  CHECK(none.out.find("io bytes per token: 106496") != std::string::npos);

  auto lo = Cli({"plan", "--model", model, "--budget-frac", "0.5", "--strategy",
                 "layer-order", "--out", (dir / "lo.txt").string()});
  CHECK(lo.out.find("residual spread: 53248") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "lo.txt"));
}

TEST_CASE("simulated sweep prints one row per budget and strategy", "[cli]") {
  TempDir dir;
  REQUIRE(GenerateToy(dir).code == 0);
  auto csv = dir / "out.csv";
  auto r = Cli({"run", "--model", (dir / "m").string(), "--mode", "simulate", "--strategy",
                "flex,sync,none", "--budgets", "0,0.25,0.5,0.75", "--compute-ns-per-byte",
                "1", "--window", "2", "--out", csv.string()});
  REQUIRE(r.code == 0);
  auto lines = Lines(r.out);
  REQUIRE(lines.size() == 13);
  CHECK(lines[0] == CsvHeader(true));
  double prev = 0;
  for (size_t i = 1; i < lines.size(); ++i) {
    CHECK(lines[i].find(",simulated") != std::string::npos);
    if (lines[i].rfind("flex,", 0) == 0) {
      auto cols = Lines(std::string());
      std::stringstream ss(lines[i]);
      std::vector<std::string> f;
      for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
      double tps = std::stod(f[7]);
      CHECK(tps >= prev);
      prev = tps;
    }
  }
  // appending keeps a single header
  REQUIRE(Cli({"run", "--model", (dir / "m").string(), "--mode", "analytic", "--strategy",
               "flex", "--compute-ns-per-byte", "1", "--window", "2", "--out", csv.string()})
              .code == 0);
  auto file = Lines(Slurp(csv));
  CHECK(file.size() == 14);
  CHECK(file[0] == CsvHeader(true));
  CHECK(file[13].find(",analytic") != std::string::npos);
}

TEST_CASE("real runs verify payloads for every strategy", "[cli]") {
  TempDir dir;
  REQUIRE(GenerateToy(dir).code == 0);
  auto r = Cli({"run", "--model", (dir / "m").string(), "--mode", "real", "--strategy",
                "flex,layer-order,attn-first,ffn-first,none,sync,flex-sync,mmap", "--verify",
                "--window", "2", "--io-threads", "2", "--compute-threads", "2"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(Lines(r.out).size() == 9);
  // default window is 3 when the model has enough layers
  TempDir deep;
  REQUIRE(Cli({"generate", "--layers", "4", "--attn-bytes", "4096", "--ffn-bytes", "12288",
               "--out", (deep / "m").string()})
              .code == 0);
  auto d = Cli({"run", "--model", (deep / "m").string(), "--mode", "real", "--strategy",
                "flex"});
  REQUIRE(d.code == 0);
  CHECK(Lines(d.out)[1].rfind("flex,", 0) == 0);
  CHECK(Lines(d.out)[1].find(",3,") != std::string::npos);
}

TEST_CASE("errors map to exit codes", "[cli]") {
  TempDir dir;
  CHECK(Cli({"generate", "--layers", "0", "--out", (dir / "z").string()}).code == kExitUsage);
  CHECK(Cli({"generate", "--layers", "2", "--attn-bytes", "1024", "--ffn-bytes", "3072",
             "--gqa-kv-bytes", "2048", "--out", (dir / "z").string()})
            .code == kExitUsage);
  CHECK(Cli({"frobnicate"}).code == kExitUsage);
  CHECK(Cli({"run", "--model", (dir / "missing").string(), "--mode", "simulate"}).code ==
        kExitStorage);

  REQUIRE(Cli({"generate", "--layers", "2", "--attn-bytes", "4096", "--ffn-bytes", "12288",
               "--embed-bytes", "8192", "--out", (dir / "e").string()})
              .code == 0);
  const std::string e = (dir / "e").string();
  CHECK(Cli({"plan", "--model", e, "--budget-bytes", "100", "--strategy", "flex"}).code ==
        kExitInsufficientBudget);
  CHECK(Cli({"plan", "--model", e, "--strategy", "flex"}).code == kExitUsage);
  CHECK(Cli({"run", "--model", e, "--mode", "simulate", "--strategy", "warp"}).code ==
        kExitUsage);
  CHECK(Cli({"run", "--model", e, "--mode", "simulate", "--budget-frac", "1.5"}).code ==
        kExitUsage);
  CHECK(Cli({"run", "--model", e, "--mode", "analytic", "--strategy", "flex",
             "--budget-frac", "1.0"})
            .code == kExitUndefinedModel);
  CHECK(Cli({"run", "--model", e, "--mode", "real", "--strategy", "flex", "--verify",
             "--seed", "99"})
            .code == kExitCorruption);

  std::filesystem::resize_file(dir / "e" / "model.blob", 100);
  CHECK(Cli({"run", "--model", e, "--mode", "real", "--strategy", "flex"}).code ==
        kExitStorage);

  REQUIRE(Cli({"generate", "--layers", "2", "--attn-bytes", "100", "--ffn-bytes", "300",
               "--align", "1", "--out", (dir / "b").string()})
              .code == 0);
  int bypass = Cli({"run", "--model", (dir / "b").string(), "--mode", "real", "--strategy",
                    "flex", "--read-mode", "bypass"})
                   .code;
  CHECK((bypass == kExitCapability || bypass == kExitOk));
}

TEST_CASE("the installed binary reports exit codes", "[cli]") {
  TempDir dir;
  CHECK(Binary("--help") == 0);
  CHECK(Binary("generate --layers 0 --out " + (dir / "z").string()) == kExitUsage);
  CHECK(Binary("generate --layers 2 --attn-bytes 4096 --ffn-bytes 12288 --out " +
               (dir / "m").string()) == 0);
  CHECK(Binary("plan --model " + (dir / "m").string() + " --budget-frac 0.5") == 0);
  CHECK(Binary("run --model " + (dir / "m").string() + " --mode real --verify") == 0);
  CHECK(Binary("run --model " + (dir / "nowhere").string()) == kExitStorage);
}
