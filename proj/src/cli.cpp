// Copyright 2026 The flexoffload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.

#include "flexoffload/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "flexoffload/experiment.hpp"

namespace flexoffload {
namespace {

namespace fs = std::filesystem;

struct GenerateArgs {
  int layers = 0;
  int64_t attn_bytes = 1 << 20;
  int64_t ffn_bytes = 3 << 20;
  std::optional<int64_t> gqa_kv_bytes;
  int64_t embed_bytes = 0;
  int64_t align = static_cast<int64_t>(kDefaultAlignment);
  uint64_t seed = 0;
  std::string out;
};

struct PlanArgs {
  std::string model;
  std::optional<uint64_t> budget_bytes;
  std::optional<double> budget_frac;
  std::string strategy = "flex";
  std::string out;
};

struct RunArgs {
  std::string model;
  std::string mode = "real";
  std::vector<std::string> strategies = {"flex"};
  std::vector<std::string> budgets;
  std::vector<uint64_t> budget_bytes;
  std::vector<double> budget_frac;
  std::optional<int> window;  // default: kDefaultWindow, capped at the layer count
  int io_threads = 1;
  int compute_threads = 1;
  std::string read_mode = "cached";
  int tokens = 4;
  double compute_ns_per_byte = 0.0;
  bool verify = false;
  std::optional<uint64_t> seed;
  double io_bandwidth = 1e9;
  double io_overhead_ns = 0.0;
  uint64_t page_bytes = 4096;
  std::string out;
};

fs::path ModelDir(const std::string& flag) {
  return flag.empty() ? ScratchDirectory() / "model" : fs::path(flag);
}

fs::path SeedPath(const fs::path& dir) { return dir / "model.seed"; }

void WriteTextFile(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text) || !f.flush()) {
    throw StorageError("cannot write " + path.string());
  }
}

int DoGenerate(const GenerateArgs& a, std::ostream& out) {
  ManifestParams p;
  p.n_layers = a.layers;
  p.attn_tensor_bytes = a.attn_bytes;
  p.ffn_tensor_bytes = a.ffn_bytes;
  p.gqa_kv_bytes = a.gqa_kv_bytes;
  p.embed_bytes = a.embed_bytes;
  p.alignment = a.align;
  ModelManifest manifest = GenerateManifest(p);

  const fs::path dir = ModelDir(a.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StorageError("cannot create " + dir.string() + ": " + ec.message());
  const ModelPaths paths = PathsInDirectory(dir);
  SaveManifest(manifest, paths.manifest);
  WriteBlob(manifest, paths.blob, a.seed);
  WriteTextFile(SeedPath(dir), std::to_string(a.seed) + "\n");

  out << DescribeManifest(manifest) << "manifest: " << paths.manifest.string()
      << "\nblob: " << paths.blob.string() << "\n";
  return kExitOk;
}

int DoPlan(const PlanArgs& a, std::ostream& out) {
  const fs::path dir = ModelDir(a.model);
  const ModelManifest manifest = LoadManifest(PathsInDirectory(dir).manifest);
  if (a.budget_bytes.has_value() == a.budget_frac.has_value()) {
    throw UsageError("give exactly one of --budget-bytes and --budget-frac");
  }
  const BudgetSpec spec = a.budget_bytes ? BudgetSpec::Bytes(*a.budget_bytes)
                                         : BudgetSpec::Fraction(*a.budget_frac);
  auto strategy = ParseStrategy(a.strategy);
  if (!strategy) throw UsageError("unknown plan strategy '" + a.strategy + "'");

  const PreservationPlan plan = Plan(manifest, ResolveBudget(spec, manifest), *strategy);
  const fs::path plan_path = a.out.empty() ? dir / "plan.txt" : fs::path(a.out);
  WriteTextFile(plan_path, SerializePlan(plan));
  out << DescribePlan(plan, manifest) << "plan: " << plan_path.string() << "\n";
  return kExitOk;
}

uint64_t ReadSeed(const fs::path& dir) {
  std::ifstream f(SeedPath(dir));
  uint64_t seed = 0;
  if (f >> seed) return seed;
  return 0;
}

int DoRun(const RunArgs& a, std::ostream& out) {
  const fs::path dir = ModelDir(a.model);
  const ModelPaths paths = PathsInDirectory(dir);
  const ModelManifest manifest = LoadManifest(paths.manifest);

  ExperimentSpec spec;
  auto mode = ParseRunMode(a.mode);
  if (!mode) throw UsageError("unknown mode '" + a.mode + "'");
  spec.mode = *mode;
  for (const auto& name : a.strategies) {
    auto s = ParseRunStrategy(name);
    if (!s) throw UsageError("unknown strategy '" + name + "'");
    spec.strategies.push_back(*s);
  }
  for (const auto& b : a.budgets) spec.budgets.push_back(ParseBudget(b));
  for (uint64_t b : a.budget_bytes) spec.budgets.push_back(BudgetSpec::Bytes(b));
  for (double f : a.budget_frac) spec.budgets.push_back(BudgetSpec::Fraction(f));
  if (spec.budgets.empty()) spec.budgets.push_back(BudgetSpec::Fraction(0.5));

  auto read_mode = ParseReadMode(a.read_mode);
  if (!read_mode) throw UsageError("unknown read mode '" + a.read_mode + "'");
  ExecutionConfig& c = spec.config;
  c.window_k = a.window ? *a.window : std::min(kDefaultWindow, manifest.n_layers);
  c.io_threads = a.io_threads;
  c.compute_threads = a.compute_threads;
  c.read_mode = *read_mode;
  c.tokens = a.tokens;
  c.compute_ns_per_byte = a.compute_ns_per_byte;
  c.verify_payloads = a.verify;
  c.payload_seed = a.seed ? *a.seed : ReadSeed(dir);
  c.page_bytes = a.page_bytes;
  spec.cost.io_bandwidth_bytes_per_s = a.io_bandwidth;
  spec.cost.per_tensor_io_overhead_ns = a.io_overhead_ns;
  spec.cost.io_channels = a.io_threads;

  std::unique_ptr<BlobStore> store;
  if (spec.mode == RunMode::kReal) {
    store = BlobStore::Open(paths.blob, manifest, *read_mode);
  }
  const auto rows = RunExperiment(manifest, spec, store.get());

  std::ostringstream csv;
  for (const auto& r : rows) csv << CsvRow(r, true) << "\n";
  out << CsvHeader(true) << "\n" << csv.str();

  if (!a.out.empty()) {
    const bool fresh = !fs::exists(a.out) || fs::file_size(a.out) == 0;
    std::ofstream f(a.out, std::ios::app);
    if (!f) throw StorageError("cannot open " + a.out + " for appending");
    if (fresh) f << CsvHeader(true) << "\n";
    f << csv.str();
    if (!f.flush()) throw StorageError("write failed: " + a.out);
  }
  return kExitOk;
}

}  // namespace

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidParameter:
    case ErrorKind::kUsage:
      return kExitUsage;
    case ErrorKind::kStorage: return kExitStorage;
    case ErrorKind::kCapability: return kExitCapability;
    case ErrorKind::kCorruption: return kExitCorruption;
    case ErrorKind::kInsufficientBudget: return kExitInsufficientBudget;
    case ErrorKind::kUndefinedModel: return kExitUndefinedModel;
  }
  return kExitFailure;
}

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Memory-budgeted tensor offloading runtime and simulator",
               "flexoffload"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic manifest and blob");
  generate->add_option("--layers", gen.layers, "Decoding layer count")->required();
  generate->add_option("--attn-bytes", gen.attn_bytes, "Bytes per attention tensor")
      ->capture_default_str();
  generate->add_option("--ffn-bytes", gen.ffn_bytes, "Bytes per FFN tensor")
      ->capture_default_str();
  generate->add_option("--gqa-kv-bytes", gen.gqa_kv_bytes, "Bytes per K/V tensor");
  generate->add_option("--embed-bytes", gen.embed_bytes,
                       "Bytes per embedding tensor (input and output)")
      ->capture_default_str();
  generate->add_option("--align", gen.align, "Blob offset alignment")
      ->capture_default_str();
  generate->add_option("--seed", gen.seed, "Payload pattern seed")->capture_default_str();
  generate->add_option("--out", gen.out, "Output directory");

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Compute a tensor preservation plan");
  plan_cmd->add_option("--model", plan.model, "Model directory");
  plan_cmd->add_option("--budget-bytes", plan.budget_bytes, "Memory budget in bytes");
  plan_cmd->add_option("--budget-frac", plan.budget_frac,
                       "Memory budget as a fraction of model bytes");
  plan_cmd->add_option("--strategy", plan.strategy,
                       "flex | layer-order | attn-first | ffn-first | none")
      ->capture_default_str();
  plan_cmd->add_option("--out", plan.out, "Plan file (default <model>/plan.txt)");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run, simulate or predict experiments");
  run_cmd->add_option("--model", run.model, "Model directory");
  run_cmd->add_option("--mode", run.mode, "real | simulate | analytic")->capture_default_str();
  run_cmd->add_option("--strategy", run.strategies,
                      "Comma list of flex, layer-order, attn-first, ffn-first, "
                      "none, sync, flex-sync, mmap")
      ->delimiter(',');
  run_cmd->add_option("--budgets", run.budgets,
                      "Comma list; integers are bytes, decimals or N% are fractions")
      ->delimiter(',');
  run_cmd->add_option("--budget-bytes", run.budget_bytes, "Comma list of byte budgets")
      ->delimiter(',');
  run_cmd->add_option("--budget-frac", run.budget_frac, "Comma list of fractions")
      ->delimiter(',');
  run_cmd->add_option("--window", run.window,
                      "Prefetch window in layers (default 3, capped at the layer count)");
  run_cmd->add_option("--io-threads", run.io_threads)->capture_default_str();
  run_cmd->add_option("--compute-threads", run.compute_threads)->capture_default_str();
  run_cmd->add_option("--read-mode", run.read_mode, "cached | bypass")->capture_default_str();
  run_cmd->add_option("--tokens", run.tokens)->capture_default_str();
  run_cmd->add_option("--compute-ns-per-byte", run.compute_ns_per_byte)
      ->capture_default_str();
  run_cmd->add_flag("--verify", run.verify, "Check every payload against its pattern");
  run_cmd->add_option("--seed", run.seed, "Payload seed (default: the model's)");
  run_cmd->add_option("--io-bandwidth", run.io_bandwidth,
                      "Bytes/s for simulate and analytic modes")
      ->capture_default_str();
  run_cmd->add_option("--io-overhead-ns", run.io_overhead_ns,
                      "Per-request latency for simulate mode")
      ->capture_default_str();
  run_cmd->add_option("--page-bytes", run.page_bytes, "Request size of the mmap baseline")
      ->capture_default_str();
  run_cmd->add_option("--out", run.out, "CSV file to append rows to");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed()) return DoGenerate(gen, out);
    if (plan_cmd->parsed()) return DoPlan(plan, out);
    if (run_cmd->parsed()) return DoRun(run, out);
  } catch (const Error& e) {
    err << "error (" << ErrorKindName(e.kind()) << "): " << e.what() << "\n";
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace flexoffload
