#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relprobe/pipeline.hpp"

namespace pl = relprobe::pipeline;

namespace {

constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
  std::vector<std::string> stages;
};

pl::RunConfig resolve(const GlobalOptions& g) {
  auto cfg = g.config.empty() ? pl::default_config() : pl::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.jobs) {
    if (*g.jobs < 1) throw relprobe::Error(relprobe::ErrorCode::kConfig, "--jobs must be at least 1");
    cfg.jobs = *g.jobs;
  }
  if (!g.stages.empty()) cfg.stages = g.stages;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lexical relation probing and SAE intervention pipeline"};
  app.set_version_flag("--version", std::string(pl::kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the run seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Worker threads within a stage");
  app.add_option("--stage", g.stages, "Stages for 'run' (repeatable)");

  std::string command;
  for (const auto& stage : pl::kStages) {
    app.add_subcommand(stage, "Run the " + stage + " stage")->callback([&command, stage] { command = stage; });
  }
  app.add_subcommand("run", "Run the stages given by --stage or the config")->callback([&] { command = "run"; });
  app.add_subcommand("selftest", "Full pipeline on the bundled fixture with a toy transformer")
      ->callback([&] { command = "selftest"; });

  std::string input, vocab, output;
  int layers = 4, d_model = 16;
  auto* toy = app.add_subcommand("toy-extract", "Write toy-transformer activations for a prompt-set file");
  toy->add_option("input", input, "Dataset JSONL or word list")->required()->check(CLI::ExistingFile);
  toy->add_option("output", output, "RELACT1 output path")->required();
  toy->add_option("--vocab-from", vocab, "Dataset JSONL that defines the vocabulary (default: input)");
  toy->add_option("--layers", layers, "Transformer blocks")->check(CLI::PositiveNumber);
  toy->add_option("--d-model", d_model, "Model width")->check(CLI::PositiveNumber);
  toy->callback([&] { command = "toy-extract"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUser;
  }

  try {
    auto cfg = resolve(g);
    if (command == "selftest") {
      if (g.out.empty()) cfg.out_dir = "relprobe-selftest";
      const auto results = pl::selftest(cfg, std::cout);
      int failed = 0;
      for (const auto& r : results) failed += !r.ok;
      std::cout << (failed ? "selftest FAILED: " + std::to_string(failed) + " checks" : "selftest passed") << "\n";
      return failed ? kExitUser : 0;
    }
    if (command == "toy-extract") {
      pl::toy_extract(input, vocab.empty() ? input : vocab, output, layers, d_model, cfg.seed);
      return 0;
    }
    std::vector<std::string> stages = {command};
    if (command == "run") stages = cfg.stages.empty() ? pl::kStages : cfg.stages;
    for (const auto& s : stages) {
      std::cerr << "relprobe: stage " << s << "\n";
      pl::run_stage(s, cfg);
    }
    return 0;
  } catch (const relprobe::Error& e) {
    std::cerr << "relprobe: error (" << relprobe::to_string(e.code()) << "): " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "relprobe: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
