// rec4ad: generate | augment | train | evaluate | ablate | report.
#include <cstdlib>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "rec4ad/common/error.h"
#include "rec4ad/pipeline/config.h"
#include "rec4ad/pipeline/stages.h"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStaleInputs = 3;
constexpr int kNumerical = 4;

struct Flags {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "runs";
  std::vector<std::string> variants;
  int threads = 1;
};

int Run(const std::string& command, const Flags& flags) {
  using namespace rec4ad::pipeline;
  RunContext ctx;
  ctx.config = flags.config.empty() ? ExperimentConfig() : LoadConfig(flags.config);
  if (!flags.seeds.empty()) {
    ctx.config.seeds = flags.seeds;
    ctx.config.Validate();
  }
  if (!flags.variants.empty() && command != "report" && command != "ablate") {
    ctx.config.variants = flags.variants;
    ctx.config.Validate();
  }
  if (flags.threads < 1) throw rec4ad::ConfigError("--threads must be >= 1");
  ctx.out_dir = flags.out_dir;
  ctx.threads = flags.threads;
  ctx.log = &std::cerr;

  if (command == "report") {
    std::cout << Report(ctx, flags.variants).table;
    return kOk;
  }
  for (std::uint64_t seed : ctx.config.seeds) {
    if (command == "generate") {
      Generate(ctx, seed);
    } else if (command == "augment") {
      Augment(ctx, seed);
    } else if (command == "train") {
      Train(ctx, seed, ctx.config.variants);
    } else if (command == "evaluate") {
      Evaluate(ctx, seed, ctx.config.variants);
    } else if (command == "ablate") {
      Ablate(ctx, seed);
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selection-bias debiasing lab: simulate, augment, train, evaluate, report."};
  app.require_subcommand(1, 1);
  Flags flags;
  const std::pair<const char*, const char*> commands[] = {
      {"generate", "simulate the catalog and the ad, rec and test logs"},
      {"augment", "build training sets, IR table and propensities"},
      {"train", "train the selected variants"},
      {"evaluate", "score trained variants on the test log"},
      {"ablate", "train and evaluate Rec4Ad with one component removed at a time"},
      {"report", "aggregate evaluated seeds into a comparison table"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "experiment config (JSON); defaults if omitted");
    sub->add_option("--seed", flags.seeds, "run only these seeds (repeatable)");
    sub->add_option("--out-dir", flags.out_dir, "run directory (must exist)")
        ->capture_default_str();
    sub->add_option("--variant", flags.variants,
                    "variants to train/evaluate (repeatable or comma-separated)")
        ->delimiter(',');
    sub->add_option("--threads", flags.threads, "variants run concurrently")
        ->capture_default_str();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return Run(command, flags);
  } catch (const rec4ad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const rec4ad::StaleInputError& e) {
    std::cerr << "stale inputs: " << e.what() << '\n';
    return kStaleInputs;
  } catch (const rec4ad::FormatError& e) {
    std::cerr << "stale inputs: " << e.what() << '\n';
    return kStaleInputs;
  } catch (const rec4ad::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
}
