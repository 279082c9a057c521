// Command-line front end: kws <command> [--config F] [--manifest F] [--out D] [--seed N] [--threads N]

#include <iostream>

#include <CLI11.hpp>

#include "kws/error.hpp"
#include "kws/pipeline/commands.hpp"

namespace {

const char* describe(const std::string& name) {
  if (name == "extract") return "Compute MFCC features for the manifest and template manifest";
  if (name == "dtw-targets") return "Score the train split with DTW to produce CNN-DTW targets";
  if (name == "train-ae") return "Pretrain and fine-tune the frame autoencoder";
  if (name == "train-cae") return "Train the correspondence autoencoder on aligned template frames";
  if (name == "train-cnn") return "Train the sliding-window CNN classifier on templates";
  if (name == "train-cnn-dtw") return "Train the CNN-DTW model on DTW targets";
  if (name == "evaluate") return "Score the test split and write metric reports";
  if (name == "profile") return "Count multiplications and time each approach on a 15 s input";
  if (name == "synth") return "Generate a synthetic keyword corpus";
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keyword spotting with DTW, CNN and CNN-DTW models"};
  app.require_subcommand(1);
  kws::pipeline::Options opts;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string chosen;
  for (const auto& name : kws::pipeline::command_names()) {
    auto* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", opts.config, "Configuration file (key = value)");
    sub->add_option("--manifest", opts.manifest, "Utterance manifest (TSV)");
    sub->add_option("--out", opts.out, "Output directory")->required();
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--threads", threads, "Override the configured thread count");
    sub->callback([&, sub, name] {
      chosen = name;
      if (sub->count("--seed")) opts.seed = seed;
      if (sub->count("--threads")) opts.threads = threads;
    });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(kws::ExitCode::kConfig);
  }
  return kws::pipeline::run_command(chosen, opts);
}
