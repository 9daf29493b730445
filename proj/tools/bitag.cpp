// Command-line front end: stats | train | evaluate | predict | ablate.

#include "bitag/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"bitag - bidirectional tagging for relational triple extraction"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string checkpoint, input, output;
  std::vector<std::string> variants;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key=value configuration file");
    sub->add_option("-s,--set", overrides, "override a config key (key=value, repeatable)");
  };

  CLI::App* stats = app.add_subcommand("stats", "corpus statistics by overlap pattern and triple count");
  add_common(stats);

  CLI::App* train = app.add_subcommand("train", "run seeded training runs and save checkpoints");
  add_common(train);

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint against a data split");
  add_common(evaluate);
  evaluate->add_option("checkpoint", checkpoint, "checkpoint file")->required();

  CLI::App* predict = app.add_subcommand("predict", "extract triples from sentences");
  add_common(predict);
  predict->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  predict->add_option("input", input, "input sentences (interchange format)")->required();
  predict->add_option("output", output, "output predictions (NDJSON)")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "train and compare the ablation variants");
  add_common(ablate);
  ablate->add_option("--variants", variants, "variant subset (default: all)");

  CLI11_PARSE(app, argc, argv);

  try {
    bitag::RunConfig cfg;
    if (!config_path.empty()) cfg = bitag::load_config(config_path);
    bitag::apply_overrides(cfg, overrides);

    // Relative weights paths resolve against BITAG_WEIGHTS_DIR when set.
    if (!cfg.weights.empty() && std::filesystem::path(cfg.weights).is_relative()) {
      if (const char* dir = std::getenv("BITAG_WEIGHTS_DIR"))
        cfg.weights = (std::filesystem::path(dir) / cfg.weights).string();
    }

    if (app.got_subcommand(stats)) return bitag::cmd_stats(cfg, std::cout);
    if (app.got_subcommand(train)) return bitag::cmd_train(cfg, std::cout);
    if (app.got_subcommand(evaluate)) return bitag::cmd_evaluate(cfg, checkpoint, std::cout);
    if (app.got_subcommand(predict))
      return bitag::cmd_predict(cfg, checkpoint, input, output, std::cout);
    if (app.got_subcommand(ablate)) return bitag::cmd_ablate(cfg, std::cout, variants);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
