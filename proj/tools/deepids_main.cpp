// deepids: train, evaluate, and run the intrusion detector from the shell.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.
#include <deque>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepids/pipeline.hpp"

namespace {

struct BoundFlag {
  const CLI::App* sub;
  std::string key;
  CLI::Option* opt;
  std::string* value;
};

class FlagTable {
 public:
  void add(CLI::App* sub, const std::string& key, const std::string& desc) {
    storage_.emplace_back();
    CLI::Option* opt = sub->add_option("--" + key, storage_.back(), desc);
    bound_.push_back({sub, key, opt, &storage_.back()});
  }

  // Config-file keys first, then flags, so flags win.
  void apply(deepids::RunConfig& cfg, const CLI::App* sub,
             const std::string& config_path) const {
    if (!config_path.empty())
      for (const auto& [key, value] : deepids::read_config_file(config_path))
        deepids::apply_option(cfg, key, value);
    for (const auto& b : bound_)
      if (b.sub == sub && b.opt->count() > 0)
        deepids::apply_option(cfg, b.key, *b.value);
  }

 private:
  std::deque<std::string> storage_;
  std::vector<BoundFlag> bound_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep-learning intrusion detector: PCA + GRBM/RBM belief network"};
  app.require_subcommand(1);

  FlagTable flags;
  std::string config_path;

  CLI::App* train = app.add_subcommand("train", "Train a detector and write a model file");
  CLI::App* eval = app.add_subcommand("eval", "Score a labeled split with a trained model");
  CLI::App* detect =
      app.add_subcommand("detect", "Stream records through a model, one verdict per line");
  CLI::App* project =
      app.add_subcommand("project", "Export the first three principal components as csv");

  const std::string dataset_desc = "dataset family: kdd99, nslkdd, or unswnb15";
  for (CLI::App* sub : {train, eval, detect, project}) {
    flags.add(sub, "dataset", dataset_desc);
    sub->add_option("--config", config_path,
                    "flat key-value config file; flags override its entries");
  }

  flags.add(train, "train", "training split path");
  flags.add(train, "model", "output model path");
  flags.add(train, "report", "training report path (default: <model>.train.txt)");
  flags.add(train, "taxonomy", "label taxonomy file overriding the built-in tables");
  flags.add(train, "alpha", "variance fraction retained by pca (default 0.95)");
  flags.add(train, "layers", "hidden layer widths, e.g. 64,32");
  flags.add(train, "lr", "fine-tune learning rate (default 0.01)");
  flags.add(train, "cd-k", "contrastive-divergence steps (default 1)");
  flags.add(train, "epochs", "fine-tune epochs (default 30)");
  flags.add(train, "batch", "minibatch size (default 128)");
  flags.add(train, "seed", "rng seed (default 42)");
  flags.add(train, "pretrain-lr", "pretraining learning rate (default 0.01)");
  flags.add(train, "pretrain-epochs", "pretraining epochs per layer (default 10)");
  flags.add(train, "max-train-rows", "subsample cap on training rows (0 = all)");

  flags.add(eval, "model", "trained model path");
  flags.add(eval, "test", "labeled test split path");
  flags.add(eval, "report", "append one machine-readable result line to this file");

  flags.add(detect, "model", "trained model path");
  flags.add(detect, "input", "record stream path ('-' or omitted = stdin)");
  flags.add(detect, "out", "verdict stream path (omitted = stdout)");
  flags.add(detect, "report", "append suspicious verdicts to this file");

  flags.add(project, "model", "project through this model's stored encoder and basis");
  flags.add(project, "input", "records to project");
  flags.add(project, "train", "records to fit on and project (no-model mode)");
  flags.add(project, "taxonomy", "label taxonomy file (no-model mode)");
  flags.add(project, "out", "csv output path (omitted = stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  deepids::RunConfig cfg;
  try {
    flags.apply(cfg, sub, config_path);

    if (sub == train) {
      deepids::cmd_train(cfg, std::cout);
    } else if (sub == eval) {
      deepids::cmd_eval(cfg, std::cout);
    } else if (sub == detect) {
      std::ifstream file_in;
      const bool use_stdin = cfg.input_path.empty() || cfg.input_path == "-";
      if (!use_stdin) {
        file_in.open(cfg.input_path);
        if (!file_in)
          deepids::fail(deepids::errc::io_error,
                        "cannot open input file: " + cfg.input_path);
      }
      std::ofstream file_out;
      if (!cfg.out_path.empty()) {
        file_out.open(cfg.out_path, std::ios::trunc);
        if (!file_out)
          deepids::fail(deepids::errc::io_error,
                        "cannot open output file: " + cfg.out_path);
      }
      deepids::cmd_detect(cfg, use_stdin ? std::cin : file_in,
                          cfg.out_path.empty() ? std::cout : file_out, std::cerr);
    } else {
      std::ofstream file_out;
      if (!cfg.out_path.empty()) {
        file_out.open(cfg.out_path, std::ios::trunc);
        if (!file_out)
          deepids::fail(deepids::errc::io_error,
                        "cannot open output file: " + cfg.out_path);
      }
      deepids::cmd_project(cfg, cfg.out_path.empty() ? std::cout : file_out);
    }
  } catch (const deepids::Error& e) {
    std::cerr << "deepids: " << e.what() << '\n';
    return deepids::exit_class(e.code());
  }
  return 0;
}
