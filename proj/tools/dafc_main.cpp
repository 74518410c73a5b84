// dafc: train, evaluate, sweep and export deep adaptive fuzzy clustering models.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dafc/harness.hpp"

namespace {

void print_row(const dafc::EpochRow& r) {
  std::printf("epoch %3zu  L_rec %.5f  L_clu %.5f  L %.5f  acc %.4f  ari %.4f  nmi %.4f  (%.0f ms)\n", r.epoch,
              r.l_rec, r.l_clu, r.l_total, r.acc, r.ari, r.nmi, r.wall_ms);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep adaptive fuzzy clustering"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, dataset, grid_path, csv_path;
  std::optional<std::uint64_t> seed;

  auto* train = app.add_subcommand("train", "Pretrain, cluster and report");
  train->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out_dir, "Override the output directory");

  auto* eval = app.add_subcommand("eval", "Score a checkpoint against a labelled dataset");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", dataset, "Dataset spec, e.g. mnist:digits=0123,limit=4000")->required();

  auto* sweep = app.add_subcommand("sweep", "Train once per cell of a parameter grid");
  sweep->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  sweep->add_option("--grid", grid_path, "Lines of `key = v1, v2, ...`")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "Override the output directory");

  auto* exp = app.add_subcommand("export", "Write bottleneck embeddings and head probabilities as CSV");
  exp->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  exp->add_option("--out", csv_path)->required();
  exp->add_option("--dataset", dataset, "Defaults to the dataset in the checkpoint's config.txt");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      auto cfg = dafc::load_config(config_path);
      if (seed) cfg.seed = *seed;
      if (!out_dir.empty()) cfg.out = out_dir;
      dafc::TrainHooks hooks;
      hooks.after_epoch = print_row;
      const auto report = dafc::train(cfg, hooks);
      std::printf("best acc %.4f  ari %.4f  nmi %.4f  (epoch %zu); outputs in %s\n", report.best_acc,
                  report.best_ari, report.best_nmi, report.best_epoch, cfg.out.c_str());
    } else if (eval->parsed()) {
      const auto r = dafc::evaluate(checkpoint, dataset);
      std::printf("acc %.6f\nari %.6f\nnmi %.6f\ntest_error %.6f\n", r.acc, r.ari, r.nmi, r.test_error);
    } else if (sweep->parsed()) {
      auto cfg = dafc::load_config(config_path);
      const std::string dir = out_dir.empty() ? cfg.out : out_dir;
      const auto cells = dafc::sweep(cfg, dafc::Grid::load(grid_path), dir);
      std::size_t failed = 0;
      for (const auto& c : cells) failed += c.status != "ok";
      std::printf("%zu cells, %zu failed; table in %s/sweep.csv\n", cells.size(), failed, dir.c_str());
    } else if (exp->parsed()) {
      const std::string spec = dataset.empty() ? dafc::dataset_spec_near(checkpoint) : dataset;
      dafc::export_embeddings(checkpoint, spec, csv_path);
      std::printf("wrote %s\n", csv_path.c_str());
    }
  } catch (const std::exception& e) {
    std::cerr << "dafc: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
