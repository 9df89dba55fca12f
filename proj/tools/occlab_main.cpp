#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "occlab/commands.hpp"
#include "occlab/util.hpp"

namespace {

namespace fs = std::filesystem;
using namespace occlab;

struct CommonArgs {
  std::string config_path;
  std::string output;
  std::string data_dir;
  long seed_override = -1;
  long steps_override = -1;
  int threads_override = -1;

  void attach(CLI::App* app, bool needs_data) {
    app->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    app->add_option("-o,--out", output, "output directory");
    if (needs_data) app->add_option("-d,--data", data_dir, "dataset directory")->required();
    app->add_option("--seed", seed_override, "override config seed");
    app->add_option("--steps", steps_override, "override step count");
    app->add_option("--threads", threads_override, "worker threads (default: all cores)");
  }

  // Loads the config, applies overrides, and reports the hash of the
  // on-disk config file.
  cli::ExperimentConfig load(std::string& config_hash) const {
    auto cfg = cli::ExperimentConfig::load(config_path);
    config_hash = util::file_hash(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (steps_override >= 0) {
      cfg.train.steps = steps_override;
      cfg.guided.steps = steps_override;
      cfg.grid.steps = steps_override;
    }
    if (threads_override >= 0) cfg.threads = threads_override;
    return cfg;
  }

  fs::path outdir(const cli::ExperimentConfig& cfg, const char* fallback) const {
    if (!output.empty()) return output;
    fs::path root = cfg.output_dir;
    if (const char* env = std::getenv("OCCLAB_OUTPUT_ROOT")) root = env;
    return root / fallback;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"occlab: learned-occupancy radiance field laboratory"};
  app.require_subcommand(1);

  CommonArgs gen_args, trocc_args, guided_args, gridbl_args, eval_args, bench_args, pc_args,
      render_args;

  auto* gen = app.add_subcommand("generate-scene", "render a synthetic ground-truth dataset");
  bool force = false;
  gen_args.attach(gen, false);
  gen->add_flag("--force", force, "overwrite an existing non-empty directory");

  auto* trocc = app.add_subcommand("train-occupancy",
                                   "train occupancy + scene + empty networks end-to-end");
  trocc_args.attach(trocc, true);

  auto* guided = app.add_subcommand("train-guided",
                                    "train a radiance field with frozen-occupancy guidance");
  std::string occupancy_ckpt, sampler = "guided";
  guided_args.attach(guided, true);
  guided->add_option("--occupancy", occupancy_ckpt, "frozen occupancy checkpoint");
  guided->add_option("--sampler", sampler, "sampler: guided (default) or dense");

  auto* gridbl = app.add_subcommand("train-grid-baseline",
                                    "train a radiance field with a momentum grid alongside");
  gridbl_args.attach(gridbl, true);

  auto* eval = app.add_subcommand("eval", "metric tables, point clouds, PSNR report");
  std::string eval_occ, eval_grid;
  std::vector<std::string> eval_nerfs;
  eval_args.attach(eval, true);
  eval->add_option("--occupancy", eval_occ, "occupancy checkpoint");
  eval->add_option("--grid", eval_grid, "grid snapshot");
  eval->add_option("--nerf", eval_nerfs, "radiance checkpoints for PSNR rows");

  auto* bench = app.add_subcommand("bench", "sampling timing and memory report");
  std::string bench_occ, bench_grid;
  bench_args.attach(bench, true);
  bench->add_option("--occupancy", bench_occ, "occupancy checkpoint");
  bench->add_option("--grid", bench_grid, "grid snapshot");

  auto* pc = app.add_subcommand("export-pointcloud", "write branch point clouds as PLY");
  std::string pc_ckpt;
  pc_args.attach(pc, true);
  pc->add_option("--checkpoint", pc_ckpt, "field or radiance checkpoint")->required();

  auto* render = app.add_subcommand("render", "render a dataset view from a checkpoint");
  std::string render_ckpt;
  int render_view = 0;
  render_args.attach(render, true);
  render->add_option("--checkpoint", render_ckpt, "checkpoint to render")->required();
  render->add_option("--view", render_view, "dataset view index");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      std::string hash;
      const auto cfg = gen_args.load(hash);
      return cli::cmd_generate_scene(cfg, gen_args.outdir(cfg, "dataset"), force, hash);
    }
    if (*trocc) {
      std::string hash;
      const auto cfg = trocc_args.load(hash);
      return cli::cmd_train_occupancy(cfg, trocc_args.data_dir,
                                      trocc_args.outdir(cfg, "occupancy"), hash);
    }
    if (*guided) {
      std::string hash;
      const auto cfg = guided_args.load(hash);
      std::optional<fs::path> occ;
      if (!occupancy_ckpt.empty()) occ = occupancy_ckpt;
      return cli::cmd_train_guided(cfg, guided_args.data_dir, occ, sampler,
                                   guided_args.outdir(cfg, "guided"), hash);
    }
    if (*gridbl) {
      std::string hash;
      const auto cfg = gridbl_args.load(hash);
      return cli::cmd_train_grid_baseline(cfg, gridbl_args.data_dir,
                                          gridbl_args.outdir(cfg, "grid_baseline"), hash);
    }
    if (*eval) {
      std::string hash;
      const auto cfg = eval_args.load(hash);
      std::optional<fs::path> occ, grid;
      if (!eval_occ.empty()) occ = eval_occ;
      if (!eval_grid.empty()) grid = eval_grid;
      std::vector<fs::path> nerfs(eval_nerfs.begin(), eval_nerfs.end());
      return cli::cmd_eval(cfg, eval_args.data_dir, occ, grid, nerfs,
                           eval_args.outdir(cfg, "eval"), hash);
    }
    if (*bench) {
      std::string hash;
      const auto cfg = bench_args.load(hash);
      std::optional<fs::path> occ, grid;
      if (!bench_occ.empty()) occ = bench_occ;
      if (!bench_grid.empty()) grid = bench_grid;
      return cli::cmd_bench(cfg, bench_args.data_dir, occ, grid, bench_args.outdir(cfg, "bench"),
                            hash);
    }
    if (*pc) {
      std::string hash;
      const auto cfg = pc_args.load(hash);
      return cli::cmd_export_pointcloud(cfg, pc_args.data_dir, pc_ckpt,
                                        pc_args.outdir(cfg, "pointcloud"), hash);
    }
    if (*render) {
      std::string hash;
      const auto cfg = render_args.load(hash);
      return cli::cmd_render(cfg, render_args.data_dir, render_ckpt, render_view,
                             render_args.outdir(cfg, "render"), hash);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  }
  return cli::kExitUsage;
}
