#include "occlab/commands.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

#include "occlab/compositing.hpp"
#include "occlab/dataset.hpp"
#include "occlab/image_io.hpp"
#include "occlab/metrics.hpp"
#include "occlab/occ_grid.hpp"
#include "occlab/trainer.hpp"
#include "occlab/util.hpp"

namespace occlab::cli {

using nlohmann::json;

namespace {

struct LoadedField {
  diff::ParamStore store;
  std::string kind;  // "field" or "radiance"
  fields::NetworkConfig network;
  fields::RadianceConfig radiance;
};

LoadedField load_field(const std::filesystem::path& ckpt) {
  LoadedField lf;
  std::string meta;
  lf.store = diff::ParamStore::load(ckpt, &meta);
  const json jm = json::parse(meta);
  lf.kind = jm.value("kind", "");
  if (lf.kind != "field" && lf.kind != "radiance")
    throw std::runtime_error("unrecognized checkpoint kind in " + ckpt.string());
  const auto cfg = ExperimentConfig::from_json(jm.at("config").dump());
  lf.network = cfg.network;
  lf.radiance = cfg.radiance;
  return lf;
}

rendering::FieldFn field_fn_of(const LoadedField& lf) {
  if (lf.kind == "field")
    return [&lf](const Eigen::MatrixXd& pts, const Eigen::MatrixXd& dirs, Eigen::VectorXd& sigma,
                 Eigen::MatrixXd& color) {
      auto raw = fields::field_forward_raw(lf.store, lf.network, pts, dirs);
      sigma = std::move(raw.sigma);
      color = std::move(raw.color);
    };
  return [&lf](const Eigen::MatrixXd& pts, const Eigen::MatrixXd& dirs, Eigen::VectorXd& sigma,
               Eigen::MatrixXd& color) {
    auto raw = fields::radiance_forward_raw(lf.store, lf.radiance, pts, dirs);
    sigma = std::move(raw.sigma);
    color = std::move(raw.color);
  };
}

std::vector<std::pair<std::string, std::string>> hash_inputs(
    const std::vector<std::pair<std::string, std::filesystem::path>>& files) {
  std::vector<std::pair<std::string, std::string>> hashes;
  for (const auto& [name, path] : files)
    if (!path.empty() && std::filesystem::exists(path))
      hashes.emplace_back(name, util::file_hash(path));
  return hashes;
}

void export_pointclouds(const ExperimentConfig& cfg, const scene::Dataset& dataset,
                        const LoadedField& lf, const std::filesystem::path& outdir,
                        const std::string& config_hash) {
  // Merge samples from every validation view (train views when none exist).
  auto indices = dataset.val_indices();
  if (indices.empty()) indices = dataset.train_indices();
  std::vector<rendering::Ray> rays;
  for (int vi : indices) {
    auto view_rays = rendering::generate_rays(dataset.views[static_cast<size_t>(vi)].camera,
                                              dataset.bounds);
    rays.insert(rays.end(), view_rays.begin(), view_rays.end());
  }
  rendering::SampleBatch sb =
      rendering::stratified_sample(rays, 32, util::derive_seed(cfg.seed, 0x9c1), false);

  Eigen::VectorXd sigma;
  Eigen::MatrixXd color;
  std::vector<int> top1;
  if (lf.kind == "field") {
    auto raw = fields::field_forward_raw(lf.store, lf.network, sb.positions, sb.directions);
    sigma = std::move(raw.sigma);
    color = std::move(raw.color);
    top1 = std::move(raw.top1);
  } else {
    auto raw = fields::radiance_forward_raw(lf.store, lf.radiance, sb.positions, sb.directions);
    sigma = std::move(raw.sigma);
    color = std::move(raw.color);
    top1.assign(static_cast<size_t>(sb.num_samples()), 0);  // all "scene"
  }
  const Eigen::VectorXd alpha = (1.0 - (-sigma.array() * sb.delta.array()).exp()).matrix();

  const int empty_index = lf.kind == "field" ? lf.network.scene_subnets : -1;
  std::vector<int> scene_rows, empty_rows;
  for (int i = 0; i < sb.num_samples(); ++i)
    (top1[static_cast<size_t>(i)] == empty_index ? empty_rows : scene_rows).push_back(i);

  auto subset = [&](const std::vector<int>& rows, const std::string& stem) {
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(rows.size()), 3);
    Eigen::MatrixXd cols(static_cast<Eigen::Index>(rows.size()), 3);
    Eigen::VectorXd al(static_cast<Eigen::Index>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
      pts.row(static_cast<Eigen::Index>(i)) = sb.positions.row(rows[i]);
      cols.row(static_cast<Eigen::Index>(i)) = color.row(rows[i]);
      al(static_cast<Eigen::Index>(i)) = alpha(rows[i]);
    }
    const std::vector<std::string> comments = {"config_hash " + config_hash};
    evalkit::write_ply(outdir / (stem + "_rgb.ply"), pts, cols, al, evalkit::PlyMode::kRgb,
                       comments);
    evalkit::write_ply(outdir / (stem + "_rgba.ply"), pts, cols, al, evalkit::PlyMode::kRgba,
                       comments);
  };
  subset(scene_rows, "scene");
  subset(empty_rows, "empty");
}

}  // namespace

int cmd_generate_scene(const ExperimentConfig& cfg, const std::filesystem::path& outdir,
                       bool force, const std::string& config_hash) {
  if (std::filesystem::exists(outdir) && !std::filesystem::is_empty(outdir) && !force) {
    std::cerr << "error: output directory exists and is not empty (use --force): " << outdir
              << "\n";
    return kExitUsage;
  }
  scene::make_dataset(cfg, outdir, true);
  write_manifest(outdir, cfg, {{"config", config_hash}});
  std::cout << "dataset written to " << outdir.string() << "\n";
  return kExitOk;
}

int cmd_train_occupancy(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                        const std::filesystem::path& outdir, const std::string& config_hash) {
  const auto dataset = scene::load_dataset(data_dir);
  const auto result = train_occupancy(cfg, dataset, outdir);
  auto hashes = hash_inputs({{"dataset", data_dir / "dataset.json"}});
  hashes.emplace_back("config", config_hash);
  write_manifest(outdir, cfg, hashes);
  if (!result.ok) {
    std::cerr << "error: " << result.error << "\n";
    return kExitNumeric;
  }
  std::cout << "trained " << result.steps_run << " steps; final checkpoint "
            << result.checkpoint.string() << "\n";
  return kExitOk;
}

int cmd_train_guided(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                     const std::optional<std::filesystem::path>& occupancy_ckpt,
                     const std::string& sampler, const std::filesystem::path& outdir,
                     const std::string& config_hash) {
  if (sampler != "guided" && sampler != "dense") {
    std::cerr << "error: unknown sampler '" << sampler << "' (use guided or dense)\n";
    return kExitUsage;
  }
  const SamplerMode mode = sampler == "guided" ? SamplerMode::kGuided : SamplerMode::kDense;
  if (mode == SamplerMode::kGuided &&
      (!occupancy_ckpt || !std::filesystem::exists(*occupancy_ckpt))) {
    std::cerr << "error: guided training requires an existing --occupancy checkpoint\n";
    return kExitUsage;
  }
  const auto dataset = scene::load_dataset(data_dir);
  const auto result = train_radiance(cfg, dataset, mode, occupancy_ckpt, false, outdir);
  auto hashes = hash_inputs({{"dataset", data_dir / "dataset.json"},
                             {"occupancy", occupancy_ckpt.value_or("")}});
  hashes.emplace_back("config", config_hash);
  write_manifest(outdir, cfg, hashes);
  if (!result.ok) {
    std::cerr << "error: " << result.error << "\n";
    return kExitNumeric;
  }
  std::cout << "trained " << result.steps_run << " steps (" << sampler << "); psnr "
            << util::format_double(result.final_psnr) << "; main evals/ray "
            << util::format_double(result.main_points_per_ray) << "\n";
  return kExitOk;
}

int cmd_train_grid_baseline(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                            const std::filesystem::path& outdir,
                            const std::string& config_hash) {
  const auto dataset = scene::load_dataset(data_dir);
  const auto result =
      train_radiance(cfg, dataset, SamplerMode::kGridGuided, std::nullopt, true, outdir);
  auto hashes = hash_inputs({{"dataset", data_dir / "dataset.json"}});
  hashes.emplace_back("config", config_hash);
  write_manifest(outdir, cfg, hashes);
  if (!result.ok) {
    std::cerr << "error: " << result.error << "\n";
    return kExitNumeric;
  }
  std::cout << "grid baseline trained " << result.steps_run << " steps; grid at "
            << (outdir / "grid.bin").string() << "\n";
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
             const std::optional<std::filesystem::path>& occupancy_ckpt,
             const std::optional<std::filesystem::path>& grid_snapshot,
             const std::vector<std::filesystem::path>& nerf_ckpts,
             const std::filesystem::path& outdir, const std::string& config_hash) {
  const auto dataset = scene::load_dataset(data_dir);
  std::filesystem::create_directories(outdir);
  const int threads = cfg.resolved_threads();

  // Occupancy metric table (reference = oracle grid at matching resolution).
  std::string occ_table = "# config_hash=" + config_hash + "\n";
  occ_table += "method,resolution,accuracy,precision,recall,f1,param_number,occupancy_ratio\n";
  auto metric_row = [&](const std::string& method, int resolution,
                        const std::vector<uint8_t>& predicted, long params) {
    const auto reference = dataset.oracle.occupancy_grid(resolution, threads);
    const auto m = evalkit::occupancy_metrics(predicted, reference);
    occ_table += util::csv_row({method, std::to_string(resolution),
                                util::format_double(m.accuracy()),
                                util::format_double(m.precision()),
                                util::format_double(m.recall()), util::format_double(m.f1()),
                                std::to_string(params),
                                util::format_double(m.occupancy_ratio())});
  };

  std::optional<LoadedField> occ_field;
  if (occupancy_ckpt) {
    occ_field = load_field(*occupancy_ckpt);
    if (occ_field->kind != "field") {
      std::cerr << "error: --occupancy must point to a field checkpoint\n";
      return kExitUsage;
    }
    const auto net_grid =
        evalkit::network_to_grid(occ_field->store, occ_field->network, cfg.eval.grid_resolution,
                                 dataset.bounds, cfg.eval.jitter_probes, cfg.seed, threads);
    metric_row("network", cfg.eval.grid_resolution, net_grid,
               fields::count_parameters(occ_field->network, fields::Component::kOccupancy));
  }
  if (grid_snapshot) {
    const auto grid = grid::OccGrid::load(*grid_snapshot);
    metric_row("grid", grid.resolution(), grid.occupancy(), grid.cell_count());
  }

  // Reference-style conversion: ground-truth depth maps splatted into cells.
  {
    std::vector<Eigen::VectorXd> depths, opacities;
    std::vector<rendering::Camera> cams;
    for (const auto& view : dataset.views) {
      depths.push_back(view.depth);
      opacities.push_back(view.opacity);
      cams.push_back(view.camera);
    }
    const auto splat = evalkit::depth_points_to_grid(depths, opacities, cams,
                                                     cfg.eval.grid_resolution, dataset.bounds);
    metric_row("depth_splat", cfg.eval.grid_resolution, splat, 0);
  }
  util::write_text_file(outdir / "occupancy_metrics.csv", occ_table);

  // PSNR table over validation views for each radiance/field checkpoint.
  std::string psnr_table = "# config_hash=" + config_hash + "\n";
  psnr_table += "model,view,psnr\n";
  std::vector<LoadedField> models;
  models.reserve(nerf_ckpts.size());
  std::vector<std::vector<Eigen::MatrixXd>> renders(nerf_ckpts.size());
  const auto val = dataset.val_indices();
  for (size_t m = 0; m < nerf_ckpts.size(); ++m) {
    models.push_back(load_field(nerf_ckpts[m]));
    rendering::RenderOptions opts;
    opts.samples_per_ray = cfg.eval.render_samples;
    opts.jitter = false;
    opts.want_depth = false;
    opts.background = cfg.background;
    opts.threads = threads;
    const auto fn = field_fn_of(models.back());
    double total = 0;
    for (int vi : val) {
      const auto& view = dataset.views[static_cast<size_t>(vi)];
      rendering::Image img = rendering::render_image(view.camera, dataset.bounds, fn, opts);
      const double v = evalkit::psnr(img.rgb, view.rgb);
      total += v;
      renders[m].push_back(img.rgb);
      psnr_table += util::csv_row({nerf_ckpts[m].filename().string(), std::to_string(vi),
                                   util::format_double(v)});
    }
    if (!val.empty())
      psnr_table += util::csv_row({nerf_ckpts[m].filename().string(), "mean",
                                   util::format_double(total / val.size())});
  }
  // Pairwise comparison when exactly two checkpoints are given (a checkpoint
  // against itself reports the +inf sentinel).
  if (renders.size() == 2 && !renders[0].empty()) {
    double total = 0;
    for (size_t i = 0; i < renders[0].size(); ++i)
      total += evalkit::psnr(renders[0][i], renders[1][i]);
    psnr_table += util::csv_row(
        {"pair", "mean", util::format_double(total / static_cast<double>(renders[0].size()))});
  }
  util::write_text_file(outdir / "psnr.csv", psnr_table);

  if (occ_field) export_pointclouds(cfg, dataset, *occ_field, outdir, config_hash);

  auto hashes = hash_inputs({{"dataset", data_dir / "dataset.json"},
                             {"occupancy", occupancy_ckpt.value_or("")},
                             {"grid", grid_snapshot.value_or("")}});
  hashes.emplace_back("config", config_hash);
  write_manifest(outdir, cfg, hashes);
  std::cout << "eval report written to " << outdir.string() << "\n";
  return kExitOk;
}

int cmd_bench(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
              const std::optional<std::filesystem::path>& occupancy_ckpt,
              const std::optional<std::filesystem::path>& grid_snapshot,
              const std::filesystem::path& outdir, const std::string& config_hash) {
  const auto dataset = scene::load_dataset(data_dir);
  std::filesystem::create_directories(outdir);

  std::optional<LoadedField> occ_field;
  if (occupancy_ckpt) occ_field = load_field(*occupancy_ckpt);
  std::optional<grid::OccGrid> grid;
  if (grid_snapshot) grid.emplace(grid::OccGrid::load(*grid_snapshot));

  // A neutral probe field stands in for the main network so every mode pays
  // the same per-point cost.
  util::Rng probe_rng(cfg.seed);
  diff::ParamStore probe;
  fields::init_radiance_params(probe, cfg.radiance, probe_rng);

  std::vector<rendering::Ray> rays;
  {
    const auto idx = dataset.train_indices();
    const auto& cam = dataset.views[static_cast<size_t>(idx.front())].camera;
    rays = rendering::generate_rays(cam, dataset.bounds);
    rays.resize(std::min<size_t>(rays.size(), 512));
  }

  struct ModeResult {
    std::string name;
    double ms_per_batch = 0;
    double points_per_ray = 0;
    long rounds = 0;
  };
  std::vector<ModeResult> modes;
  auto run_mode = [&](const std::string& name, const std::function<rendering::SampleBatch(uint64_t)>& sample) {
    ModeResult mr;
    mr.name = name;
    const int rounds = 5;
    long total_points = 0;
    const auto begin = std::chrono::steady_clock::now();
    for (int i = 0; i < rounds; ++i) {
      rendering::SampleBatch sb = sample(util::derive_seed(cfg.seed, 0xbe4c + i));
      if (sb.num_samples() > 0)
        fields::radiance_forward_raw(probe, cfg.radiance, sb.positions, sb.directions);
      total_points += sb.num_samples();
    }
    const auto end = std::chrono::steady_clock::now();
    mr.ms_per_batch =
        std::chrono::duration<double, std::milli>(end - begin).count() / rounds;
    mr.points_per_ray = static_cast<double>(total_points) /
                        (static_cast<double>(rounds) * static_cast<double>(rays.size()));
    mr.rounds = rounds;
    modes.push_back(mr);
  };

  run_mode("dense", [&](uint64_t seed) {
    return rendering::stratified_sample(rays, cfg.guided.dense_samples, seed, true);
  });
  if (grid)
    run_mode("grid_guided", [&](uint64_t seed) {
      return grid::grid_guided_sample(rays, *grid, cfg.guided.coarse_samples,
                                      cfg.guided.split_factor, seed, true)
          .batch;
    });
  if (occ_field)
    run_mode("network_guided", [&](uint64_t seed) {
      const rendering::OccupancyPredicate pred = [&](const Eigen::MatrixXd& pts,
                                                     std::vector<uint8_t>& occ) {
        occ = fields::predict_occupied(occ_field->store, occ_field->network, pts);
      };
      return rendering::guided_sample(rays, pred, cfg.guided.coarse_samples,
                                      cfg.guided.split_factor, seed, true)
          .batch;
    });

  json report;
  report["config_hash"] = config_hash;
  json jmodes = json::array();
  std::string csv = "# config_hash=" + config_hash + "\n";
  csv += "kind,name,ms_per_batch,points_per_ray,cells,param_number,bytes\n";
  for (const auto& m : modes) {
    jmodes.push_back({{"name", m.name},
                      {"ms_per_batch", m.ms_per_batch},
                      {"points_per_ray", m.points_per_ray},
                      {"rounds", m.rounds}});
    csv += util::csv_row({"timing", m.name, util::format_double(m.ms_per_batch),
                          util::format_double(m.points_per_ray), "", "", ""});
  }
  report["timings"] = jmodes;

  json jmem = json::array();
  for (int r : {32, 64, 128}) {
    const auto mem = grid::OccGrid::memory_report(r);
    jmem.push_back({{"resolution", r},
                    {"cells", mem.cells},
                    {"bytes", mem.total_bytes()}});
    csv += util::csv_row({"memory", "grid_" + std::to_string(r), "", "",
                          std::to_string(mem.cells), "", std::to_string(mem.total_bytes())});
  }
  const long occ_params =
      occ_field ? fields::count_parameters(occ_field->network, fields::Component::kOccupancy)
                : fields::count_parameters(cfg.network, fields::Component::kOccupancy);
  jmem.push_back({{"resolution", 0}, {"occupancy_params", occ_params}});
  csv += util::csv_row({"memory", "occupancy_network", "", "", "", std::to_string(occ_params),
                        std::to_string(occ_params * static_cast<long>(sizeof(double)))});
  report["memory"] = jmem;

  util::write_text_file(outdir / "bench.json", report.dump(2) + "\n");
  util::write_text_file(outdir / "bench.csv", csv);

  auto hashes = hash_inputs({{"dataset", data_dir / "dataset.json"},
                             {"occupancy", occupancy_ckpt.value_or("")},
                             {"grid", grid_snapshot.value_or("")}});
  hashes.emplace_back("config", config_hash);
  write_manifest(outdir, cfg, hashes);
  std::cout << "bench report written to " << outdir.string() << "\n";
  return kExitOk;
}

int cmd_export_pointcloud(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                          const std::filesystem::path& checkpoint,
                          const std::filesystem::path& outdir, const std::string& config_hash) {
  const auto dataset = scene::load_dataset(data_dir);
  std::filesystem::create_directories(outdir);
  const auto lf = load_field(checkpoint);
  export_pointclouds(cfg, dataset, lf, outdir, config_hash);
  auto hashes = hash_inputs(
      {{"dataset", data_dir / "dataset.json"}, {"checkpoint", checkpoint}});
  hashes.emplace_back("config", config_hash);
  write_manifest(outdir, cfg, hashes);
  std::cout << "point clouds written to " << outdir.string() << "\n";
  return kExitOk;
}

int cmd_render(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& checkpoint, int view_index,
               const std::filesystem::path& outdir, const std::string& config_hash) {
  const auto dataset = scene::load_dataset(data_dir);
  if (view_index < 0 || view_index >= static_cast<int>(dataset.views.size())) {
    std::cerr << "error: view index out of range\n";
    return kExitUsage;
  }
  std::filesystem::create_directories(outdir);
  const auto lf = load_field(checkpoint);
  const auto& view = dataset.views[static_cast<size_t>(view_index)];

  rendering::RenderOptions opts;
  opts.samples_per_ray = cfg.eval.render_samples;
  opts.jitter = false;
  opts.want_depth = true;
  opts.background = cfg.background;
  opts.threads = cfg.resolved_threads();
  rendering::Image img =
      rendering::render_image(view.camera, dataset.bounds, field_fn_of(lf), opts);

  evalkit::write_png(outdir / "render.png", img.rgb, img.width, img.height);
  evalkit::write_ppm(outdir / "render.ppm", img.rgb, img.width, img.height);
  evalkit::write_depth(outdir / "render.depth", img.depth, img.width, img.height);

  auto hashes = hash_inputs(
      {{"dataset", data_dir / "dataset.json"}, {"checkpoint", checkpoint}});
  hashes.emplace_back("config", config_hash);
  write_manifest(outdir, cfg, hashes);
  std::cout << "render written to " << outdir.string() << " (psnr vs ground truth: "
            << util::format_double(evalkit::psnr(img.rgb, view.rgb)) << ")\n";
  return kExitOk;
}

}  // namespace occlab::cli
