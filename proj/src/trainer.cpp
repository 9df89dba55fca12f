#include "occlab/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>

#include "occlab/compositing.hpp"
#include "occlab/losses.hpp"
#include "occlab/metrics.hpp"
#include "occlab/util.hpp"

namespace occlab::cli {

using nlohmann::json;

namespace {

// All rays of the listed views, flattened, with their ground-truth colors.
struct RayPool {
  std::vector<rendering::Ray> rays;
  Eigen::MatrixXd colors;
};

RayPool build_ray_pool(const scene::Dataset& ds, const std::vector<int>& view_indices) {
  RayPool pool;
  long total = 0;
  for (int vi : view_indices)
    total += static_cast<long>(ds.views[static_cast<size_t>(vi)].rgb.rows());
  pool.rays.reserve(static_cast<size_t>(total));
  pool.colors.resize(total, 3);
  long row = 0;
  for (int vi : view_indices) {
    const auto& view = ds.views[static_cast<size_t>(vi)];
    const auto cam_rays = rendering::generate_rays(view.camera, ds.bounds);
    for (size_t p = 0; p < cam_rays.size(); ++p) {
      pool.rays.push_back(cam_rays[p]);
      pool.colors.row(row++) = view.rgb.row(static_cast<Eigen::Index>(p));
    }
  }
  return pool;
}

struct RayBatch {
  std::vector<rendering::Ray> rays;
  Eigen::MatrixXd colors;
};

RayBatch draw_batch(const RayPool& pool, int count, util::Rng& rng) {
  RayBatch batch;
  batch.rays.reserve(static_cast<size_t>(count));
  batch.colors.resize(count, 3);
  for (int i = 0; i < count; ++i) {
    const auto r = rng.next_below(pool.rays.size());
    batch.rays.push_back(pool.rays[static_cast<size_t>(r)]);
    batch.colors.row(i) = pool.colors.row(static_cast<Eigen::Index>(r));
  }
  return batch;
}

Eigen::VectorXd alphas_from(const Eigen::VectorXd& sigma, const Eigen::VectorXd& delta) {
  return (1.0 - (-sigma.array() * delta.array()).exp()).matrix();
}

std::string field_meta(const ExperimentConfig& cfg, const char* kind) {
  json j;
  j["kind"] = kind;
  j["config"] = json::parse(cfg.to_json());
  return j.dump();
}

}  // namespace

TrainResult train_occupancy(const ExperimentConfig& cfg, const scene::Dataset& dataset,
                            const std::filesystem::path& outdir) {
  TrainResult result;
  std::filesystem::create_directories(outdir);

  util::Rng init_rng(util::derive_seed(cfg.seed, 0xf1e1d));
  diff::ParamStore store;
  fields::init_field_params(store, cfg.network, init_rng);

  const std::string meta = field_meta(cfg, "field");
  const auto init_path = outdir / "occ_init.ckpt";
  store.save(init_path, meta);
  result.checkpoint = init_path;

  RayPool train_pool = build_ray_pool(dataset, dataset.train_indices());
  RayPool val_pool = build_ray_pool(dataset, dataset.val_indices());
  if (train_pool.rays.empty()) {
    result.error = "dataset has no training rays";
    return result;
  }

  std::optional<grid::OccGrid> momentum_grid;
  if (cfg.grid.enabled)
    momentum_grid.emplace(cfg.grid.resolution, dataset.bounds, cfg.grid.decay,
                          cfg.grid.threshold);
  const grid::SigmaFn field_sigma = [&](const Eigen::MatrixXd& pts, Eigen::VectorXd& sigma) {
    // Directions do not matter for density; reuse a fixed axis.
    Eigen::MatrixXd dirs = Eigen::MatrixXd::Zero(pts.rows(), 3);
    dirs.col(2).setOnes();
    sigma = fields::field_forward_raw(store, cfg.network, pts, dirs).sigma;
  };

  std::ofstream loss_csv(outdir / "losses.csv", std::ios::trunc);
  loss_csv << "step,L_r,L_o,L_d,L_f,f_e,sigma_e_over_s\n";
  std::ofstream stats_csv(outdir / "stats.csv", std::ios::trunc);
  stats_csv << evalkit::OccStats::csv_header();

  // Fixed validation sample batch specification (rays re-drawn with a fixed
  // seed so every stats row measures the same distribution).
  util::Rng eval_pick(util::derive_seed(cfg.seed, 0xe7a1));
  std::vector<rendering::Ray> eval_rays;
  const RayPool& eval_pool = val_pool.rays.empty() ? train_pool : val_pool;
  for (int i = 0; i < cfg.train.eval_rays; ++i)
    eval_rays.push_back(eval_pool.rays[static_cast<size_t>(eval_pick.next_below(eval_pool.rays.size()))]);

  auto emit_stats = [&](long step) {
    rendering::SampleBatch sb = rendering::stratified_sample(
        eval_rays, cfg.train.samples_per_ray, util::derive_seed(cfg.seed, 0x57a75), false);
    if (sb.num_samples() == 0) return;
    auto raw = fields::field_forward_raw(store, cfg.network, sb.positions, sb.directions);
    const Eigen::VectorXd alpha = alphas_from(raw.sigma, sb.delta);
    const auto stats = evalkit::collect_occ_stats(step, raw.top1, cfg.network.scene_subnets,
                                                  raw.sigma, alpha);
    stats_csv << stats.csv_row();
    stats_csv.flush();
  };

  util::Rng batch_rng(util::derive_seed(cfg.seed, 0xba7c4));
  emit_stats(0);

  for (long step = 1; step <= cfg.train.steps; ++step) {
    RayBatch batch = draw_batch(train_pool, cfg.train.rays_per_batch, batch_rng);
    rendering::SampleBatch sb = rendering::stratified_sample(
        batch.rays, cfg.train.samples_per_ray, util::derive_seed(cfg.seed, 0x5a0000 + step), true);
    if (sb.num_samples() == 0) continue;

    const Eigen::MatrixXd enc_pos = fields::positional_encode(sb.positions, cfg.network.freq_bands);
    const Eigen::MatrixXd enc_dir =
        fields::positional_encode(sb.directions, cfg.network.dir_freq_bands);
    auto ff = fields::field_forward(store, cfg.network, enc_pos, enc_dir);
    auto comp = rendering::composite(ff.sigma, ff.color, sb, cfg.background);

    diff::Value l_r = losses::rendering_loss(comp.color, batch.colors);
    auto stats = losses::routing_stats(ff.gates, ff.routing.top1);
    diff::Value l_o = losses::imbalanced_occupancy_loss(stats, cfg.virtual_subnets);
    auto dl = losses::density_loss(ff.gates, ff.sigma, ff.routing.top1,
                                   cfg.network.scene_subnets);
    diff::Value l_f = losses::final_loss(l_r, l_o, dl.valid ? dl.value : diff::Value(),
                                         cfg.loss_weights);

    if (!std::isfinite(l_f.scalar())) {
      result.error = "non-finite loss at step " + std::to_string(step) +
                     "; last-good checkpoint: " + result.checkpoint.string();
      result.steps_run = step - 1;
      return result;
    }

    store.zero_grads();
    diff::backward(l_f);
    std::string diag;
    if (!store.adam_step(cfg.optimizer, &diag)) {
      result.error = "optimizer abort at step " + std::to_string(step) + ": " + diag +
                     "; last-good checkpoint: " + result.checkpoint.string();
      result.steps_run = step - 1;
      return result;
    }

    if (step % cfg.train.log_every == 0 || step == cfg.train.steps) {
      loss_csv << step << ',' << util::format_double(l_r.scalar()) << ','
               << util::format_double(l_o.scalar()) << ','
               << (dl.valid ? util::format_double(dl.value.scalar()) : std::string()) << ','
               << util::format_double(l_f.scalar()) << ','
               << util::format_double(stats.empty_fraction()) << ','
               << (dl.valid ? util::format_double(dl.sigma_e / dl.sigma_s) : std::string())
               << '\n';
      loss_csv.flush();
    }
    if (momentum_grid && step % cfg.grid.update_every == 0)
      momentum_grid->update(field_sigma, util::derive_seed(cfg.seed, 0x96d0000 + step),
                            cfg.resolved_threads());
    if (step % cfg.train.eval_every == 0 || step == cfg.train.steps) emit_stats(step);
    if (step % cfg.train.checkpoint_every == 0 && step != cfg.train.steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "occ_%06ld.ckpt", step);
      store.save(outdir / name, meta);
      result.checkpoint = outdir / name;
    }
  }

  if (cfg.train.steps > 0) {
    result.checkpoint = outdir / "occ_final.ckpt";
    store.save(result.checkpoint, meta);
  }
  if (momentum_grid) momentum_grid->save(outdir / "grid.bin");
  result.steps_run = cfg.train.steps;
  result.ok = true;
  return result;
}

RadianceTrainResult train_radiance(const ExperimentConfig& cfg, const scene::Dataset& dataset,
                                   SamplerMode mode,
                                   const std::optional<std::filesystem::path>& occupancy_ckpt,
                                   bool maintain_grid, const std::filesystem::path& outdir) {
  RadianceTrainResult result;
  std::filesystem::create_directories(outdir);

  // Frozen occupancy for guided sampling.
  std::optional<diff::ParamStore> occ_store;
  fields::NetworkConfig occ_cfg = cfg.network;
  if (mode == SamplerMode::kGuided) {
    if (!occupancy_ckpt) {
      result.error = "guided sampling requires an occupancy checkpoint";
      return result;
    }
    std::string meta;
    occ_store.emplace(diff::ParamStore::load(*occupancy_ckpt, &meta));
    const json jm = json::parse(meta);
    if (jm.value("kind", "") != "field") {
      result.error = "checkpoint is not a field checkpoint: " + occupancy_ckpt->string();
      return result;
    }
    occ_cfg = ExperimentConfig::from_json(jm.at("config").dump()).network;
    result.occ_hash_before = occ_store->values_hash();
  }
  const rendering::OccupancyPredicate predicate =
      occ_store ? rendering::OccupancyPredicate(
                      [&](const Eigen::MatrixXd& pts, std::vector<uint8_t>& occ) {
                        occ = fields::predict_occupied(*occ_store, occ_cfg, pts);
                      })
                : rendering::always_occupied_predicate();

  util::Rng init_rng(util::derive_seed(cfg.seed, 0xadd));
  diff::ParamStore store;
  fields::init_radiance_params(store, cfg.radiance, init_rng);
  const std::string meta = field_meta(cfg, "radiance");
  const auto init_path = outdir / "nerf_init.ckpt";
  store.save(init_path, meta);
  result.checkpoint = init_path;

  RayPool train_pool = build_ray_pool(dataset, dataset.train_indices());
  if (train_pool.rays.empty()) {
    result.error = "dataset has no training rays";
    return result;
  }

  std::optional<grid::OccGrid> momentum_grid;
  if (maintain_grid || mode == SamplerMode::kGridGuided)
    momentum_grid.emplace(cfg.grid.resolution, dataset.bounds, cfg.grid.decay,
                          cfg.grid.threshold);
  const grid::SigmaFn field_sigma = [&](const Eigen::MatrixXd& pts, Eigen::VectorXd& sigma) {
    Eigen::MatrixXd dirs = Eigen::MatrixXd::Zero(pts.rows(), 3);
    dirs.col(2).setOnes();
    sigma = fields::radiance_forward_raw(store, cfg.radiance, pts, dirs).sigma;
  };
  const long total_steps = mode == SamplerMode::kGridGuided ? cfg.grid.steps : cfg.guided.steps;

  const rendering::FieldFn radiance_fn = [&](const Eigen::MatrixXd& pts,
                                             const Eigen::MatrixXd& dirs, Eigen::VectorXd& sigma,
                                             Eigen::MatrixXd& color) {
    auto raw = fields::radiance_forward_raw(store, cfg.radiance, pts, dirs);
    sigma = std::move(raw.sigma);
    color = std::move(raw.color);
  };

  auto val_psnr = [&]() {
    const auto val = dataset.val_indices();
    if (val.empty()) return 0.0;
    rendering::RenderOptions opts;
    opts.samples_per_ray = cfg.guided.dense_samples;
    opts.jitter = false;
    opts.want_depth = false;
    opts.background = cfg.background;
    opts.threads = cfg.resolved_threads();
    double total = 0;
    for (int vi : val) {
      const auto& view = dataset.views[static_cast<size_t>(vi)];
      rendering::Image img =
          mode == SamplerMode::kGuided
              ? rendering::render_image_guided(view.camera, dataset.bounds, radiance_fn,
                                               predicate, cfg.guided.coarse_samples,
                                               cfg.guided.split_factor, opts)
              : rendering::render_image(view.camera, dataset.bounds, radiance_fn, opts);
      total += evalkit::psnr(img.rgb, view.rgb);
    }
    return total / static_cast<double>(val.size());
  };

  std::ofstream loss_csv(outdir / "losses.csv", std::ios::trunc);
  loss_csv << "step,L_r,psnr\n";

  util::Rng batch_rng(util::derive_seed(cfg.seed, 0xba7c5));
  long total_rays = 0, total_main = 0, total_coarse = 0;

  for (long step = 1; step <= total_steps; ++step) {
    RayBatch batch = draw_batch(train_pool, cfg.guided.rays_per_batch, batch_rng);
    const uint64_t step_seed = util::derive_seed(cfg.seed, 0x9a0000 + step);
    rendering::SampleBatch sb;
    if (mode == SamplerMode::kGuided) {
      auto gs = rendering::guided_sample(batch.rays, predicate, cfg.guided.coarse_samples,
                                         cfg.guided.split_factor, step_seed, true);
      sb = std::move(gs.batch);
      total_coarse += gs.coarse_points;
    } else if (mode == SamplerMode::kGridGuided && step > cfg.grid.warmup_steps) {
      auto gs = grid::grid_guided_sample(batch.rays, *momentum_grid, cfg.guided.coarse_samples,
                                         cfg.guided.split_factor, step_seed, true);
      sb = std::move(gs.batch);
      total_coarse += gs.coarse_points;
    } else {
      const int n = mode == SamplerMode::kGridGuided ? cfg.grid.warmup_samples
                                                     : cfg.guided.dense_samples;
      sb = rendering::stratified_sample(batch.rays, n, step_seed, true);
    }
    total_rays += static_cast<long>(batch.rays.size());
    total_main += sb.num_samples();

    diff::Value l_r;
    if (sb.num_samples() > 0) {
      const Eigen::MatrixXd enc_pos =
          fields::positional_encode(sb.positions, cfg.radiance.freq_bands);
      const Eigen::MatrixXd enc_dir =
          fields::positional_encode(sb.directions, cfg.radiance.dir_freq_bands);
      auto head = fields::radiance_forward(store, cfg.radiance, diff::Value::constant(enc_pos),
                                           diff::Value::constant(enc_dir));
      auto comp = rendering::composite(head.sigma, head.color, sb, cfg.background);
      l_r = losses::rendering_loss(comp.color, batch.colors);
    } else {
      continue;  // nothing visible in this batch
    }

    if (!std::isfinite(l_r.scalar())) {
      result.error = "non-finite loss at step " + std::to_string(step) +
                     "; last-good checkpoint: " + result.checkpoint.string();
      result.steps_run = step - 1;
      return result;
    }
    store.zero_grads();
    diff::backward(l_r);
    std::string diag;
    if (!store.adam_step(cfg.optimizer, &diag)) {
      result.error = "optimizer abort at step " + std::to_string(step) + ": " + diag;
      result.steps_run = step - 1;
      return result;
    }

    if (step % cfg.guided.log_every == 0 || step == total_steps) {
      const bool eval_now = step % cfg.guided.eval_every == 0 || step == total_steps;
      loss_csv << step << ',' << util::format_double(l_r.scalar()) << ','
               << (eval_now ? util::format_double(val_psnr()) : std::string()) << '\n';
      loss_csv.flush();
    }
    if (momentum_grid && step % cfg.grid.update_every == 0)
      momentum_grid->update(field_sigma, util::derive_seed(cfg.seed, 0x96d0000 + step),
                            cfg.resolved_threads());
  }

  if (total_steps > 0) {
    result.checkpoint = outdir / "nerf_final.ckpt";
    store.save(result.checkpoint, meta);
  }
  if (momentum_grid) momentum_grid->save(outdir / "grid.bin");

  result.final_psnr = val_psnr();
  result.main_points_per_ray =
      total_rays > 0 ? static_cast<double>(total_main) / static_cast<double>(total_rays) : 0.0;
  result.coarse_points_per_ray =
      total_rays > 0 ? static_cast<double>(total_coarse) / static_cast<double>(total_rays) : 0.0;
  if (occ_store) result.occ_hash_after = occ_store->values_hash();

  json report;
  report["mode"] = mode == SamplerMode::kGuided
                       ? "guided"
                       : (mode == SamplerMode::kGridGuided ? "grid_guided" : "dense");
  report["steps"] = total_steps;
  report["rays_trained"] = total_rays;
  report["main_points_per_ray"] = result.main_points_per_ray;
  report["coarse_points_per_ray"] = result.coarse_points_per_ray;
  report["final_psnr"] = result.final_psnr;
  report["occ_hash_before"] = result.occ_hash_before;
  report["occ_hash_after"] = result.occ_hash_after;
  util::write_text_file(outdir / "report.json", report.dump(2) + "\n");

  result.steps_run = total_steps;
  result.ok = true;
  return result;
}

}  // namespace occlab::cli
