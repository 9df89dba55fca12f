#pragma once

#include <filesystem>
#include <string>

#include "occlab/losses.hpp"
#include "occlab/networks.hpp"
#include "occlab/scene_oracle.hpp"

namespace occlab::cli {

struct CameraConfig {
  int count = 24;
  int val_count = 4;
  double radius = 2.6;
  double fov_deg = 48.0;
  int width = 64;
  int height = 64;
  bool hemisphere = false;
};

struct DatasetConfig {
  int quadrature_samples = 512;  // samples/ray for ground-truth rendering
};

struct TrainConfig {
  long steps = 5000;
  int rays_per_batch = 64;
  int samples_per_ray = 64;
  long log_every = 50;
  long checkpoint_every = 1000;
  long eval_every = 500;
  int eval_rays = 2048;  // validation rays used for routing statistics
};

struct GuidedConfig {
  long steps = 1200;
  int rays_per_batch = 32;
  int coarse_samples = 128;
  int split_factor = 8;
  int dense_samples = 512;  // dense-sampler baseline
  long log_every = 50;
  long eval_every = 400;
};

struct GridConfig {
  bool enabled = true;
  int resolution = 32;
  double decay = 0.95;
  double threshold = 0.01;
  long update_every = 16;
  // Standalone grid-baseline run: the grid guides sampling of its own
  // radiance field and is updated from it, after a dense warmup.
  long steps = 15000;
  long warmup_steps = 500;
  int warmup_samples = 128;
};

struct EvalConfig {
  int grid_resolution = 32;
  int jitter_probes = 0;
  int render_samples = 512;
};

struct ExperimentConfig {
  uint64_t seed = 1;
  int threads = 0;  // 0 = all available cores
  std::string output_dir = "out";

  scene::SceneOracle scene = scene::desk_scene();
  CameraConfig cameras;
  DatasetConfig dataset;
  fields::NetworkConfig network;
  fields::RadianceConfig radiance;
  losses::LossWeights loss_weights;
  int virtual_subnets = 8;  // v
  diff::AdamConfig optimizer;
  TrainConfig train;
  GuidedConfig guided;
  GridConfig grid;
  EvalConfig eval;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();

  int resolved_threads() const;

  // Resolved config echoed into every manifest; parsing the echo yields the
  // same config.
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// Output manifest helper: resolved config + content hashes of the inputs the
// command consumed.
void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& input_hashes);

}  // namespace occlab::cli
