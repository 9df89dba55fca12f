#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "occlab/camera.hpp"
#include "occlab/networks.hpp"
#include "occlab/sampling.hpp"

namespace occlab::evalkit {

using rendering::Aabb;
using rendering::Vec3;

// Confusion counts over grid cells; positive = occupied.
struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long total() const { return tp + fp + fn + tn; }

  double accuracy() const;
  double precision() const;
  double recall() const;
  double f1() const;
  // Fraction of cells predicted occupied — the share that would be sent
  // through the main network.
  double occupancy_ratio() const;
};

// Cell-wise comparison of equally-sized occupancy grids; throws on mismatch.
ConfusionCounts occupancy_metrics(const std::vector<uint8_t>& predicted,
                                  const std::vector<uint8_t>& reference);

// Converts a frozen occupancy network into a dense grid by evaluating cell
// centers (plus `jitter_probes` extra jittered probes per cell when > 0; a
// cell is occupied if any probe is).
std::vector<uint8_t> network_to_grid(const fields::ParamStore& store,
                                     const fields::NetworkConfig& cfg, int resolution,
                                     const Aabb& bounds, int jitter_probes = 0,
                                     uint64_t seed = 0, int threads = 1);

// Marks the cell containing each depth-map point whose ray accumulated at
// least `min_opacity`. Mirrors building a reference grid from rendered depth.
std::vector<uint8_t> depth_points_to_grid(const std::vector<Eigen::VectorXd>& depths,
                                          const std::vector<Eigen::VectorXd>& opacities,
                                          const std::vector<rendering::Camera>& cameras,
                                          int resolution, const Aabb& bounds,
                                          double min_opacity = 0.5);

// 10 log10(1 / MSE) for images in [0,1]; identical images return +infinity.
double psnr(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Per-branch routing/density statistics for one evaluation batch
// (scene = any of the n sub-networks, empty = index n).
struct OccStats {
  long step = 0;
  double fraction_scene = 0, fraction_empty = 0;
  double mean_sigma_scene = 0, mean_sigma_empty = 0;
  double mean_alpha_scene = 0, mean_alpha_empty = 0;
  std::optional<double> sigma_ratio;  // scene / empty; missing when undefined
  std::optional<double> alpha_ratio;

  static std::string csv_header();
  std::string csv_row() const;
};

OccStats collect_occ_stats(long step, const std::vector<int>& top1, int scene_subnets,
                           const Eigen::VectorXd& sigma, const Eigen::VectorXd& alpha);

enum class PlyMode { kRgb, kRgba };

// ASCII PLY v1.0; in rgba mode each vertex carries alpha = 1 - exp(-sigma
// delta) as a float channel. `comments` go into the header.
void write_ply(const std::filesystem::path& path, const Eigen::MatrixXd& positions,
               const Eigen::MatrixXd& colors, const Eigen::VectorXd& alpha, PlyMode mode,
               const std::vector<std::string>& comments = {});

}  // namespace occlab::evalkit
