#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "occlab/config.hpp"
#include "occlab/dataset.hpp"
#include "occlab/occ_grid.hpp"

namespace occlab::cli {

struct TrainResult {
  bool ok = false;
  std::string error;                  // set when ok == false
  std::filesystem::path checkpoint;   // last checkpoint written
  long steps_run = 0;
};

// Trains the occupancy network, scene sub-networks, and empty-space network
// end-to-end with the weighted rendering/occupancy/density loss. Writes
// losses.csv, stats.csv, periodic checkpoints, the final checkpoint, and
// (when enabled) a momentum grid maintained alongside the same field.
// A non-finite loss aborts with the last-good checkpoint on disk.
TrainResult train_occupancy(const ExperimentConfig& cfg, const scene::Dataset& dataset,
                            const std::filesystem::path& outdir);

enum class SamplerMode { kDense, kGuided, kGridGuided };

struct RadianceTrainResult : TrainResult {
  double main_points_per_ray = 0;    // main-field evaluations per trained ray
  double coarse_points_per_ray = 0;  // occupancy-network evaluations per ray
  double final_psnr = 0;             // mean over validation views
  std::string occ_hash_before, occ_hash_after;
};

// Trains a fresh single-MLP radiance field with dense stratified sampling,
// sampling guided by a frozen occupancy checkpoint, or sampling guided by a
// momentum grid that is itself updated from the field (the grid-baseline
// loop: dense warmup, then the grid filters coarse samples). When
// `maintain_grid` is set (implied by kGridGuided), the grid is saved as
// grid.bin.
RadianceTrainResult train_radiance(const ExperimentConfig& cfg, const scene::Dataset& dataset,
                                   SamplerMode mode,
                                   const std::optional<std::filesystem::path>& occupancy_ckpt,
                                   bool maintain_grid, const std::filesystem::path& outdir);

}  // namespace occlab::cli
