#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "occlab/config.hpp"

namespace occlab::cli {

// Shared exit codes: 0 success, 2 usage/config error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

int cmd_generate_scene(const ExperimentConfig& cfg, const std::filesystem::path& outdir,
                       bool force, const std::string& config_hash);

int cmd_train_occupancy(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                        const std::filesystem::path& outdir, const std::string& config_hash);

// sampler: "guided" (needs occupancy checkpoint) or "dense".
int cmd_train_guided(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                     const std::optional<std::filesystem::path>& occupancy_ckpt,
                     const std::string& sampler, const std::filesystem::path& outdir,
                     const std::string& config_hash);

int cmd_train_grid_baseline(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                            const std::filesystem::path& outdir, const std::string& config_hash);

int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
             const std::optional<std::filesystem::path>& occupancy_ckpt,
             const std::optional<std::filesystem::path>& grid_snapshot,
             const std::vector<std::filesystem::path>& nerf_ckpts,
             const std::filesystem::path& outdir, const std::string& config_hash);

int cmd_bench(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
              const std::optional<std::filesystem::path>& occupancy_ckpt,
              const std::optional<std::filesystem::path>& grid_snapshot,
              const std::filesystem::path& outdir, const std::string& config_hash);

int cmd_export_pointcloud(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                          const std::filesystem::path& checkpoint,
                          const std::filesystem::path& outdir, const std::string& config_hash);

// Renders view `view_index` of the dataset with the given checkpoint (field
// or radiance); writes PNG, PPM, and a depth plane.
int cmd_render(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& checkpoint, int view_index,
               const std::filesystem::path& outdir, const std::string& config_hash);

}  // namespace occlab::cli
