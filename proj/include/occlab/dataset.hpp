#pragma once

#include <filesystem>
#include <vector>

#include "occlab/camera.hpp"
#include "occlab/config.hpp"
#include "occlab/scene_oracle.hpp"

namespace occlab::scene {

struct DatasetView {
  rendering::Camera camera;
  Eigen::MatrixXd rgb;      // (w*h) x 3
  Eigen::VectorXd depth;    // w*h
  Eigen::VectorXd opacity;  // w*h
  bool validation = false;
};

struct Dataset {
  std::vector<DatasetView> views;
  SceneOracle oracle;
  rendering::Aabb bounds;
  uint64_t seed = 0;
  double gt_threshold = 0.5;

  std::vector<int> train_indices() const;
  std::vector<int> val_indices() const;
};

// Renders ground truth by dense midpoint quadrature of the oracle and writes
// PNG + depth + manifest into `dir`. Returns the in-memory dataset (float
// images, before 8-bit quantization).
Dataset make_dataset(const cli::ExperimentConfig& cfg, const std::filesystem::path& dir,
                     bool write_files = true);

Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace occlab::scene
