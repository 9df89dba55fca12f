#pragma once

#include <Eigen/Dense>
#include <filesystem>

namespace occlab::evalkit {

// RGB images are (w*h) x 3 row-major pixel matrices with values in [0,1];
// writers clamp and quantize to 8 bits.
void write_png(const std::filesystem::path& path, const Eigen::MatrixXd& rgb, int width,
               int height);
Eigen::MatrixXd read_png(const std::filesystem::path& path, int& width, int& height);

void write_ppm(const std::filesystem::path& path, const Eigen::MatrixXd& rgb, int width,
               int height);

// 32-bit float plane with a small header (magic, width, height).
void write_depth(const std::filesystem::path& path, const Eigen::VectorXd& depth, int width,
                 int height);
Eigen::VectorXd read_depth(const std::filesystem::path& path, int& width, int& height);

}  // namespace occlab::evalkit
