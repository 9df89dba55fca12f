#pragma once

#include <Eigen/Dense>
#include <functional>

#include "occlab/diff.hpp"
#include "occlab/sampling.hpp"

namespace occlab::rendering {

// Per-sample quantities produced alongside the rendered colors; these are
// plain arrays (no gradient path) for statistics and visualization.
struct CompositeAux {
  Eigen::VectorXd alpha;        // 1 - exp(-sigma * delta), per sample
  Eigen::VectorXd weight;       // T_i * alpha_i, per sample
  Eigen::VectorXd trans;        // T_i at each sample
  Eigen::VectorXd final_trans;  // transmittance past the last sample, per ray
  Eigen::VectorXd opacity;      // sum of weights, per ray
  Eigen::VectorXd depth;        // sum of weight * t, per ray
};

struct CompositeResult {
  diff::Value color;  // num_rays x 3
  CompositeAux aux;
};

// Alpha compositing: alpha_i = 1 - exp(-sigma_i delta_i),
// T_i = exp(-sum_{j<i} sigma_j delta_j), C = sum T_i alpha_i c_i plus the
// residual transmittance times `background` (so a zero-density field and a
// ray with no samples both render the background). Backward produces exact
// gradients for sigma and color.
CompositeResult composite(const diff::Value& sigma, const diff::Value& color,
                          const SampleBatch& samples, const Eigen::Vector3d& background);

// Graph-free variant for rendering paths.
struct RawComposite {
  Eigen::MatrixXd color;  // num_rays x 3
  CompositeAux aux;
};
RawComposite composite_raw(const Eigen::VectorXd& sigma, const Eigen::MatrixXd& color,
                           const SampleBatch& samples, const Eigen::Vector3d& background);

// Evaluates sigma/color for a batch of sample points.
using FieldFn = std::function<void(const Eigen::MatrixXd& positions,
                                   const Eigen::MatrixXd& directions, Eigen::VectorXd& sigma,
                                   Eigen::MatrixXd& color)>;

struct Image {
  int width = 0, height = 0;
  Eigen::MatrixXd rgb;      // (w*h) x 3, row-major pixels, values in [0,1]
  Eigen::VectorXd depth;    // w*h (zero where nothing was hit)
  Eigen::VectorXd opacity;  // w*h
};

struct RenderOptions {
  int samples_per_ray = 256;
  uint64_t seed = 0;
  bool jitter = false;
  bool want_depth = true;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  int threads = 1;
};

// Per-pixel composite of `field` over the camera's rays; deterministic for a
// fixed seed regardless of thread count.
Image render_image(const Camera& cam, const Aabb& bounds, const FieldFn& field,
                   const RenderOptions& opts);

// Same, but sampling through a guided sampler predicate.
Image render_image_guided(const Camera& cam, const Aabb& bounds, const FieldFn& field,
                          const OccupancyPredicate& predicate, int coarse_samples,
                          int split_factor, const RenderOptions& opts);

}  // namespace occlab::rendering
