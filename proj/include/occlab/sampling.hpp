#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "occlab/camera.hpp"

namespace occlab::rendering {

// Flattened per-sample arrays for a batch of rays. ray_offsets has
// num_rays + 1 entries delimiting each ray's slice; rays that miss the
// scene bounds (or keep no samples) own an empty slice.
struct SampleBatch {
  Eigen::MatrixXd positions;   // S x 3
  Eigen::MatrixXd directions;  // S x 3
  Eigen::VectorXd t;           // S, depth along the ray
  Eigen::VectorXd delta;       // S, distance to the next sample / segment end
  std::vector<int> ray_offsets;

  int num_rays() const { return static_cast<int>(ray_offsets.size()) - 1; }
  int num_samples() const { return static_cast<int>(positions.rows()); }
  int ray_begin(int r) const { return ray_offsets[static_cast<size_t>(r)]; }
  int ray_end(int r) const { return ray_offsets[static_cast<size_t>(r) + 1]; }
};

// N samples per ray, one uniform draw per equal-width bin (bin midpoints when
// jitter is off). delta_i = t_{i+1} - t_i, with the last delta running to
// t_far. Per-ray seeds are derived from `seed` and the ray index.
SampleBatch stratified_sample(const std::vector<Ray>& rays, int samples_per_ray,
                              uint64_t seed, bool jitter);

// Batched occupancy test: fills `occupied` (one flag per row of `points`).
using OccupancyPredicate =
    std::function<void(const Eigen::MatrixXd& points, std::vector<uint8_t>& occupied)>;

OccupancyPredicate always_occupied_predicate();

struct GuidedSampleResult {
  SampleBatch batch;
  long coarse_points = 0;    // points evaluated by the predicate
  long occupied_coarse = 0;  // coarse samples kept
};

// Two-stage sampler: coarse stratified samples are filtered by `predicate`;
// each occupied coarse sample's bin is subdivided into `split_factor` fine
// samples at the sub-bin midpoints (deterministic). Unoccupied bins are
// dropped, so the main field never sees a point the predicate rejected.
GuidedSampleResult guided_sample(const std::vector<Ray>& rays, const OccupancyPredicate& predicate,
                                 int coarse_samples, int split_factor, uint64_t seed,
                                 bool jitter_coarse);

}  // namespace occlab::rendering
