#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <vector>

#include "occlab/camera.hpp"
#include "occlab/sampling.hpp"

namespace occlab::grid {

using rendering::Aabb;
using rendering::Vec3;

// Evaluates density for a batch of points (directions are irrelevant here).
using SigmaFn = std::function<void(const Eigen::MatrixXd& points, Eigen::VectorXd& sigma)>;

struct MemoryReport {
  long cells = 0;
  long value_bytes = 0;
  long bitfield_bytes = 0;
  long total_bytes() const { return value_bytes + bitfield_bytes; }
};

// Dense momentum density grid: cell values are updated by
// value <- max(decay * value, sampled sigma) and binarized by threshold.
class OccGrid {
 public:
  OccGrid(int resolution, const Aabb& bounds, double decay = 0.95, double threshold = 0.01);

  int resolution() const { return resolution_; }
  const Aabb& bounds() const { return bounds_; }
  double decay() const { return decay_; }
  double threshold() const { return threshold_; }
  long cell_count() const { return static_cast<long>(values_.size()); }

  // One momentum pass over every cell: sample one jittered point per cell,
  // evaluate sigma, apply the max-decay rule, then rebinarize. `update_seed`
  // should change per pass; per-cell jitter derives from it so results do not
  // depend on the thread count.
  void update(const SigmaFn& field, uint64_t update_seed, int threads = 1);

  bool query(const Vec3& p) const;

  double value_at(long cell) const { return values_[static_cast<size_t>(cell)]; }
  bool occupied_at(long cell) const { return occupied_[static_cast<size_t>(cell)] != 0; }
  const std::vector<uint8_t>& occupancy() const { return occupied_; }

  long cell_index(const Vec3& p) const;  // -1 outside bounds
  Vec3 cell_center(long cell) const;

  void binarize();

  static MemoryReport memory_report(int resolution);

  // Snapshot: header (resolution, bounds, decay, threshold) + raw values.
  void save(const std::filesystem::path& path) const;
  static OccGrid load(const std::filesystem::path& path);

  rendering::OccupancyPredicate predicate() const;

 private:
  int resolution_;
  Aabb bounds_;
  double decay_;
  double threshold_;
  std::vector<double> values_;
  std::vector<uint8_t> occupied_;
};

// Same pipeline as rendering::guided_sample with the grid query as the
// predicate, so the two estimators filter identically.
rendering::GuidedSampleResult grid_guided_sample(const std::vector<rendering::Ray>& rays,
                                                 const OccGrid& grid, int coarse_samples,
                                                 int split_factor, uint64_t seed,
                                                 bool jitter_coarse);

}  // namespace occlab::grid
