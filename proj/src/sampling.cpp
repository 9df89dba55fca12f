#include "occlab/sampling.hpp"

#include <stdexcept>

#include "occlab/util.hpp"

namespace occlab::rendering {

namespace {

struct RayBins {
  std::vector<double> t;      // sample depths
  std::vector<double> lo;     // bin starts
  std::vector<double> width;  // bin widths
};

RayBins ray_bins(const Ray& ray, int n, uint64_t ray_seed, bool jitter) {
  RayBins b;
  if (!ray.hits()) return b;
  util::Rng rng(ray_seed);
  const double span = (ray.t_far - ray.t_near) / n;
  b.t.resize(static_cast<size_t>(n));
  b.lo.resize(static_cast<size_t>(n));
  b.width.assign(static_cast<size_t>(n), span);
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? rng.next_double() : 0.5;
    b.lo[static_cast<size_t>(i)] = ray.t_near + i * span;
    b.t[static_cast<size_t>(i)] = ray.t_near + (i + u) * span;
  }
  return b;
}

}  // namespace

SampleBatch stratified_sample(const std::vector<Ray>& rays, int samples_per_ray,
                              uint64_t seed, bool jitter) {
  if (samples_per_ray < 2) throw std::invalid_argument("stratified_sample: need N >= 2");
  SampleBatch sb;
  sb.ray_offsets.resize(rays.size() + 1, 0);

  std::vector<std::vector<double>> per_ray_t(rays.size());
  int total = 0;
  for (size_t r = 0; r < rays.size(); ++r) {
    RayBins bins = ray_bins(rays[r], samples_per_ray, util::derive_seed(seed, r), jitter);
    per_ray_t[r] = std::move(bins.t);
    total += static_cast<int>(per_ray_t[r].size());
    sb.ray_offsets[r + 1] = total;
  }

  sb.positions.resize(total, 3);
  sb.directions.resize(total, 3);
  sb.t.resize(total);
  sb.delta.resize(total);
  for (size_t r = 0; r < rays.size(); ++r) {
    const auto& ts = per_ray_t[r];
    const int base = sb.ray_offsets[r];
    for (size_t i = 0; i < ts.size(); ++i) {
      const int row = base + static_cast<int>(i);
      sb.t(row) = ts[i];
      sb.positions.row(row) = (rays[r].origin + ts[i] * rays[r].dir).transpose();
      sb.directions.row(row) = rays[r].dir.transpose();
      sb.delta(row) = (i + 1 < ts.size() ? ts[i + 1] : rays[r].t_far) - ts[i];
    }
  }
  return sb;
}

OccupancyPredicate always_occupied_predicate() {
  return [](const Eigen::MatrixXd& points, std::vector<uint8_t>& occupied) {
    occupied.assign(static_cast<size_t>(points.rows()), 1);
  };
}

GuidedSampleResult guided_sample(const std::vector<Ray>& rays, const OccupancyPredicate& predicate,
                                 int coarse_samples, int split_factor, uint64_t seed,
                                 bool jitter_coarse) {
  if (coarse_samples < 2) throw std::invalid_argument("guided_sample: need coarse N >= 2");
  if (split_factor < 1) throw std::invalid_argument("guided_sample: split factor >= 1");

  GuidedSampleResult result;

  // Coarse stage: all rays' coarse samples in one predicate call.
  std::vector<RayBins> bins(rays.size());
  int coarse_total = 0;
  for (size_t r = 0; r < rays.size(); ++r) {
    bins[r] = ray_bins(rays[r], coarse_samples, util::derive_seed(seed, r), jitter_coarse);
    coarse_total += static_cast<int>(bins[r].t.size());
  }
  Eigen::MatrixXd coarse_pts(coarse_total, 3);
  {
    int row = 0;
    for (size_t r = 0; r < rays.size(); ++r)
      for (double tc : bins[r].t)
        coarse_pts.row(row++) = (rays[r].origin + tc * rays[r].dir).transpose();
  }
  std::vector<uint8_t> occupied;
  if (coarse_total > 0) {
    predicate(coarse_pts, occupied);
    if (occupied.size() != static_cast<size_t>(coarse_total))
      throw std::runtime_error("guided_sample: predicate returned wrong flag count");
  }
  result.coarse_points = coarse_total;

  // Fine stage: subdivide kept bins uniformly.
  SampleBatch& sb = result.batch;
  sb.ray_offsets.resize(rays.size() + 1, 0);
  int fine_total = 0;
  {
    int row = 0;
    for (size_t r = 0; r < rays.size(); ++r) {
      for (size_t i = 0; i < bins[r].t.size(); ++i, ++row)
        if (occupied[static_cast<size_t>(row)]) {
          ++result.occupied_coarse;
          fine_total += split_factor;
        }
      sb.ray_offsets[r + 1] = fine_total;
    }
  }
  sb.positions.resize(fine_total, 3);
  sb.directions.resize(fine_total, 3);
  sb.t.resize(fine_total);
  sb.delta.resize(fine_total);
  {
    int row = 0, out = 0;
    for (size_t r = 0; r < rays.size(); ++r) {
      for (size_t i = 0; i < bins[r].t.size(); ++i, ++row) {
        if (!occupied[static_cast<size_t>(row)]) continue;
        const double sub = bins[r].width[i] / split_factor;
        for (int k = 0; k < split_factor; ++k, ++out) {
          const double tf = bins[r].lo[i] + (k + 0.5) * sub;
          sb.t(out) = tf;
          sb.positions.row(out) = (rays[r].origin + tf * rays[r].dir).transpose();
          sb.directions.row(out) = rays[r].dir.transpose();
          sb.delta(out) = sub;
        }
      }
    }
  }
  return result;
}

}  // namespace occlab::rendering
