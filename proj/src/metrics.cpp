#include "occlab/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "occlab/util.hpp"

namespace occlab::evalkit {

double ConfusionCounts::accuracy() const {
  return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
}
double ConfusionCounts::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}
double ConfusionCounts::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}
double ConfusionCounts::f1() const {
  const double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}
double ConfusionCounts::occupancy_ratio() const {
  return total() == 0 ? 0.0 : static_cast<double>(tp + fp) / static_cast<double>(total());
}

ConfusionCounts occupancy_metrics(const std::vector<uint8_t>& predicted,
                                  const std::vector<uint8_t>& reference) {
  if (predicted.size() != reference.size())
    throw std::invalid_argument("occupancy_metrics: grid size mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0, r = reference[i] != 0;
    if (p && r)
      ++c.tp;
    else if (p && !r)
      ++c.fp;
    else if (!p && r)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

std::vector<uint8_t> network_to_grid(const fields::ParamStore& store,
                                     const fields::NetworkConfig& cfg, int resolution,
                                     const Aabb& bounds, int jitter_probes, uint64_t seed,
                                     int threads) {
  const long cells = static_cast<long>(resolution) * resolution * resolution;
  std::vector<uint8_t> grid(static_cast<size_t>(cells), 0);
  const Vec3 extent = bounds.max - bounds.min;
  const Vec3 cell_size = extent / resolution;

  util::parallel_for(cells, threads, [&](int64_t begin, int64_t end) {
    const long count = end - begin;
    const int probes = 1 + std::max(0, jitter_probes);
    Eigen::MatrixXd pts(count * probes, 3);
    for (int64_t c = begin; c < end; ++c) {
      const int iz = static_cast<int>(c % resolution);
      const int iy = static_cast<int>((c / resolution) % resolution);
      const int ix = static_cast<int>(c / (static_cast<long>(resolution) * resolution));
      const Vec3 center = bounds.min + Vec3((ix + 0.5) * cell_size.x(), (iy + 0.5) * cell_size.y(),
                                            (iz + 0.5) * cell_size.z());
      const int64_t base = (c - begin) * probes;
      pts.row(base) = center.transpose();
      util::Rng rng(util::derive_seed(seed, static_cast<uint64_t>(c)));
      for (int j = 1; j < probes; ++j)
        pts.row(base + j) =
            (center + Vec3((rng.next_double() - 0.5) * cell_size.x(),
                           (rng.next_double() - 0.5) * cell_size.y(),
                           (rng.next_double() - 0.5) * cell_size.z()))
                .transpose();
    }
    const auto occ = fields::predict_occupied(store, cfg, pts);
    for (int64_t c = begin; c < end; ++c) {
      uint8_t any = 0;
      for (int j = 0; j < probes; ++j) any |= occ[static_cast<size_t>((c - begin) * probes + j)];
      grid[static_cast<size_t>(c)] = any;
    }
  });
  return grid;
}

std::vector<uint8_t> depth_points_to_grid(const std::vector<Eigen::VectorXd>& depths,
                                          const std::vector<Eigen::VectorXd>& opacities,
                                          const std::vector<rendering::Camera>& cameras,
                                          int resolution, const Aabb& bounds,
                                          double min_opacity) {
  if (depths.size() != cameras.size() || opacities.size() != cameras.size())
    throw std::invalid_argument("depth_points_to_grid: count mismatch");
  const long cells = static_cast<long>(resolution) * resolution * resolution;
  std::vector<uint8_t> grid(static_cast<size_t>(cells), 0);
  const Vec3 extent = bounds.max - bounds.min;

  for (size_t img = 0; img < cameras.size(); ++img) {
    const auto& cam = cameras[img];
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const Eigen::Index p = static_cast<Eigen::Index>(y) * cam.width + x;
        if (opacities[img](p) < min_opacity) continue;
        const Vec3 point = cam.origin + depths[img](p) * cam.pixel_direction(x + 0.5, y + 0.5);
        if (!bounds.contains(point)) continue;
        const Vec3 rel = (point - bounds.min).cwiseQuotient(extent);
        long idx[3];
        for (int a = 0; a < 3; ++a)
          idx[a] = std::min<long>(std::max<long>(static_cast<long>(rel(a) * resolution), 0),
                                  resolution - 1);
        grid[static_cast<size_t>((idx[0] * resolution + idx[1]) * resolution + idx[2])] = 1;
      }
  }
  return grid;
}

double psnr(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("psnr: shape mismatch");
  const double mse = (a - b).squaredNorm() / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

std::string OccStats::csv_header() {
  return "step,fraction_scene,fraction_empty,mean_sigma_scene,mean_sigma_empty,"
         "mean_alpha_scene,mean_alpha_empty,sigma_ratio,alpha_ratio\n";
}

std::string OccStats::csv_row() const {
  auto opt = [](const std::optional<double>& v) {
    return v.has_value() ? util::format_double(*v) : std::string();
  };
  return util::csv_row({std::to_string(step), util::format_double(fraction_scene),
                        util::format_double(fraction_empty), util::format_double(mean_sigma_scene),
                        util::format_double(mean_sigma_empty),
                        util::format_double(mean_alpha_scene),
                        util::format_double(mean_alpha_empty), opt(sigma_ratio),
                        opt(alpha_ratio)});
}

OccStats collect_occ_stats(long step, const std::vector<int>& top1, int scene_subnets,
                           const Eigen::VectorXd& sigma, const Eigen::VectorXd& alpha) {
  if (static_cast<Eigen::Index>(top1.size()) != sigma.size() || sigma.size() != alpha.size())
    throw std::invalid_argument("collect_occ_stats: size mismatch");
  OccStats s;
  s.step = step;
  long n_scene = 0, n_empty = 0;
  double sig_s = 0, sig_e = 0, al_s = 0, al_e = 0;
  for (size_t i = 0; i < top1.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    if (top1[i] == scene_subnets) {
      ++n_empty;
      sig_e += sigma(idx);
      al_e += alpha(idx);
    } else {
      ++n_scene;
      sig_s += sigma(idx);
      al_s += alpha(idx);
    }
  }
  const double total = static_cast<double>(top1.size());
  s.fraction_scene = n_scene / total;
  s.fraction_empty = n_empty / total;
  if (n_scene > 0) {
    s.mean_sigma_scene = sig_s / n_scene;
    s.mean_alpha_scene = al_s / n_scene;
  }
  if (n_empty > 0) {
    s.mean_sigma_empty = sig_e / n_empty;
    s.mean_alpha_empty = al_e / n_empty;
  }
  if (n_scene > 0 && n_empty > 0 && s.mean_sigma_empty > 0)
    s.sigma_ratio = s.mean_sigma_scene / s.mean_sigma_empty;
  if (n_scene > 0 && n_empty > 0 && s.mean_alpha_empty > 0)
    s.alpha_ratio = s.mean_alpha_scene / s.mean_alpha_empty;
  return s;
}

void write_ply(const std::filesystem::path& path, const Eigen::MatrixXd& positions,
               const Eigen::MatrixXd& colors, const Eigen::VectorXd& alpha, PlyMode mode,
               const std::vector<std::string>& comments) {
  const Eigen::Index n = positions.rows();
  if (colors.rows() != n || (mode == PlyMode::kRgba && alpha.size() != n))
    throw std::invalid_argument("write_ply: size mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());

  out << "ply\nformat ascii 1.0\n";
  for (const auto& c : comments) out << "comment " << c << "\n";
  out << "element vertex " << n << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (mode == PlyMode::kRgba) out << "property float alpha\n";
  out << "end_header\n";

  auto channel = [](double v) {
    return static_cast<int>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    out << util::format_double(positions(i, 0)) << ' ' << util::format_double(positions(i, 1))
        << ' ' << util::format_double(positions(i, 2)) << ' ' << channel(colors(i, 0)) << ' '
        << channel(colors(i, 1)) << ' ' << channel(colors(i, 2));
    if (mode == PlyMode::kRgba) out << ' ' << util::format_double(alpha(i));
    out << '\n';
  }
}

}  // namespace occlab::evalkit
