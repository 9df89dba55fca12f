#include "occlab/scene_oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "occlab/util.hpp"

namespace occlab::scene {

namespace {

double stable_sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

double Primitive::signed_distance(const Vec3& p) const {
  switch (type) {
    case Type::kSphere:
      return (p - center).norm() - radius;
    case Type::kBox: {
      const Vec3 q = (p - center).cwiseAbs() - half_extent;
      const Vec3 outside = q.cwiseMax(0.0);
      const double inside = std::min(q.maxCoeff(), 0.0);
      return outside.norm() + inside;
    }
    case Type::kSlab:
      return p.y() - slab_top;
  }
  return 0.0;
}

double SceneOracle::density(const Vec3& p) const {
  double sigma = 0.0;
  for (const auto& prim : primitives)
    sigma += prim.amplitude * stable_sigmoid(-prim.signed_distance(p) / prim.falloff);
  return std::min(sigma, sigma_cap);
}

void SceneOracle::density_color(const Vec3& p, double& sigma, Vec3& color) const {
  sigma = 0.0;
  color = Vec3::Zero();
  double best = -1.0;
  for (const auto& prim : primitives) {
    const double ind = stable_sigmoid(-prim.signed_distance(p) / prim.falloff);
    sigma += prim.amplitude * ind;
    if (ind > best) {
      best = ind;
      color = prim.albedo;
    }
  }
  sigma = std::min(sigma, sigma_cap);
  if (best < 1e-12) color.setZero();  // background
}

std::vector<uint8_t> SceneOracle::occupancy_grid(int resolution, int threads) const {
  if (resolution < 1) throw std::invalid_argument("occupancy_grid: resolution >= 1");
  const long cells = static_cast<long>(resolution) * resolution * resolution;
  std::vector<uint8_t> grid(static_cast<size_t>(cells), 0);
  const Vec3 extent = bounds.max - bounds.min;
  util::parallel_for(cells, threads, [&](int64_t begin, int64_t end) {
    for (int64_t c = begin; c < end; ++c) {
      const int iz = static_cast<int>(c % resolution);
      const int iy = static_cast<int>((c / resolution) % resolution);
      const int ix = static_cast<int>(c / (static_cast<long>(resolution) * resolution));
      Vec3 p = bounds.min + Vec3((ix + 0.5) / resolution * extent.x(),
                                 (iy + 0.5) / resolution * extent.y(),
                                 (iz + 0.5) / resolution * extent.z());
      grid[static_cast<size_t>(c)] = occupied(p) ? 1 : 0;
    }
  });
  return grid;
}

double SceneOracle::occupied_fraction(int resolution, int threads) const {
  const auto grid = occupancy_grid(resolution, threads);
  long count = 0;
  for (uint8_t v : grid) count += v;
  return static_cast<double>(count) / static_cast<double>(grid.size());
}

double SceneOracle::lipschitz_bound() const {
  // d/dx sigmoid(-d/w) peaks at 1/(4w); the SDF itself is 1-Lipschitz.
  double total = 0.0;
  for (const auto& prim : primitives) total += prim.amplitude / (4.0 * prim.falloff);
  return total;
}

rendering::FieldFn SceneOracle::field_fn() const {
  return [this](const Eigen::MatrixXd& positions, const Eigen::MatrixXd& directions,
                Eigen::VectorXd& sigma, Eigen::MatrixXd& color) {
    (void)directions;
    sigma.resize(positions.rows());
    color.resize(positions.rows(), 3);
    for (Eigen::Index i = 0; i < positions.rows(); ++i) {
      double s;
      Vec3 c;
      density_color(positions.row(i).transpose(), s, c);
      sigma(i) = s;
      color.row(i) = c.transpose();
    }
  };
}

SceneOracle desk_scene() {
  SceneOracle oracle;
  Primitive a;
  a.type = Primitive::Type::kSphere;
  a.center = Vec3(0.40, 0.02, 0.05);
  a.radius = 0.40;
  a.albedo = Vec3(0.85, 0.30, 0.25);
  oracle.primitives.push_back(a);

  Primitive b;
  b.type = Primitive::Type::kBox;
  b.center = Vec3(-0.42, -0.18, 0.22);
  b.half_extent = Vec3(0.28, 0.24, 0.20);
  b.albedo = Vec3(0.25, 0.50, 0.85);
  oracle.primitives.push_back(b);

  Primitive c;
  c.type = Primitive::Type::kSphere;
  c.center = Vec3(-0.12, 0.40, -0.38);
  c.radius = 0.26;
  c.albedo = Vec3(0.30, 0.80, 0.35);
  oracle.primitives.push_back(c);

  Primitive d;
  d.type = Primitive::Type::kSphere;
  d.center = Vec3(0.02, -0.46, -0.32);
  d.radius = 0.22;
  d.albedo = Vec3(0.85, 0.75, 0.30);
  oracle.primitives.push_back(d);
  return oracle;
}

std::vector<rendering::Camera> camera_ring(int count, double radius, double fov_deg,
                                           int width, int height, bool hemisphere) {
  std::vector<rendering::Camera> cams;
  cams.reserve(static_cast<size_t>(count));
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    // Fibonacci spiral over z in (-1, 1) (or (0, 1) for a hemisphere).
    const double span = hemisphere ? 1.0 : 2.0;
    const double lo = hemisphere ? 0.05 : -1.0 + 1.0 / count;
    const double z = lo + span * (i + 0.5) / count * (hemisphere ? 0.9 : (1.0 - 1.0 / count));
    const double zc = std::clamp(z, -0.95, 0.95);
    const double rxy = std::sqrt(std::max(0.0, 1.0 - zc * zc));
    const double phi = golden * i;
    Vec3 eye(radius * rxy * std::cos(phi), radius * zc, radius * rxy * std::sin(phi));
    Vec3 up = Vec3::UnitY();
    cams.push_back(rendering::look_at_camera(eye, Vec3::Zero(), up, fov_deg, width, height));
  }
  return cams;
}

}  // namespace occlab::scene
