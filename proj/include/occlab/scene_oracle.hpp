#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "occlab/camera.hpp"
#include "occlab/compositing.hpp"

namespace occlab::scene {

using rendering::Aabb;
using rendering::Vec3;

// Analytic density primitive with a smooth sigmoid falloff across its
// boundary: contribution = amplitude * sigmoid(-signed_distance / falloff).
struct Primitive {
  enum class Type { kSphere, kBox, kSlab };
  Type type = Type::kSphere;
  Vec3 center = Vec3::Zero();
  double radius = 0.5;            // sphere
  Vec3 half_extent = Vec3::Zero();  // box
  double slab_top = -0.8;         // slab occupies y <= slab_top
  double amplitude = 25.0;
  double falloff = 0.015;
  Vec3 albedo = Vec3::Ones();

  double signed_distance(const Vec3& p) const;
};

// Closed-form density/color field with exact occupancy ground truth.
struct SceneOracle {
  std::vector<Primitive> primitives;
  Aabb bounds;
  double sigma_cap = 1e4;
  double gt_threshold = 0.5;  // occupied(x) <=> density(x) > gt_threshold

  double density(const Vec3& p) const;
  void density_color(const Vec3& p, double& sigma, Vec3& color) const;
  bool occupied(const Vec3& p) const { return density(p) > gt_threshold; }

  // Dense occupancy at cell centers; index = (ix * R + iy) * R + iz.
  std::vector<uint8_t> occupancy_grid(int resolution, int threads = 1) const;
  double occupied_fraction(int resolution, int threads = 1) const;

  // Largest density slope implied by the falloff widths; used by the
  // continuity check.
  double lipschitz_bound() const;

  rendering::FieldFn field_fn() const;
};

// Default synthetic scene: four colored blobs in the unit cube, roughly a
// tenth of the volume occupied.
SceneOracle desk_scene();

// K cameras on a sphere of the given radius (fibonacci spiral), all looking
// at the scene centroid.
std::vector<rendering::Camera> camera_ring(int count, double radius, double fov_deg,
                                           int width, int height, bool hemisphere = false);

}  // namespace occlab::scene
