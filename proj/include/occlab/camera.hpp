#pragma once

#include <Eigen/Dense>
#include <vector>

namespace occlab::rendering {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Aabb {
  Vec3 min{-1.0, -1.0, -1.0};
  Vec3 max{1.0, 1.0, 1.0};

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  // Slab intersection; returns false when the ray misses.
  bool clip(const Vec3& origin, const Vec3& dir, double& t0, double& t1) const;
};

// Pinhole camera. `rotation` maps camera coordinates to world coordinates;
// the camera looks along -z with x right and y up.
struct Camera {
  Mat3 rotation = Mat3::Identity();
  Vec3 origin = Vec3::Zero();
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Vec3 pixel_direction(double px, double py) const {
    Vec3 d((px - cx) / fx, -(py - cy) / fy, -1.0);
    return (rotation * d).normalized();
  }
};

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_deg,
                      int width, int height);

struct Ray {
  Vec3 origin;
  Vec3 dir;       // unit length
  double t_near = 0;
  double t_far = 0;  // t_near == t_far means the ray misses the scene bounds

  bool hits() const { return t_far > t_near; }
};

// One ray per pixel through the pixel center, clipped against `bounds`.
// Row-major pixel order. Throws std::invalid_argument for degenerate poses
// or intrinsics.
std::vector<Ray> generate_rays(const Camera& cam, const Aabb& bounds);

Ray make_ray(const Camera& cam, double px, double py, const Aabb& bounds);

}  // namespace occlab::rendering
