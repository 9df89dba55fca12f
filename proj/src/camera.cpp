#include "occlab/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace occlab::rendering {

bool Aabb::clip(const Vec3& origin, const Vec3& dir, double& t0, double& t1) const {
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir(a)) < 1e-15) {
      if (origin(a) < min(a) || origin(a) > max(a)) return false;
      continue;
    }
    double ta = (min(a) - origin(a)) / dir(a);
    double tb = (max(a) - origin(a)) / dir(a);
    if (ta > tb) std::swap(ta, tb);
    lo = std::max(lo, ta);
    hi = std::min(hi, tb);
    if (lo >= hi) return false;
  }
  t0 = lo;
  t1 = hi;
  return true;
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_deg,
                      int width, int height) {
  Camera cam;
  cam.origin = eye;
  cam.width = width;
  cam.height = height;
  Vec3 forward = (target - eye);
  if (forward.norm() < 1e-12) throw std::invalid_argument("look_at_camera: eye == target");
  forward.normalize();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9)
    throw std::invalid_argument("look_at_camera: up parallel to view direction");
  right.normalize();
  Vec3 cam_up = right.cross(forward);
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = cam_up;
  cam.rotation.col(2) = -forward;  // camera looks along -z
  const double f = (width / 2.0) / std::tan(fov_deg * M_PI / 360.0);
  cam.fx = cam.fy = f;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  return cam;
}

Ray make_ray(const Camera& cam, double px, double py, const Aabb& bounds) {
  Ray ray;
  ray.origin = cam.origin;
  ray.dir = cam.pixel_direction(px, py);
  double t0 = 0, t1 = 0;
  if (bounds.clip(ray.origin, ray.dir, t0, t1)) {
    ray.t_near = t0;
    ray.t_far = t1;
  }
  return ray;
}

std::vector<Ray> generate_rays(const Camera& cam, const Aabb& bounds) {
  if (cam.width <= 0 || cam.height <= 0 || cam.fx <= 0 || cam.fy <= 0)
    throw std::invalid_argument("generate_rays: invalid intrinsics");
  const Mat3 rtr = cam.rotation.transpose() * cam.rotation;
  if ((rtr - Mat3::Identity()).norm() > 1e-6)
    throw std::invalid_argument("generate_rays: rotation is not orthonormal");

  std::vector<Ray> rays;
  rays.reserve(static_cast<size_t>(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      rays.push_back(make_ray(cam, x + 0.5, y + 0.5, bounds));
  return rays;
}

}  // namespace occlab::rendering
