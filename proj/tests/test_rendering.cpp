#include <doctest.h>

#include <cmath>

#include "occlab/compositing.hpp"
#include "occlab/scene_oracle.hpp"
#include "test_support.hpp"

using namespace occlab;
using diff::Mat;
using diff::Value;
using rendering::Aabb;
using rendering::Camera;
using rendering::Ray;
using rendering::SampleBatch;
using rendering::Vec3;

namespace {

// Piecewise-constant field along a ray: (t_end, sigma, color) segments.
struct Segment {
  double t_end;
  double sigma;
  Eigen::RowVector3d color;
};

void eval_segments(const std::vector<Segment>& segs, double t, double& sigma,
                   Eigen::RowVector3d& color) {
  for (const auto& s : segs)
    if (t < s.t_end) {
      sigma = s.sigma;
      color = s.color;
      return;
    }
  sigma = 0.0;
  color.setZero();
}

// Closed-form transmittance integral for a piecewise-constant field:
// exact per-segment composition of 1 - exp(-sigma * len).
Eigen::RowVector3d closed_form_color(const std::vector<Segment>& segs, double t0, double t1) {
  Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
  double trans = 1.0, t = t0;
  for (const auto& s : segs) {
    if (t >= t1) break;
    const double end = std::min(s.t_end, t1);
    if (end > t) {
      const double a = 1.0 - std::exp(-s.sigma * (end - t));
      acc += trans * a * s.color;
      trans *= 1.0 - a;
      t = end;
    }
  }
  return acc;
}

SampleBatch single_ray_batch(const Ray& ray, int n, bool jitter, uint64_t seed = 1) {
  return rendering::stratified_sample({ray}, n, seed, jitter);
}

}  // namespace

TEST_CASE("generate_rays: axis-aligned camera, unit norms, one ray per pixel") {
  // Odd image size puts one pixel exactly on the optical axis.
  Camera cam = rendering::look_at_camera({0, 0, 2.5}, {0, 0, 0}, {0, 1, 0}, 50.0, 65, 65);
  Aabb bounds;
  const auto rays = rendering::generate_rays(cam, bounds);
  CHECK(rays.size() == 65 * 65);
  const Ray center = rays[32 * 65 + 32];
  CHECK(center.dir.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(center.dir.y() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(center.dir.z() == doctest::Approx(-1.0).epsilon(1e-12));
  for (const auto& r : rays) CHECK(std::abs(r.dir.norm() - 1.0) < 1e-12);

  Camera square = rendering::look_at_camera({2, 1, 2}, {0, 0, 0}, {0, 1, 0}, 50.0, 64, 64);
  CHECK(rendering::generate_rays(square, bounds).size() == 4096);
}

TEST_CASE("generate_rays rejects degenerate poses") {
  Camera cam = rendering::look_at_camera({0, 0, 2.5}, {0, 0, 0}, {0, 1, 0}, 50.0, 8, 8);
  cam.rotation.col(0) *= 3.0;  // break orthonormality
  CHECK_THROWS_AS(rendering::generate_rays(cam, Aabb{}), std::invalid_argument);
  CHECK_THROWS_AS(rendering::look_at_camera({0, 0, 1}, {0, 0, 0}, {0, 0, 1}, 50.0, 8, 8),
                  std::invalid_argument);
}

TEST_CASE("stratified sampling: midpoints without jitter, monotone depths, deltas") {
  Ray ray;
  ray.origin = {0, 0, 2};
  ray.dir = {0, 0, -1};
  ray.t_near = 1.0;
  ray.t_far = 3.0;
  const SampleBatch sb = single_ray_batch(ray, 8, false);
  REQUIRE(sb.num_samples() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(sb.t(i) == doctest::Approx(1.0 + (i + 0.5) * 0.25).epsilon(1e-12));
    // delta_i = t_{i+1} - t_i; the last one runs to t_far (half a bin here).
    CHECK(sb.delta(i) == doctest::Approx(i + 1 < 8 ? 0.25 : 0.125).epsilon(1e-12));
  }

  const SampleBatch jittered = single_ray_batch(ray, 64, true, 7);
  double sum_delta = 0.0;
  for (int i = 0; i < 64; ++i) {
    if (i > 0) CHECK(jittered.t(i) > jittered.t(i - 1));
    CHECK(jittered.delta(i) > 0.0);
    sum_delta += jittered.delta(i);
  }
  CHECK(sum_delta <= ray.t_far - ray.t_near + 1e-12);
  CHECK_THROWS_AS(single_ray_batch(ray, 1, false), std::invalid_argument);
}

TEST_CASE("composite: zero density gives zero color and unit transmittance") {
  Ray ray;
  ray.origin = {0, 0, 0};
  ray.dir = {0, 0, -1};
  ray.t_near = 0.0;
  ray.t_far = 1.0;
  const SampleBatch sb = single_ray_batch(ray, 4, false);
  Value sigma = Value::constant(Mat::Zero(4, 1));
  Value color = Value::constant(Mat::Ones(4, 3));
  auto result = rendering::composite(sigma, color, sb, Vec3::Zero());
  CHECK(result.color.value().cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 4; ++i) CHECK(result.aux.trans(i) == 1.0);
  CHECK(result.aux.opacity(0) == 0.0);
}

TEST_CASE("composite: two samples with sigma*delta = ln 2 give weights 1/2 and 1/4") {
  SampleBatch sb;
  sb.ray_offsets = {0, 2};
  sb.positions = Mat::Zero(2, 3);
  sb.directions = Mat::Zero(2, 3);
  sb.t = Eigen::Vector2d(0.5, 1.5);
  sb.delta = Eigen::Vector2d(1.0, 1.0);
  const double ln2 = std::log(2.0);
  Value sigma = Value::constant((Mat(2, 1) << ln2, ln2).finished());
  Mat c(2, 3);
  c << 1, 0, 0, 0, 1, 0;
  auto result = rendering::composite(sigma, Value::constant(c), sb, Vec3::Zero());
  CHECK(result.aux.weight(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(result.aux.weight(1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(result.color.value()(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(result.color.value()(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("composite: weight bounds and non-increasing transmittance") {
  util::Rng rng(23);
  Ray ray;
  ray.origin = {0, 0, 0};
  ray.dir = {1, 0, 0};
  ray.t_near = 0.1;
  ray.t_far = 2.9;
  const SampleBatch sb = single_ray_batch(ray, 48, true, 3);
  Mat sigma = testing::random_matrix(48, 1, rng, 0.0, 8.0);
  Mat color = testing::random_matrix(48, 3, rng, 0.0, 1.0);
  auto result = rendering::composite(Value::constant(sigma), Value::constant(color), sb,
                                     Vec3::Zero());
  double sum = 0.0;
  for (int i = 0; i < 48; ++i) {
    CHECK(result.aux.weight(i) >= 0.0);
    CHECK(result.aux.weight(i) <= 1.0);
    if (i > 0) CHECK(result.aux.trans(i) <= result.aux.trans(i - 1) + 1e-15);
    sum += result.aux.weight(i);
  }
  CHECK(sum <= 1.0 + 1e-12);
}

TEST_CASE("composite matches the closed-form integral on piecewise-constant fields") {
  // Gentle jumps keep the midpoint-rule boundary error well under the bound.
  const std::vector<Segment> segs = {{1.2, 0.5, {0.8, 0.2, 0.1}},
                                     {2.1, 0.7, {0.6, 0.4, 0.2}},
                                     {3.0, 0.55, {0.7, 0.3, 0.4}}};
  Ray ray;
  ray.origin = {0, 0, 0};
  ray.dir = {0, 1, 0};
  ray.t_near = 0.0;
  ray.t_far = 3.0;
  const SampleBatch sb = single_ray_batch(ray, 1024, false);
  Mat sigma(1024, 1), color(1024, 3);
  for (int i = 0; i < 1024; ++i) {
    double s;
    Eigen::RowVector3d c;
    eval_segments(segs, sb.t(i), s, c);
    sigma(i, 0) = s;
    color.row(i) = c;
  }
  auto result =
      rendering::composite(Value::constant(sigma), Value::constant(color), sb, Vec3::Zero());
  const Eigen::RowVector3d exact = closed_form_color(segs, 0.0, 3.0);
  CHECK((result.color.value().row(0) - exact).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("compositing is invariant to splitting a constant segment") {
  const double sigma_v = 1.7;
  const Eigen::RowVector3d c(0.3, 0.6, 0.9);
  auto run = [&](int pieces) {
    SampleBatch sb;
    sb.ray_offsets = {0, pieces};
    sb.positions = Mat::Zero(pieces, 3);
    sb.directions = Mat::Zero(pieces, 3);
    sb.t.resize(pieces);
    sb.delta.resize(pieces);
    const double len = 2.0 / pieces;
    for (int i = 0; i < pieces; ++i) {
      sb.t(i) = i * len;
      sb.delta(i) = len;
    }
    Mat color(pieces, 3);
    color.rowwise() = c;
    auto result = rendering::composite(Value::constant(Mat::Constant(pieces, 1, sigma_v)),
                                       Value::constant(color), sb, Vec3::Zero());
    return std::make_pair(Eigen::RowVector3d(result.color.value().row(0)),
                          result.aux.opacity(0));
  };
  const auto [c1, o1] = run(1);
  for (int pieces : {2, 5, 16, 64}) {
    const auto [ck, ok] = run(pieces);
    CHECK((ck - c1).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(ok - o1) < 1e-12);
  }
}

TEST_CASE("composite gradients match finite differences") {
  util::Rng rng(31);
  for (int instance = 0; instance < 4; ++instance) {
    SampleBatch sb;
    const int n = 6;
    sb.ray_offsets = {0, 4, 6};  // two rays with different sample counts
    sb.positions = Mat::Zero(n, 3);
    sb.directions = Mat::Zero(n, 3);
    sb.t.resize(n);
    sb.delta.resize(n);
    for (int i = 0; i < n; ++i) {
      sb.t(i) = 0.2 * i;
      sb.delta(i) = rng.uniform(0.05, 0.3);
    }
    Value sigma = Value::param(testing::random_matrix(n, 1, rng, 0.0, 3.0));
    Value color = Value::param(testing::random_matrix(n, 3, rng, 0.0, 1.0));
    const Mat target = testing::random_matrix(2, 3, rng, 0.0, 1.0);
    const Vec3 bg(0.15, 0.25, 0.35);  // nonzero so the residual term is covered
    auto loss = [&]() {
      auto result = rendering::composite(sigma, color, sb, bg);
      Value err = diff::sub(result.color, Value::constant(target));
      return diff::sum(diff::mul(err, err));
    };
    CHECK(testing::check_gradients({sigma, color}, loss) < 1e-5);
  }
}

TEST_CASE("guided sampling: split accounting and bin containment") {
  Ray ray;
  ray.origin = {0, 0, 0};
  ray.dir = {0, 0, 1};
  ray.t_near = 0.0;
  ray.t_far = 12.8;
  // Occupy exactly 16 of the 128 coarse bins (those with t in [0, 1.6)).
  long predicate_calls = 0;
  const rendering::OccupancyPredicate pred = [&](const Eigen::MatrixXd& pts,
                                                 std::vector<uint8_t>& occ) {
    predicate_calls += pts.rows();
    occ.resize(static_cast<size_t>(pts.rows()));
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      occ[static_cast<size_t>(i)] = pts(i, 2) < 1.6 ? 1 : 0;
  };
  const auto result = rendering::guided_sample({ray}, pred, 128, 8, 5, false);
  CHECK(result.coarse_points == 128);
  CHECK(predicate_calls == 128);  // the occupancy test sees only coarse points
  CHECK(result.occupied_coarse == 16);
  CHECK(result.batch.num_samples() == 128);  // 16 occupied bins * split 8
  // Every fine sample lies inside an occupied bin; none in rejected space.
  for (int i = 0; i < result.batch.num_samples(); ++i) {
    CHECK(result.batch.t(i) < 1.6);
    CHECK(result.batch.delta(i) == doctest::Approx(0.1 / 8.0).epsilon(1e-12));
  }
  CHECK(result.batch.num_samples() <= result.occupied_coarse * 8);
}

TEST_CASE("guided sampling: all-unoccupied rays keep no samples and render background") {
  Ray ray;
  ray.origin = {0, 0, 2.5};
  ray.dir = {0, 0, -1};
  ray.t_near = 1.5;
  ray.t_far = 3.5;
  const rendering::OccupancyPredicate never = [](const Eigen::MatrixXd& pts,
                                                 std::vector<uint8_t>& occ) {
    occ.assign(static_cast<size_t>(pts.rows()), 0);
  };
  const auto result = rendering::guided_sample({ray}, never, 32, 8, 1, false);
  CHECK(result.batch.num_samples() == 0);
  const Vec3 bg(0.2, 0.4, 0.6);
  auto comp = rendering::composite_raw(Eigen::VectorXd(), Mat(0, 3), result.batch, bg);
  CHECK(comp.color(0, 0) == doctest::Approx(0.2));
  CHECK(comp.color(0, 1) == doctest::Approx(0.4));
  CHECK(comp.color(0, 2) == doctest::Approx(0.6));
}

TEST_CASE("guided sampling with an always-true predicate equals ungated split sampling") {
  Ray ray;
  ray.origin = {0, 0, 2.0};
  ray.dir = {0, 0, -1};
  ray.t_near = 1.0;
  ray.t_far = 3.0;
  const auto gated =
      rendering::guided_sample({ray}, rendering::always_occupied_predicate(), 16, 4, 9, false);
  CHECK(gated.batch.num_samples() == 64);
  // Deterministic subdivision: fine midpoints of 64 equal sub-bins.
  for (int i = 0; i < 64; ++i)
    CHECK(gated.batch.t(i) == doctest::Approx(1.0 + (i + 0.5) * (2.0 / 64.0)).epsilon(1e-12));
}

TEST_CASE("render_image: zero field renders the background everywhere") {
  Camera cam = rendering::look_at_camera({0, 0, 2.5}, {0, 0, 0}, {0, 1, 0}, 45.0, 16, 16);
  const rendering::FieldFn zero_field = [](const Eigen::MatrixXd& p, const Eigen::MatrixXd&,
                                           Eigen::VectorXd& sigma, Eigen::MatrixXd& color) {
    sigma = Eigen::VectorXd::Zero(p.rows());
    color = Mat::Zero(p.rows(), 3);
  };
  rendering::RenderOptions opts;
  opts.samples_per_ray = 16;
  opts.background = Vec3(0.1, 0.2, 0.3);
  const auto img = rendering::render_image(cam, Aabb{}, zero_field, opts);
  for (int p = 0; p < img.rgb.rows(); ++p) {
    CHECK(img.rgb(p, 0) == doctest::Approx(0.1));
    CHECK(img.rgb(p, 2) == doctest::Approx(0.3));
  }
}

TEST_CASE("render_image: opaque sphere shows a disk with correct center depth") {
  scene::SceneOracle oracle;
  scene::Primitive s;
  s.type = scene::Primitive::Type::kSphere;
  s.center = Vec3::Zero();
  s.radius = 0.5;
  s.amplitude = 500.0;
  s.falloff = 0.002;
  s.albedo = Vec3(1.0, 0.5, 0.2);
  oracle.primitives.push_back(s);

  Camera cam = rendering::look_at_camera({0, 0, 2.5}, {0, 0, 0}, {0, 1, 0}, 45.0, 33, 33);
  rendering::RenderOptions opts;
  opts.samples_per_ray = 1024;
  opts.want_depth = true;
  const auto img = rendering::render_image(cam, Aabb{}, oracle.field_fn(), opts);

  const int center = 16 * 33 + 16;
  const double delta = 2.0 / 1024.0;  // AABB chord is 2 units long on axis
  CHECK(img.opacity(center) > 0.99);
  CHECK(std::abs(img.depth(center) - 2.0) <= 2.0 * delta);
  CHECK(img.opacity(0) < 0.01);  // image corner misses the sphere
  CHECK(img.rgb.row(center)(0) == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("render_image is deterministic across reruns and thread counts") {
  scene::SceneOracle oracle = scene::desk_scene();
  Camera cam = rendering::look_at_camera({1.5, 1.2, 1.8}, {0, 0, 0}, {0, 1, 0}, 50.0, 12, 12);
  rendering::RenderOptions opts;
  opts.samples_per_ray = 32;
  opts.jitter = true;
  opts.seed = 77;
  opts.threads = 1;
  const auto a = rendering::render_image(cam, Aabb{}, oracle.field_fn(), opts);
  const auto b = rendering::render_image(cam, Aabb{}, oracle.field_fn(), opts);
  opts.threads = 2;
  const auto c = rendering::render_image(cam, Aabb{}, oracle.field_fn(), opts);
  CHECK((a.rgb - b.rgb).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.rgb - c.rgb).cwiseAbs().maxCoeff() == 0.0);
}
