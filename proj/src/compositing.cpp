#include "occlab/compositing.hpp"

#include <cmath>
#include <stdexcept>

#include "occlab/util.hpp"

namespace occlab::rendering {

namespace {

void composite_forward(const Eigen::VectorXd& sigma, const Eigen::MatrixXd& color,
                       const SampleBatch& sb, const Eigen::Vector3d& background,
                       Eigen::MatrixXd& out, CompositeAux& aux) {
  const int rays = sb.num_rays();
  const int samples = sb.num_samples();
  out.resize(rays, 3);
  aux.alpha.resize(samples);
  aux.weight.resize(samples);
  aux.trans.resize(samples);
  aux.final_trans.resize(rays);
  aux.opacity.resize(rays);
  aux.depth.resize(rays);

  for (int r = 0; r < rays; ++r) {
    const int begin = sb.ray_begin(r), end = sb.ray_end(r);
    double trans = 1.0;
    Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
    double opacity = 0.0, depth = 0.0;
    for (int i = begin; i < end; ++i) {
      const double att = std::exp(-sigma(i) * sb.delta(i));
      const double alpha = 1.0 - att;
      const double w = trans * alpha;
      aux.alpha(i) = alpha;
      aux.trans(i) = trans;
      aux.weight(i) = w;
      acc += w * color.row(i);
      opacity += w;
      depth += w * sb.t(i);
      trans *= att;
    }
    out.row(r) = acc + trans * background.transpose();
    aux.final_trans(r) = trans;
    aux.opacity(r) = opacity;
    aux.depth(r) = depth;
  }
}

}  // namespace

CompositeResult composite(const diff::Value& sigma, const diff::Value& color,
                          const SampleBatch& sb, const Eigen::Vector3d& background) {
  if (sigma.rows() != sb.num_samples() || color.rows() != sb.num_samples())
    throw std::invalid_argument("composite: sample count mismatch");
  if (sigma.cols() != 1 || color.cols() != 3)
    throw std::invalid_argument("composite: sigma must be Sx1, color Sx3");

  CompositeResult result;
  Eigen::MatrixXd out;
  composite_forward(sigma.value().col(0), color.value(), sb, background, out, result.aux);

  // Captured state for backward: weights, per-sample transmittance past the
  // sample (T_{i+1} = T_i * exp(-sigma_i delta_i)) and geometry.
  const CompositeAux aux = result.aux;
  const SampleBatch geom = sb;  // offsets + delta (positions unused in backward)
  result.color = diff::make_op(
      std::move(out), {sigma, color}, [aux, geom, background](diff::Node& n) {
        diff::Node& sn = *n.parents[0];
        diff::Node& cn = *n.parents[1];
        const bool want_sigma = sn.requires_grad;
        const bool want_color = cn.requires_grad;
        if (want_sigma) sn.ensure_grad();
        if (want_color) cn.ensure_grad();
        for (int r = 0; r < geom.num_rays(); ++r) {
          const int begin = geom.ray_begin(r), end = geom.ray_end(r);
          if (begin == end) continue;
          const Eigen::RowVector3d g = n.grad.row(r);
          if (want_color)
            for (int i = begin; i < end; ++i)
              cn.grad.row(i) += aux.weight(i) * g;
          if (want_sigma) {
            // dC/dsigma_i = delta_i (T_{i+1} c_i - sum_{j>i} w_j c_j
            //               - T_final bg); the suffix accumulates everything
            // attenuated by sigma_i, seeded with the background term.
            double suffix = aux.final_trans(r) * g.dot(background);
            for (int i = end - 1; i >= begin; --i) {
              const double t_next = aux.trans(i) * (1.0 - aux.alpha(i));
              const double gc = g.dot(cn.value.row(i));
              sn.grad(i, 0) += geom.delta(i) * (t_next * gc - suffix);
              suffix += aux.weight(i) * gc;
            }
          }
        }
      });
  return result;
}

RawComposite composite_raw(const Eigen::VectorXd& sigma, const Eigen::MatrixXd& color,
                           const SampleBatch& sb, const Eigen::Vector3d& background) {
  RawComposite rc;
  composite_forward(sigma, color, sb, background, rc.color, rc.aux);
  return rc;
}

namespace {

Image render_common(const Camera& cam, const Aabb& bounds,
                    const std::function<SampleBatch(const std::vector<Ray>&, uint64_t)>& sampler,
                    const FieldFn& field, const RenderOptions& opts) {
  Image img;
  img.width = cam.width;
  img.height = cam.height;
  const int pixels = cam.width * cam.height;
  img.rgb.resize(pixels, 3);
  img.depth = Eigen::VectorXd::Zero(pixels);
  img.opacity = Eigen::VectorXd::Zero(pixels);

  const std::vector<Ray> rays = generate_rays(cam, bounds);

  // One sampler call per image row; row seeds derive from the global pixel
  // index, so output is identical for any thread count.
  util::parallel_for(cam.height, opts.threads, [&](int64_t y0, int64_t y1) {
    for (int64_t y = y0; y < y1; ++y) {
      const int begin_px = static_cast<int>(y) * cam.width;
      const int end_px = begin_px + cam.width;
      std::vector<Ray> row(rays.begin() + begin_px, rays.begin() + end_px);
      SampleBatch sb = sampler(row, util::derive_seed(opts.seed, static_cast<uint64_t>(y)));
      Eigen::VectorXd sigma;
      Eigen::MatrixXd color;
      if (sb.num_samples() > 0) {
        field(sb.positions, sb.directions, sigma, color);
      } else {
        sigma.resize(0);
        color.resize(0, 3);
      }
      RawComposite rc = composite_raw(sigma, color, sb, opts.background);
      for (int p = begin_px; p < end_px; ++p) {
        img.rgb.row(p) = rc.color.row(p - begin_px);
        img.opacity(p) = rc.aux.opacity(p - begin_px);
        if (opts.want_depth) img.depth(p) = rc.aux.depth(p - begin_px);
      }
    }
  });
  return img;
}

}  // namespace

Image render_image(const Camera& cam, const Aabb& bounds, const FieldFn& field,
                   const RenderOptions& opts) {
  return render_common(
      cam, bounds,
      [&](const std::vector<Ray>& block, uint64_t seed) {
        return stratified_sample(block, opts.samples_per_ray, seed, opts.jitter);
      },
      field, opts);
}

Image render_image_guided(const Camera& cam, const Aabb& bounds, const FieldFn& field,
                          const OccupancyPredicate& predicate, int coarse_samples,
                          int split_factor, const RenderOptions& opts) {
  return render_common(
      cam, bounds,
      [&](const std::vector<Ray>& block, uint64_t seed) {
        return guided_sample(block, predicate, coarse_samples, split_factor, seed, opts.jitter)
            .batch;
      },
      field, opts);
}

}  // namespace occlab::rendering
