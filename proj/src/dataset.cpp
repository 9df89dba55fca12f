#include "occlab/dataset.hpp"

#include <json.hpp>

#include <stdexcept>

#include "occlab/compositing.hpp"
#include "occlab/image_io.hpp"
#include "occlab/util.hpp"

namespace occlab::scene {

using nlohmann::json;

std::vector<int> Dataset::train_indices() const {
  std::vector<int> idx;
  for (size_t i = 0; i < views.size(); ++i)
    if (!views[i].validation) idx.push_back(static_cast<int>(i));
  return idx;
}

std::vector<int> Dataset::val_indices() const {
  std::vector<int> idx;
  for (size_t i = 0; i < views.size(); ++i)
    if (views[i].validation) idx.push_back(static_cast<int>(i));
  return idx;
}

namespace {

json camera_to_json(const rendering::Camera& cam) {
  json j;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["origin"] = {cam.origin.x(), cam.origin.y(), cam.origin.z()};
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(cam.rotation(r, c));
  j["rotation"] = rot;
  return j;
}

rendering::Camera camera_from_json(const json& j) {
  rendering::Camera cam;
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  const auto& o = j.at("origin");
  cam.origin = rendering::Vec3(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
  const auto& rot = j.at("rotation");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot.at(r * 3 + c).get<double>();
  return cam;
}

}  // namespace

Dataset make_dataset(const cli::ExperimentConfig& cfg, const std::filesystem::path& dir,
                     bool write_files) {
  if (cfg.dataset.quadrature_samples < 512)
    throw std::invalid_argument("make_dataset: ground-truth quadrature needs N >= 512");

  Dataset ds;
  ds.oracle = cfg.scene;
  ds.bounds = cfg.scene.bounds;
  ds.seed = cfg.seed;
  ds.gt_threshold = cfg.scene.gt_threshold;

  const int total = cfg.cameras.count + cfg.cameras.val_count;
  const auto cams = camera_ring(total, cfg.cameras.radius, cfg.cameras.fov_deg,
                                cfg.cameras.width, cfg.cameras.height, cfg.cameras.hemisphere);

  rendering::RenderOptions opts;
  opts.samples_per_ray = cfg.dataset.quadrature_samples;
  opts.seed = cfg.seed;
  opts.jitter = false;  // midpoint quadrature keeps ground truth deterministic
  opts.want_depth = true;
  opts.background = cfg.background;
  opts.threads = cfg.resolved_threads();

  const rendering::FieldFn field = ds.oracle.field_fn();
  ds.views.resize(cams.size());
  for (size_t i = 0; i < cams.size(); ++i) {
    rendering::Image img = rendering::render_image(cams[i], ds.bounds, field, opts);
    DatasetView& view = ds.views[i];
    view.camera = cams[i];
    view.rgb = std::move(img.rgb);
    view.depth = std::move(img.depth);
    view.opacity = std::move(img.opacity);
    view.validation = static_cast<int>(i) >= cfg.cameras.count;
  }

  if (write_files) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["seed"] = cfg.seed;
    manifest["gt_threshold"] = cfg.scene.gt_threshold;
    manifest["quadrature_samples"] = cfg.dataset.quadrature_samples;
    manifest["config"] = json::parse(cfg.to_json());
    json views = json::array();
    for (size_t i = 0; i < ds.views.size(); ++i) {
      const auto& view = ds.views[i];
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%03zu", view.validation ? "val" : "train", i);
      const std::string image_file = std::string(name) + ".png";
      const std::string depth_file = std::string(name) + ".depth";
      const std::string opacity_file = std::string(name) + ".opacity";
      evalkit::write_png(dir / image_file, view.rgb, view.camera.width, view.camera.height);
      evalkit::write_depth(dir / depth_file, view.depth, view.camera.width, view.camera.height);
      evalkit::write_depth(dir / opacity_file, view.opacity, view.camera.width,
                           view.camera.height);
      json jv = camera_to_json(view.camera);
      jv["image"] = image_file;
      jv["depth"] = depth_file;
      jv["opacity"] = opacity_file;
      jv["validation"] = view.validation;
      views.push_back(jv);
    }
    manifest["views"] = views;
    util::write_text_file(dir / "dataset.json", manifest.dump(2) + "\n");
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json manifest = json::parse(util::read_text_file(dir / "dataset.json"));
  Dataset ds;
  ds.seed = manifest.at("seed").get<uint64_t>();
  ds.gt_threshold = manifest.at("gt_threshold").get<double>();
  const auto cfg = cli::ExperimentConfig::from_json(manifest.at("config").dump());
  ds.oracle = cfg.scene;
  ds.bounds = cfg.scene.bounds;

  for (const auto& jv : manifest.at("views")) {
    DatasetView view;
    view.camera = camera_from_json(jv);
    view.validation = jv.at("validation").get<bool>();
    int w = 0, h = 0;
    view.rgb = evalkit::read_png(dir / jv.at("image").get<std::string>(), w, h);
    if (w != view.camera.width || h != view.camera.height)
      throw std::runtime_error("dataset image size mismatch");
    view.depth = evalkit::read_depth(dir / jv.at("depth").get<std::string>(), w, h);
    view.opacity = evalkit::read_depth(dir / jv.at("opacity").get<std::string>(), w, h);
    ds.views.push_back(std::move(view));
  }
  return ds;
}

}  // namespace occlab::scene
