#include "occlab/config.hpp"

#include <json.hpp>

#include "occlab/util.hpp"

namespace occlab::cli {

using nlohmann::json;

namespace {

json vec3_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from_json(const json& j) {
  return Eigen::Vector3d(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

json primitive_to_json(const scene::Primitive& p) {
  json j;
  switch (p.type) {
    case scene::Primitive::Type::kSphere:
      j["type"] = "sphere";
      j["center"] = vec3_to_json(p.center);
      j["radius"] = p.radius;
      break;
    case scene::Primitive::Type::kBox:
      j["type"] = "box";
      j["center"] = vec3_to_json(p.center);
      j["half_extent"] = vec3_to_json(p.half_extent);
      break;
    case scene::Primitive::Type::kSlab:
      j["type"] = "slab";
      j["slab_top"] = p.slab_top;
      break;
  }
  j["amplitude"] = p.amplitude;
  j["falloff"] = p.falloff;
  j["albedo"] = vec3_to_json(p.albedo);
  return j;
}

scene::Primitive primitive_from_json(const json& j) {
  scene::Primitive p;
  const std::string type = j.at("type").get<std::string>();
  if (type == "sphere") {
    p.type = scene::Primitive::Type::kSphere;
    p.center = vec3_from_json(j.at("center"));
    p.radius = j.at("radius").get<double>();
  } else if (type == "box") {
    p.type = scene::Primitive::Type::kBox;
    p.center = vec3_from_json(j.at("center"));
    p.half_extent = vec3_from_json(j.at("half_extent"));
  } else if (type == "slab") {
    p.type = scene::Primitive::Type::kSlab;
    p.slab_top = j.at("slab_top").get<double>();
  } else {
    throw std::invalid_argument("unknown primitive type: " + type);
  }
  if (j.contains("amplitude")) p.amplitude = j["amplitude"].get<double>();
  if (j.contains("falloff")) p.falloff = j["falloff"].get<double>();
  if (j.contains("albedo")) p.albedo = vec3_from_json(j["albedo"]);
  return p;
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

int ExperimentConfig::resolved_threads() const {
  return threads > 0 ? threads : util::default_threads();
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["output_dir"] = output_dir;

  json js;
  js["primitives"] = json::array();
  for (const auto& p : scene.primitives) js["primitives"].push_back(primitive_to_json(p));
  js["sigma_cap"] = scene.sigma_cap;
  js["gt_threshold"] = scene.gt_threshold;
  js["bounds_min"] = vec3_to_json(scene.bounds.min);
  js["bounds_max"] = vec3_to_json(scene.bounds.max);
  j["scene"] = js;

  j["cameras"] = {{"count", cameras.count},       {"val_count", cameras.val_count},
                  {"radius", cameras.radius},     {"fov_deg", cameras.fov_deg},
                  {"width", cameras.width},       {"height", cameras.height},
                  {"hemisphere", cameras.hemisphere}};
  j["dataset"] = {{"quadrature_samples", dataset.quadrature_samples}};
  j["network"] = {{"scene_subnets", network.scene_subnets},
                  {"width", network.width},
                  {"freq_bands", network.freq_bands},
                  {"dir_freq_bands", network.dir_freq_bands},
                  {"head_width", network.head_width},
                  {"empty_head_width", network.empty_head_width}};
  j["radiance"] = {{"width", radiance.width},
                   {"depth", radiance.depth},
                   {"freq_bands", radiance.freq_bands},
                   {"dir_freq_bands", radiance.dir_freq_bands},
                   {"head_width", radiance.head_width}};
  j["loss"] = {{"w_r", loss_weights.w_r},
               {"w_o", loss_weights.w_o},
               {"w_d", loss_weights.w_d},
               {"v", virtual_subnets}};
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps}};
  j["train"] = {{"steps", train.steps},
                {"rays_per_batch", train.rays_per_batch},
                {"samples_per_ray", train.samples_per_ray},
                {"log_every", train.log_every},
                {"checkpoint_every", train.checkpoint_every},
                {"eval_every", train.eval_every},
                {"eval_rays", train.eval_rays}};
  j["guided"] = {{"steps", guided.steps},
                 {"rays_per_batch", guided.rays_per_batch},
                 {"coarse_samples", guided.coarse_samples},
                 {"split_factor", guided.split_factor},
                 {"dense_samples", guided.dense_samples},
                 {"log_every", guided.log_every},
                 {"eval_every", guided.eval_every}};
  j["grid"] = {{"enabled", grid.enabled},
               {"resolution", grid.resolution},
               {"decay", grid.decay},
               {"threshold", grid.threshold},
               {"update_every", grid.update_every},
               {"steps", grid.steps},
               {"warmup_steps", grid.warmup_steps},
               {"warmup_samples", grid.warmup_samples}};
  j["eval"] = {{"grid_resolution", eval.grid_resolution},
               {"jitter_probes", eval.jitter_probes},
               {"render_samples", eval.render_samples}};
  j["background"] = vec3_to_json(background);
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  ExperimentConfig cfg;
  get_if(j, "seed", cfg.seed);
  get_if(j, "threads", cfg.threads);
  get_if(j, "output_dir", cfg.output_dir);

  if (j.contains("scene")) {
    const json& js = j["scene"];
    if (js.contains("primitives")) {
      cfg.scene.primitives.clear();
      for (const auto& pj : js["primitives"]) cfg.scene.primitives.push_back(primitive_from_json(pj));
    }
    get_if(js, "sigma_cap", cfg.scene.sigma_cap);
    get_if(js, "gt_threshold", cfg.scene.gt_threshold);
    if (js.contains("bounds_min")) cfg.scene.bounds.min = vec3_from_json(js["bounds_min"]);
    if (js.contains("bounds_max")) cfg.scene.bounds.max = vec3_from_json(js["bounds_max"]);
  }
  if (j.contains("cameras")) {
    const json& jc = j["cameras"];
    get_if(jc, "count", cfg.cameras.count);
    get_if(jc, "val_count", cfg.cameras.val_count);
    get_if(jc, "radius", cfg.cameras.radius);
    get_if(jc, "fov_deg", cfg.cameras.fov_deg);
    get_if(jc, "width", cfg.cameras.width);
    get_if(jc, "height", cfg.cameras.height);
    get_if(jc, "hemisphere", cfg.cameras.hemisphere);
  }
  if (j.contains("dataset"))
    get_if(j["dataset"], "quadrature_samples", cfg.dataset.quadrature_samples);
  if (j.contains("network")) {
    const json& jn = j["network"];
    get_if(jn, "scene_subnets", cfg.network.scene_subnets);
    get_if(jn, "width", cfg.network.width);
    get_if(jn, "freq_bands", cfg.network.freq_bands);
    get_if(jn, "dir_freq_bands", cfg.network.dir_freq_bands);
    get_if(jn, "head_width", cfg.network.head_width);
    get_if(jn, "empty_head_width", cfg.network.empty_head_width);
  }
  if (j.contains("radiance")) {
    const json& jr = j["radiance"];
    get_if(jr, "width", cfg.radiance.width);
    get_if(jr, "depth", cfg.radiance.depth);
    get_if(jr, "freq_bands", cfg.radiance.freq_bands);
    get_if(jr, "dir_freq_bands", cfg.radiance.dir_freq_bands);
    get_if(jr, "head_width", cfg.radiance.head_width);
  }
  if (j.contains("loss")) {
    const json& jl = j["loss"];
    get_if(jl, "w_r", cfg.loss_weights.w_r);
    get_if(jl, "w_o", cfg.loss_weights.w_o);
    get_if(jl, "w_d", cfg.loss_weights.w_d);
    get_if(jl, "v", cfg.virtual_subnets);
  }
  if (j.contains("optimizer")) {
    const json& jo = j["optimizer"];
    get_if(jo, "lr", cfg.optimizer.lr);
    get_if(jo, "beta1", cfg.optimizer.beta1);
    get_if(jo, "beta2", cfg.optimizer.beta2);
    get_if(jo, "eps", cfg.optimizer.eps);
  }
  if (j.contains("train")) {
    const json& jt = j["train"];
    get_if(jt, "steps", cfg.train.steps);
    get_if(jt, "rays_per_batch", cfg.train.rays_per_batch);
    get_if(jt, "samples_per_ray", cfg.train.samples_per_ray);
    get_if(jt, "log_every", cfg.train.log_every);
    get_if(jt, "checkpoint_every", cfg.train.checkpoint_every);
    get_if(jt, "eval_every", cfg.train.eval_every);
    get_if(jt, "eval_rays", cfg.train.eval_rays);
  }
  if (j.contains("guided")) {
    const json& jg = j["guided"];
    get_if(jg, "steps", cfg.guided.steps);
    get_if(jg, "rays_per_batch", cfg.guided.rays_per_batch);
    get_if(jg, "coarse_samples", cfg.guided.coarse_samples);
    get_if(jg, "split_factor", cfg.guided.split_factor);
    get_if(jg, "dense_samples", cfg.guided.dense_samples);
    get_if(jg, "log_every", cfg.guided.log_every);
    get_if(jg, "eval_every", cfg.guided.eval_every);
  }
  if (j.contains("grid")) {
    const json& jg = j["grid"];
    get_if(jg, "enabled", cfg.grid.enabled);
    get_if(jg, "resolution", cfg.grid.resolution);
    get_if(jg, "decay", cfg.grid.decay);
    get_if(jg, "threshold", cfg.grid.threshold);
    get_if(jg, "update_every", cfg.grid.update_every);
    get_if(jg, "steps", cfg.grid.steps);
    get_if(jg, "warmup_steps", cfg.grid.warmup_steps);
    get_if(jg, "warmup_samples", cfg.grid.warmup_samples);
  }
  if (j.contains("eval")) {
    const json& je = j["eval"];
    get_if(je, "grid_resolution", cfg.eval.grid_resolution);
    get_if(je, "jitter_probes", cfg.eval.jitter_probes);
    get_if(je, "render_samples", cfg.eval.render_samples);
  }
  if (j.contains("background")) cfg.background = vec3_from_json(j["background"]);
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_json(util::read_text_file(path));
}

void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& input_hashes) {
  json j;
  j["config"] = json::parse(cfg.to_json());
  j["config_hash"] = util::content_hash(cfg.to_json());
  json inputs = json::object();
  for (const auto& [name, hash] : input_hashes) inputs[name] = hash;
  j["input_hashes"] = inputs;
  util::write_text_file(dir / "manifest.json", j.dump(2) + "\n");
}

}  // namespace occlab::cli
