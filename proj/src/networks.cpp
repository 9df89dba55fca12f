#include "occlab/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace occlab::fields {

namespace {

long linear_params(int in, int out) { return static_cast<long>(in) * out + out; }

std::string layer_name(const std::string& prefix, int i, const char* part) {
  return prefix + ".l" + std::to_string(i) + "." + part;
}

void create_linear(ParamStore& store, const std::string& prefix, int i, int in, int out,
                   util::Rng& rng) {
  store.create(layer_name(prefix, i, "w"), in, out, in, rng);
  store.create_zeros(layer_name(prefix, i, "b"), 1, out);
}

Value apply_linear(const ParamStore& store, const std::string& prefix, int i,
                   const Value& x) {
  return diff::linear(x, store.get(layer_name(prefix, i, "w")),
                      store.get(layer_name(prefix, i, "b")));
}

// Raw (graph-free) mirrors of the diff ops; arithmetic matches diff.cpp.
Mat raw_linear(const ParamStore& store, const std::string& prefix, int i, const Mat& x) {
  Mat out = x * store.get(layer_name(prefix, i, "w")).value();
  out.rowwise() += store.get(layer_name(prefix, i, "b")).value().row(0);
  return out;
}

Mat raw_layer_norm(const Mat& in, const Mat& gain, const Mat& shift, double eps) {
  Mat out(in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const double mu = in.row(r).mean();
    const double var = (in.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    out.row(r) = ((in.row(r).array() - mu) * is) * gain.row(0).array();
  }
  out.rowwise() += shift.row(0);
  return out;
}

Mat raw_softmax(const Mat& in) {
  Mat out(in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const double mx = in.row(r).maxCoeff();
    Eigen::RowVectorXd e = (in.row(r).array() - mx).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

double raw_sigmoid(double v) {
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

// Density heads start nearly transparent: softplus(-5.3) ~ 0.005. Fields
// begin as almost-empty space and only grow density where rays demand it.
constexpr double kDensityRawBias = -5.3;

void bias_density_output(ParamStore& store, const std::string& head_prefix) {
  store.get(layer_name(head_prefix, 1, "b")).node()->value(0, 0) = kDensityRawBias;
}

double raw_softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

constexpr double kLayerNormEps = 1e-6;

struct RawHead {
  Eigen::VectorXd sigma;
  Mat color;
};

RawHead raw_head(const ParamStore& store, const std::string& prefix, const Mat& input) {
  Mat h = raw_linear(store, prefix, 0, input).cwiseMax(0.0);
  Mat out4 = raw_linear(store, prefix, 1, h);
  RawHead r;
  r.sigma = out4.col(0).unaryExpr([](double v) { return raw_softplus(v); });
  r.color = out4.rightCols(3).unaryExpr([](double v) { return raw_sigmoid(v); });
  return r;
}

HeadOutput diff_head(const ParamStore& store, const std::string& prefix, const Value& input) {
  Value h = diff::relu(apply_linear(store, prefix, 0, input));
  Value out4 = apply_linear(store, prefix, 1, h);
  HeadOutput o;
  o.sigma = diff::softplus(diff::cols(out4, 0, 1));
  o.color = diff::sigmoid(diff::cols(out4, 1, 3));
  return o;
}

}  // namespace

long count_parameters(const NetworkConfig& cfg, Component c) {
  const int pos = cfg.pos_dim();
  const int dir = cfg.dir_dim();
  const int w = cfg.width;
  switch (c) {
    case Component::kOccupancy:
      return linear_params(pos, w) + 2L * w + 2 * linear_params(w, w) +
             linear_params(w, cfg.gate_dim());
    case Component::kSceneSubnet:
      return linear_params(pos, w) + (NetworkConfig::scene_layers - 1) * linear_params(w, w);
    case Component::kSceneHead:
      return linear_params(w + dir, cfg.head_width) + linear_params(cfg.head_width, 4);
    case Component::kEmptyHead:
      return linear_params(pos, cfg.empty_head_width) + linear_params(cfg.empty_head_width, 4);
    case Component::kField:
      return count_parameters(cfg, Component::kOccupancy) +
             cfg.scene_subnets * count_parameters(cfg, Component::kSceneSubnet) +
             count_parameters(cfg, Component::kSceneHead) +
             count_parameters(cfg, Component::kEmptyHead);
  }
  return 0;
}

void init_field_params(ParamStore& store, const NetworkConfig& cfg, util::Rng& rng) {
  const int pos = cfg.pos_dim();
  const int w = cfg.width;

  create_linear(store, "occ", 0, pos, w, rng);
  store.create_ones("occ.ln.gain", 1, w);
  store.create_zeros("occ.ln.shift", 1, w);
  create_linear(store, "occ", 1, w, w, rng);
  create_linear(store, "occ", 2, w, w, rng);
  create_linear(store, "occ", 3, w, cfg.gate_dim(), rng);

  for (int k = 0; k < cfg.scene_subnets; ++k) {
    const std::string prefix = "scene" + std::to_string(k);
    create_linear(store, prefix, 0, pos, w, rng);
    for (int i = 1; i < NetworkConfig::scene_layers; ++i)
      create_linear(store, prefix, i, w, w, rng);
  }

  create_linear(store, "head_s", 0, w + cfg.dir_dim(), cfg.head_width, rng);
  create_linear(store, "head_s", 1, cfg.head_width, 4, rng);
  create_linear(store, "head_e", 0, pos, cfg.empty_head_width, rng);
  create_linear(store, "head_e", 1, cfg.empty_head_width, 4, rng);
  bias_density_output(store, "head_s");
  bias_density_output(store, "head_e");
}

Value occupancy_forward(const ParamStore& store, const NetworkConfig& cfg,
                        const Value& enc_pos) {
  (void)cfg;
  if (enc_pos.rows() == 0) throw std::invalid_argument("occupancy_forward: empty batch");
  Value h = apply_linear(store, "occ", 0, enc_pos);
  h = diff::layer_norm(h, store.get("occ.ln.gain"), store.get("occ.ln.shift"), kLayerNormEps);
  h = diff::relu(h);
  h = diff::relu(apply_linear(store, "occ", 1, h));
  h = diff::relu(apply_linear(store, "occ", 2, h));
  return diff::softmax(apply_linear(store, "occ", 3, h));
}

std::vector<int> top1_indices(const Mat& gates) {
  std::vector<int> top(static_cast<size_t>(gates.rows()));
  for (Eigen::Index r = 0; r < gates.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < gates.cols(); ++c)
      if (gates(r, c) > gates(r, best)) best = c;  // strict: ties keep lowest index
    top[static_cast<size_t>(r)] = best;
  }
  return top;
}

Dispatch dispatch(const Mat& gates) {
  Dispatch d;
  d.top1 = top1_indices(gates);
  d.routes.assign(static_cast<size_t>(gates.cols()), {});
  for (size_t i = 0; i < d.top1.size(); ++i)
    d.routes[static_cast<size_t>(d.top1[i])].push_back(static_cast<int>(i));
  return d;
}

Value scene_features(const ParamStore& store, const NetworkConfig& cfg, int subnet,
                     const Value& enc_pos) {
  (void)cfg;
  const std::string prefix = "scene" + std::to_string(subnet);
  Value x = enc_pos;
  for (int i = 0; i < NetworkConfig::scene_layers; ++i) {
    x = apply_linear(store, prefix, i, x);
    if (i + 1 < NetworkConfig::scene_layers) x = diff::relu(x);
  }
  return x;
}

HeadOutput scene_forward(const ParamStore& store, const NetworkConfig& cfg, int subnet,
                         const Value& enc_pos, const Value& enc_dir, const Value& gate) {
  Value scaled = diff::rowwise_scale(scene_features(store, cfg, subnet, enc_pos), gate);
  return diff_head(store, "head_s", diff::concat_cols(scaled, enc_dir));
}

HeadOutput empty_forward(const ParamStore& store, const NetworkConfig& cfg,
                         const Value& enc_pos, const Value& gate) {
  (void)cfg;
  // Identity trunk: the encoded point goes straight to the head, scaled by
  // its gate value.
  Value scaled = diff::rowwise_scale(enc_pos, gate);
  return diff_head(store, "head_e", scaled);
}

FieldForward field_forward(const ParamStore& store, const NetworkConfig& cfg,
                           const Mat& enc_pos, const Mat& enc_dir) {
  const int total = static_cast<int>(enc_pos.rows());
  FieldForward out;
  out.gates = occupancy_forward(store, cfg, Value::constant(enc_pos));
  out.routing = dispatch(out.gates.value());
  out.routed_to_empty.resize(static_cast<size_t>(total));
  for (int i = 0; i < total; ++i)
    out.routed_to_empty[static_cast<size_t>(i)] =
        out.routing.top1[static_cast<size_t>(i)] == cfg.scene_subnets ? 1 : 0;

  Value sigma_acc, color_acc;
  for (int k = 0; k <= cfg.scene_subnets; ++k) {
    const auto& idx = out.routing.routes[static_cast<size_t>(k)];
    if (idx.empty()) continue;
    Mat sub_pos(static_cast<Eigen::Index>(idx.size()), enc_pos.cols());
    Mat sub_dir(static_cast<Eigen::Index>(idx.size()), enc_dir.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
      sub_pos.row(static_cast<Eigen::Index>(i)) = enc_pos.row(idx[i]);
      sub_dir.row(static_cast<Eigen::Index>(i)) = enc_dir.row(idx[i]);
    }
    Value gate = diff::gather_rows(diff::cols(out.gates, k, 1), idx);
    HeadOutput branch =
        k == cfg.scene_subnets
            ? empty_forward(store, cfg, Value::constant(sub_pos), gate)
            : scene_forward(store, cfg, k, Value::constant(sub_pos),
                            Value::constant(sub_dir), gate);
    Value sigma_full = diff::scatter_rows(branch.sigma, idx, total);
    Value color_full = diff::scatter_rows(branch.color, idx, total);
    sigma_acc = sigma_acc.defined() ? diff::add(sigma_acc, sigma_full) : sigma_full;
    color_acc = color_acc.defined() ? diff::add(color_acc, color_full) : color_full;
  }
  out.sigma = sigma_acc;
  out.color = color_acc;
  return out;
}

Mat occupancy_gates_raw(const ParamStore& store, const NetworkConfig& cfg,
                        const Mat& enc_pos) {
  Mat h = raw_linear(store, "occ", 0, enc_pos);
  h = raw_layer_norm(h, store.get("occ.ln.gain").value(), store.get("occ.ln.shift").value(),
                     kLayerNormEps);
  h = h.cwiseMax(0.0);
  h = raw_linear(store, "occ", 1, h).cwiseMax(0.0);
  h = raw_linear(store, "occ", 2, h).cwiseMax(0.0);
  (void)cfg;
  return raw_softmax(raw_linear(store, "occ", 3, h));
}

std::vector<uint8_t> predict_occupied(const ParamStore& store, const NetworkConfig& cfg,
                                      const Mat& points) {
  if (points.rows() == 0) return {};
  const Mat gates = occupancy_gates_raw(store, cfg, positional_encode(points, cfg.freq_bands));
  const auto top = top1_indices(gates);
  std::vector<uint8_t> occ(top.size());
  for (size_t i = 0; i < top.size(); ++i) occ[i] = top[i] != cfg.scene_subnets ? 1 : 0;
  return occ;
}

RawFieldOutput field_forward_raw(const ParamStore& store, const NetworkConfig& cfg,
                                 const Mat& positions, const Mat& directions) {
  const int total = static_cast<int>(positions.rows());
  const Mat enc_pos = positional_encode(positions, cfg.freq_bands);
  const Mat enc_dir = positional_encode(directions, cfg.dir_freq_bands);
  const Mat gates = occupancy_gates_raw(store, cfg, enc_pos);
  Dispatch d = dispatch(gates);

  RawFieldOutput out;
  out.sigma = Eigen::VectorXd::Zero(total);
  out.color = Mat::Zero(total, 3);
  out.top1 = d.top1;
  for (int k = 0; k <= cfg.scene_subnets; ++k) {
    const auto& idx = d.routes[static_cast<size_t>(k)];
    if (idx.empty()) continue;
    Mat sub(static_cast<Eigen::Index>(idx.size()), enc_pos.cols());
    for (size_t i = 0; i < idx.size(); ++i)
      sub.row(static_cast<Eigen::Index>(i)) = enc_pos.row(idx[i]);

    Mat head_in;
    std::string head_prefix;
    if (k == cfg.scene_subnets) {
      head_in = sub;
      for (size_t i = 0; i < idx.size(); ++i)
        head_in.row(static_cast<Eigen::Index>(i)) *= gates(idx[i], k);
      head_prefix = "head_e";
    } else {
      const std::string prefix = "scene" + std::to_string(k);
      Mat x = sub;
      for (int i = 0; i < NetworkConfig::scene_layers; ++i) {
        x = raw_linear(store, prefix, i, x);
        if (i + 1 < NetworkConfig::scene_layers) x = x.cwiseMax(0.0);
      }
      head_in.resize(static_cast<Eigen::Index>(idx.size()), x.cols() + enc_dir.cols());
      for (size_t i = 0; i < idx.size(); ++i) {
        head_in.row(static_cast<Eigen::Index>(i)).head(x.cols()) =
            x.row(static_cast<Eigen::Index>(i)) * gates(idx[i], k);
        head_in.row(static_cast<Eigen::Index>(i)).tail(enc_dir.cols()) = enc_dir.row(idx[i]);
      }
      head_prefix = "head_s";
    }
    RawHead h = raw_head(store, head_prefix, head_in);
    for (size_t i = 0; i < idx.size(); ++i) {
      out.sigma(idx[i]) = h.sigma(static_cast<Eigen::Index>(i));
      out.color.row(idx[i]) = h.color.row(static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

long count_parameters(const RadianceConfig& cfg) {
  long total = linear_params(cfg.pos_dim(), cfg.width) +
               (cfg.depth - 1) * linear_params(cfg.width, cfg.width);
  total += linear_params(cfg.width + cfg.dir_dim(), cfg.head_width) +
           linear_params(cfg.head_width, 4);
  return total;
}

void init_radiance_params(ParamStore& store, const RadianceConfig& cfg, util::Rng& rng) {
  create_linear(store, "trunk", 0, cfg.pos_dim(), cfg.width, rng);
  for (int i = 1; i < cfg.depth; ++i) create_linear(store, "trunk", i, cfg.width, cfg.width, rng);
  create_linear(store, "head", 0, cfg.width + cfg.dir_dim(), cfg.head_width, rng);
  create_linear(store, "head", 1, cfg.head_width, 4, rng);
  bias_density_output(store, "head");
}

HeadOutput radiance_forward(const ParamStore& store, const RadianceConfig& cfg,
                            const Value& enc_pos, const Value& enc_dir) {
  Value x = enc_pos;
  for (int i = 0; i < cfg.depth; ++i) {
    x = apply_linear(store, "trunk", i, x);
    if (i + 1 < cfg.depth) x = diff::relu(x);
  }
  return diff_head(store, "head", diff::concat_cols(x, enc_dir));
}

RawFieldOutput radiance_forward_raw(const ParamStore& store, const RadianceConfig& cfg,
                                    const Mat& positions, const Mat& directions) {
  const Mat enc_pos = positional_encode(positions, cfg.freq_bands);
  const Mat enc_dir = positional_encode(directions, cfg.dir_freq_bands);
  Mat x = enc_pos;
  for (int i = 0; i < cfg.depth; ++i) {
    x = raw_linear(store, "trunk", i, x);
    if (i + 1 < cfg.depth) x = x.cwiseMax(0.0);
  }
  Mat head_in(x.rows(), x.cols() + enc_dir.cols());
  head_in.leftCols(x.cols()) = x;
  head_in.rightCols(enc_dir.cols()) = enc_dir;
  RawHead h = raw_head(store, "head", head_in);
  RawFieldOutput out;
  out.sigma = std::move(h.sigma);
  out.color = std::move(h.color);
  return out;
}

}  // namespace occlab::fields
