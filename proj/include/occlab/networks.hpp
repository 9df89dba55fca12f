#pragma once

#include <string>
#include <vector>

#include "occlab/diff.hpp"
#include "occlab/encoding.hpp"
#include "occlab/optim.hpp"

namespace occlab::fields {

using diff::Mat;
using diff::ParamStore;
using diff::Value;

struct NetworkConfig {
  int scene_subnets = 2;      // n
  int width = 64;             // trunk width of occupancy and scene networks
  int freq_bands = 6;         // position encoding bands
  int dir_freq_bands = 2;     // direction encoding bands
  int head_width = 32;        // hidden width of the scene head
  int empty_head_width = 16;  // hidden width of the empty-space head
  static constexpr int occupancy_layers = 4;
  static constexpr int scene_layers = 7;

  int pos_dim() const { return encoded_dim(freq_bands); }
  int dir_dim() const { return encoded_dim(dir_freq_bands); }
  int gate_dim() const { return scene_subnets + 1; }

  static NetworkConfig paper_scale() {
    NetworkConfig c;
    c.scene_subnets = 8;
    c.width = 256;
    c.freq_bands = 10;
    return c;
  }
};

enum class Component {
  kOccupancy,
  kSceneSubnet,   // one 7-layer trunk
  kSceneHead,
  kEmptyHead,
  kField,         // occupancy + n trunks + both heads
};

long count_parameters(const NetworkConfig& cfg, Component c);

// Registers every field parameter in `store` with deterministic names and
// seeded uniform fan-in init.
void init_field_params(ParamStore& store, const NetworkConfig& cfg, util::Rng& rng);

// Occupancy classifier: input layer -> layer-norm -> two inner layers ->
// output layer, softmax over n+1 gate values.
Value occupancy_forward(const ParamStore& store, const NetworkConfig& cfg,
                        const Value& enc_pos);

// Argmax per row; ties broken toward the lowest index.
std::vector<int> top1_indices(const Mat& gates);

struct Dispatch {
  std::vector<std::vector<int>> routes;  // per sub-network row indices, size n+1
  std::vector<int> top1;                 // per-point chosen index
};
Dispatch dispatch(const Mat& gates);

struct FieldForward {
  Value sigma;   // R x 1
  Value color;   // R x 3
  Value gates;   // R x (n+1)
  Dispatch routing;
  std::vector<uint8_t> routed_to_empty;  // per point
};

// Full dispatch pipeline: gates -> top-1 routing -> per-branch trunk/head with
// the gate value multiplied onto the branch features -> scatter back to input
// order. Each point is evaluated by exactly one sub-network.
FieldForward field_forward(const ParamStore& store, const NetworkConfig& cfg,
                           const Mat& enc_pos, const Mat& enc_dir);

// Branch evaluators, exposed for targeted tests. `gate` is m x 1 with the
// routed points' gate values.
struct HeadOutput {
  Value sigma;  // m x 1
  Value color;  // m x 3
};
HeadOutput scene_forward(const ParamStore& store, const NetworkConfig& cfg, int subnet,
                         const Value& enc_pos, const Value& enc_dir, const Value& gate);
HeadOutput empty_forward(const ParamStore& store, const NetworkConfig& cfg,
                         const Value& enc_pos, const Value& gate);

// Trunk output of scene sub-network `subnet` before gate scaling and head.
Value scene_features(const ParamStore& store, const NetworkConfig& cfg, int subnet,
                     const Value& enc_pos);

// Graph-free forward paths for inference-heavy callers (guided sampling, grid
// conversion, rendering). They reproduce the differentiable path bit for bit.
Mat occupancy_gates_raw(const ParamStore& store, const NetworkConfig& cfg,
                        const Mat& enc_pos);

// points are raw 3D positions; encoding happens inside.
std::vector<uint8_t> predict_occupied(const ParamStore& store, const NetworkConfig& cfg,
                                      const Mat& points);

struct RawFieldOutput {
  Eigen::VectorXd sigma;
  Mat color;
  std::vector<int> top1;
};
RawFieldOutput field_forward_raw(const ParamStore& store, const NetworkConfig& cfg,
                                 const Mat& positions, const Mat& directions);

// Plain single-MLP radiance field used by guided/dense training and as the
// grid baseline's model: trunk of `depth` linear layers plus the scene-style
// direction-conditioned head.
struct RadianceConfig {
  int width = 64;
  int depth = 4;
  int freq_bands = 6;
  int dir_freq_bands = 2;
  int head_width = 32;
  int pos_dim() const { return encoded_dim(freq_bands); }
  int dir_dim() const { return encoded_dim(dir_freq_bands); }
};

long count_parameters(const RadianceConfig& cfg);
void init_radiance_params(ParamStore& store, const RadianceConfig& cfg, util::Rng& rng);
HeadOutput radiance_forward(const ParamStore& store, const RadianceConfig& cfg,
                            const Value& enc_pos, const Value& enc_dir);
RawFieldOutput radiance_forward_raw(const ParamStore& store, const RadianceConfig& cfg,
                                    const Mat& positions, const Mat& directions);

}  // namespace occlab::fields
