#pragma once

#include <vector>

#include "occlab/diff.hpp"

namespace occlab::losses {

using diff::Mat;
using diff::Value;

// Per-batch routing summary over the n scene sub-networks plus the empty
// network at index n. `fractions` come from the hard top-1 assignment and are
// piecewise constant; `gate_means` are the batch-mean gate values (the soft
// side that carries gradient).
struct RoutingStats {
  Eigen::VectorXd fractions;  // f, size n+1
  Value gate_means;           // p, 1 x (n+1)
  std::vector<long> counts;   // per sub-network
  long batch_size = 0;
  int scene_subnets = 0;  // n

  double empty_fraction() const { return fractions(scene_subnets); }
};

RoutingStats routing_stats(const Value& gates, const std::vector<int>& top1);

struct LossWeights {
  double w_r = 1.0;
  double w_o = 0.0005;
  double w_d = 0.1;
};

// Mean over rays of the squared color error (channels summed per ray).
Value rendering_loss(const Value& predicted, const Mat& target);

// Reference balanced load loss over the n+1 sub-networks:
// (n+1) * sum_i f_i p_i; equals 1 under perfectly uniform dispatch.
Value balanced_loss(const RoutingStats& stats);

// Imbalanced occupancy loss treating the empty network as v virtual
// sub-networks: (n+v) * (f_e p_e / v + sum_{i<n} f_i p_i). Equals 1 at the
// optimum where the empty network takes a v/(n+v) share. Gradient flows
// through p only.
Value imbalanced_occupancy_loss(const RoutingStats& stats, int virtual_subnets);

struct DensityLossResult {
  Value value;
  bool valid = false;
  double sigma_e = 0.0;  // occupancy-weighted mean density, empty-routed
  double sigma_s = 0.0;  // occupancy-weighted mean density, scene-routed
};

// L_d = sigma_e / sigma_s over detached densities; the occupancy gate values
// are the only gradient path. A scene point's gate factor is the sum of its
// n scene gate values. Degenerate batches (either side empty, or sigma_s
// == 0) return valid=false and the caller skips the term.
DensityLossResult density_loss(const Value& gates, const Value& sigma,
                               const std::vector<int>& top1, int scene_subnets);

// w_r L_r + w_o L_o + w_d L_d. Pass an undefined L_d to drop the term.
Value final_loss(const Value& l_r, const Value& l_o, const Value& l_d,
                 const LossWeights& w);

}  // namespace occlab::losses
