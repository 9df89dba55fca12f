#include "occlab/losses.hpp"

#include <stdexcept>

namespace occlab::losses {

RoutingStats routing_stats(const Value& gates, const std::vector<int>& top1) {
  const long batch = gates.rows();
  if (batch == 0) throw std::invalid_argument("routing_stats: empty batch");
  if (static_cast<long>(top1.size()) != batch)
    throw std::invalid_argument("routing_stats: top1 size mismatch");

  RoutingStats stats;
  stats.batch_size = batch;
  stats.scene_subnets = static_cast<int>(gates.cols()) - 1;
  stats.counts.assign(static_cast<size_t>(gates.cols()), 0);
  for (int k : top1) ++stats.counts[static_cast<size_t>(k)];
  stats.fractions.resize(gates.cols());
  for (Eigen::Index i = 0; i < gates.cols(); ++i)
    stats.fractions(i) =
        static_cast<double>(stats.counts[static_cast<size_t>(i)]) / static_cast<double>(batch);
  stats.gate_means = diff::mean_rows(gates);
  return stats;
}

Value rendering_loss(const Value& predicted, const Mat& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols())
    throw std::invalid_argument("rendering_loss: shape mismatch");
  Value err = diff::sub(predicted, Value::constant(target));
  Value sq = diff::mul(err, err);
  // Sum over channels, mean over rays.
  return diff::scale(diff::sum(sq), 1.0 / static_cast<double>(predicted.rows()));
}

Value balanced_loss(const RoutingStats& stats) {
  const int total = stats.scene_subnets + 1;
  Mat f = stats.fractions.transpose();
  Value fp = diff::mul(Value::constant(f), stats.gate_means);
  return diff::scale(diff::sum(fp), static_cast<double>(total));
}

Value imbalanced_occupancy_loss(const RoutingStats& stats, int virtual_subnets) {
  if (virtual_subnets < 1) throw std::invalid_argument("imbalanced loss: v >= 1");
  if (stats.scene_subnets < 1) throw std::invalid_argument("imbalanced loss: n >= 1");
  const int n = stats.scene_subnets;
  Mat w = stats.fractions.transpose();
  w(0, n) /= static_cast<double>(virtual_subnets);  // empty term is f_e p_e / v
  Value weighted = diff::mul(Value::constant(w), stats.gate_means);
  return diff::scale(diff::sum(weighted), static_cast<double>(n + virtual_subnets));
}

DensityLossResult density_loss(const Value& gates, const Value& sigma,
                               const std::vector<int>& top1, int scene_subnets) {
  DensityLossResult result;
  std::vector<int> empty_idx, scene_idx;
  for (size_t i = 0; i < top1.size(); ++i)
    (top1[i] == scene_subnets ? empty_idx : scene_idx).push_back(static_cast<int>(i));
  if (empty_idx.empty() || scene_idx.empty()) return result;

  Value sigma_detached = diff::detach(sigma);
  Value o_empty = diff::gather_rows(diff::cols(gates, scene_subnets, 1), empty_idx);
  Value o_scene =
      diff::gather_rows(diff::row_sum(diff::cols(gates, 0, scene_subnets)), scene_idx);
  Value mean_e = diff::mean(diff::mul(o_empty, diff::gather_rows(sigma_detached, empty_idx)));
  Value mean_s = diff::mean(diff::mul(o_scene, diff::gather_rows(sigma_detached, scene_idx)));
  result.sigma_e = mean_e.scalar();
  result.sigma_s = mean_s.scalar();
  if (result.sigma_s == 0.0) return result;
  result.value = diff::div(mean_e, mean_s);
  result.valid = true;
  return result;
}

Value final_loss(const Value& l_r, const Value& l_o, const Value& l_d,
                 const LossWeights& w) {
  Value total = diff::scale(l_r, w.w_r);
  total = diff::add(total, diff::scale(l_o, w.w_o));
  if (l_d.defined()) total = diff::add(total, diff::scale(l_d, w.w_d));
  return total;
}

}  // namespace occlab::losses
