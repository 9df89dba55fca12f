#include <doctest.h>

#include <map>
#include <set>

#include "occlab/networks.hpp"
#include "test_support.hpp"

using namespace occlab;
using diff::Mat;
using diff::Value;
using fields::Component;
using fields::NetworkConfig;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig cfg;
  cfg.scene_subnets = 2;
  cfg.width = 8;
  cfg.freq_bands = 1;
  cfg.dir_freq_bands = 1;
  cfg.head_width = 6;
  cfg.empty_head_width = 4;
  return cfg;
}

diff::ParamStore make_store(const NetworkConfig& cfg, uint64_t seed = 21) {
  util::Rng rng(seed);
  diff::ParamStore store;
  fields::init_field_params(store, cfg, rng);
  return store;
}

}  // namespace

TEST_CASE("positional encoding: origin, dimensions, injectivity") {
  const Eigen::RowVectorXd enc = fields::positional_encode_point({0, 0, 0}, 1);
  REQUIRE(enc.size() == 9);
  for (int i = 0; i < 6; ++i) CHECK(enc(i) == doctest::Approx(0.0));
  for (int i = 6; i < 9; ++i) CHECK(enc(i) == doctest::Approx(1.0));

  CHECK(fields::encoded_dim(10) == 63);

  // No two points of a 17^3 lattice on [-1,1]^3 collide.
  std::set<std::vector<double>> seen;
  for (int ix = 0; ix < 17; ++ix)
    for (int iy = 0; iy < 17; ++iy)
      for (int iz = 0; iz < 17; ++iz) {
        const Eigen::Vector3d p(-1.0 + ix / 8.0, -1.0 + iy / 8.0, -1.0 + iz / 8.0);
        const Eigen::RowVectorXd e = fields::positional_encode_point(p, 4);
        std::vector<double> key(e.data(), e.data() + e.size());
        CHECK(seen.insert(key).second);
      }
  CHECK(seen.size() == 17 * 17 * 17);
}

TEST_CASE("parameter counts: paper-scale occupancy network") {
  const NetworkConfig paper = NetworkConfig::paper_scale();
  CHECK(paper.pos_dim() == 63);
  CHECK(fields::count_parameters(paper, Component::kOccupancy) == 150793);
}

TEST_CASE("count_parameters matches registered parameters per component") {
  const NetworkConfig cfg = tiny_config();
  auto store = make_store(cfg);
  std::map<std::string, long> by_prefix;
  for (const auto& name : store.names()) {
    const auto dot = name.find('.');
    by_prefix[name.substr(0, dot)] += static_cast<long>(store.get(name).value().size());
  }
  CHECK(by_prefix["occ"] == fields::count_parameters(cfg, Component::kOccupancy));
  CHECK(by_prefix["scene0"] == fields::count_parameters(cfg, Component::kSceneSubnet));
  CHECK(by_prefix["scene1"] == fields::count_parameters(cfg, Component::kSceneSubnet));
  CHECK(by_prefix["head_s"] == fields::count_parameters(cfg, Component::kSceneHead));
  CHECK(by_prefix["head_e"] == fields::count_parameters(cfg, Component::kEmptyHead));
  CHECK(store.total_parameters() == fields::count_parameters(cfg, Component::kField));
  // The empty path (identity trunk + small head) is strictly smaller than any
  // scene path.
  CHECK(fields::count_parameters(cfg, Component::kEmptyHead) <
        fields::count_parameters(cfg, Component::kSceneSubnet) +
            fields::count_parameters(cfg, Component::kSceneHead));
}

TEST_CASE("occupancy network with zeroed output layer yields uniform gates") {
  const NetworkConfig cfg = tiny_config();
  auto store = make_store(cfg);
  store.get("occ.l3.w").node()->value.setZero();
  store.get("occ.l3.b").node()->value.setZero();
  util::Rng rng(3);
  const Mat enc = fields::positional_encode(testing::random_matrix(10, 3, rng), cfg.freq_bands);
  const Mat gates = fields::occupancy_gates_raw(store, cfg, enc);
  for (int r = 0; r < gates.rows(); ++r)
    for (int c = 0; c < gates.cols(); ++c)
      CHECK(gates(r, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("top-1 selection and deterministic tie break") {
  Mat gates(2, 3);
  gates << 0.1, 0.2, 0.7,  // empty wins
      0.4, 0.4, 0.2;       // tie broken toward index 0
  const auto top = fields::top1_indices(gates);
  CHECK(top[0] == 2);
  CHECK(top[1] == 0);
}

TEST_CASE("dispatch partitions the batch and round-trips through scatter") {
  util::Rng rng(9);
  Mat gates = testing::random_matrix(100, 4, rng, 0.0, 1.0);
  const auto d = fields::dispatch(gates);
  size_t total = 0;
  std::vector<int> seen(100, 0);
  for (const auto& route : d.routes) {
    total += route.size();
    for (int i : route) ++seen[static_cast<size_t>(i)];
  }
  CHECK(total == 100);
  for (int count : seen) CHECK(count == 1);  // exactly one sub-network per point

  // scatter(gather(x)) restores the original rows.
  Value x = Value::constant(testing::random_matrix(100, 5, rng));
  Value sum;
  for (const auto& route : d.routes) {
    if (route.empty()) continue;
    Value part = diff::scatter_rows(diff::gather_rows(x, route), route, 100);
    sum = sum.defined() ? diff::add(sum, part) : part;
  }
  CHECK((sum.value() - x.value()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("all points gated to empty leave scene routes empty") {
  Mat gates(5, 3);
  gates.col(0).setConstant(0.1);
  gates.col(1).setConstant(0.2);
  gates.col(2).setConstant(0.7);
  const auto d = fields::dispatch(gates);
  CHECK(d.routes[0].empty());
  CHECK(d.routes[1].empty());
  CHECK(d.routes[2].size() == 5);
}

TEST_CASE("gate scaling of scene features is exactly linear") {
  const NetworkConfig cfg = tiny_config();
  auto store = make_store(cfg);
  util::Rng rng(5);
  const Mat enc = fields::positional_encode(testing::random_matrix(4, 3, rng), cfg.freq_bands);
  Value features = fields::scene_features(store, cfg, 0, Value::constant(enc));

  Value gate1 = Value::constant(Mat::Ones(4, 1));
  Value scaled1 = diff::rowwise_scale(features, gate1);
  CHECK((scaled1.value() - features.value()).cwiseAbs().maxCoeff() == 0.0);

  Value gate2 = Value::constant(Mat::Constant(4, 1, 2.0));
  Value scaled2 = diff::rowwise_scale(features, gate2);
  CHECK((scaled2.value() - 2.0 * features.value()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("empty branch: sigma nonnegative, deterministic, identity trunk") {
  const NetworkConfig cfg = tiny_config();
  auto store = make_store(cfg);
  util::Rng rng(6);
  const Mat enc =
      fields::positional_encode(testing::random_matrix(16, 3, rng), cfg.freq_bands);
  Value gate = Value::constant(Mat::Constant(16, 1, 0.5));
  auto out1 = fields::empty_forward(store, cfg, Value::constant(enc), gate);
  auto out2 = fields::empty_forward(store, cfg, Value::constant(enc), gate);
  CHECK(out1.sigma.value().minCoeff() >= 0.0);
  CHECK((out1.sigma.value() - out2.sigma.value()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out1.color.value() - out2.color.value()).cwiseAbs().maxCoeff() == 0.0);
  // Identical rows produce identical outputs.
  Mat two = Mat(2, enc.cols());
  two.row(0) = enc.row(0);
  two.row(1) = enc.row(0);
  auto out3 = fields::empty_forward(store, cfg, Value::constant(two),
                                    Value::constant(Mat::Constant(2, 1, 0.5)));
  CHECK((out3.sigma.value()(0, 0)) == out3.sigma.value()(1, 0));
}

TEST_CASE("field_forward restores input order and matches the raw path") {
  const NetworkConfig cfg = tiny_config();
  auto store = make_store(cfg);
  util::Rng rng(8);
  const Mat positions = testing::random_matrix(40, 3, rng);
  Mat directions = testing::random_matrix(40, 3, rng);
  for (int r = 0; r < directions.rows(); ++r) directions.row(r).normalize();

  const Mat enc_pos = fields::positional_encode(positions, cfg.freq_bands);
  const Mat enc_dir = fields::positional_encode(directions, cfg.dir_freq_bands);
  auto ff = fields::field_forward(store, cfg, enc_pos, enc_dir);
  auto raw = fields::field_forward_raw(store, cfg, positions, directions);

  REQUIRE(ff.sigma.rows() == 40);
  for (int i = 0; i < 40; ++i) {
    CHECK(ff.routing.top1[static_cast<size_t>(i)] == raw.top1[static_cast<size_t>(i)]);
    CHECK(ff.sigma.value()(i, 0) == doctest::Approx(raw.sigma(i)).epsilon(1e-12));
    for (int c = 0; c < 3; ++c)
      CHECK(ff.color.value()(i, c) == doctest::Approx(raw.color(i, c)).epsilon(1e-12));
    CHECK((ff.routed_to_empty[static_cast<size_t>(i)] != 0) ==
          (raw.top1[static_cast<size_t>(i)] == cfg.scene_subnets));
  }
}

TEST_CASE("forced uniform gates route every point to sub-network 0") {
  const NetworkConfig cfg = tiny_config();
  auto store = make_store(cfg);
  store.get("occ.l3.w").node()->value.setZero();
  store.get("occ.l3.b").node()->value.setZero();
  util::Rng rng(10);
  const Mat positions = testing::random_matrix(12, 3, rng);
  auto raw = fields::field_forward_raw(store, cfg, positions, positions);
  for (int t : raw.top1) CHECK(t == 0);
}

TEST_CASE("rendering-style loss reaches occupancy parameters through the gate") {
  // Two-point toy graph: the only path from the loss to the occupancy network
  // is the gate value multiplied onto branch features.
  const NetworkConfig cfg = tiny_config();
  auto store = make_store(cfg, 77);
  util::Rng rng(12);
  const Mat positions = testing::random_matrix(2, 3, rng);
  const Mat enc_pos = fields::positional_encode(positions, cfg.freq_bands);
  const Mat enc_dir = fields::positional_encode(positions, cfg.dir_freq_bands);

  auto make_loss = [&]() {
    auto ff = fields::field_forward(store, cfg, enc_pos, enc_dir);
    return diff::add(diff::mean(ff.sigma), diff::mean(ff.color));
  };
  std::vector<Value> occ_params;
  for (const auto& name : store.names())
    if (name.rfind("occ.", 0) == 0) occ_params.push_back(store.get(name));
  CHECK(testing::check_gradients(occ_params, make_loss) < 1e-5);

  Value loss = make_loss();
  store.zero_grads();
  diff::backward(loss);
  double grad_norm = 0;
  for (const auto& p : occ_params) grad_norm += p.grad().squaredNorm();
  CHECK(grad_norm > 0.0);
}

TEST_CASE("predict_occupied is pure and consistent with the gates") {
  const NetworkConfig cfg = tiny_config();
  auto store = make_store(cfg);
  util::Rng rng(14);
  const Mat positions = testing::random_matrix(30, 3, rng);
  const auto occ1 = fields::predict_occupied(store, cfg, positions);
  const auto occ2 = fields::predict_occupied(store, cfg, positions);
  CHECK(occ1 == occ2);
  const Mat gates =
      fields::occupancy_gates_raw(store, cfg, fields::positional_encode(positions, cfg.freq_bands));
  const auto top = fields::top1_indices(gates);
  for (size_t i = 0; i < occ1.size(); ++i)
    CHECK((occ1[i] != 0) == (top[i] != cfg.scene_subnets));
}

TEST_CASE("radiance network: parameter count matches registration") {
  fields::RadianceConfig rc;
  rc.width = 16;
  rc.depth = 3;
  rc.freq_bands = 2;
  rc.dir_freq_bands = 1;
  rc.head_width = 8;
  util::Rng rng(15);
  diff::ParamStore store;
  fields::init_radiance_params(store, rc, rng);
  CHECK(store.total_parameters() == fields::count_parameters(rc));

  // Diff and raw paths agree.
  const Mat positions = testing::random_matrix(9, 3, rng);
  Mat directions = testing::random_matrix(9, 3, rng);
  for (int r = 0; r < directions.rows(); ++r) directions.row(r).normalize();
  auto head = fields::radiance_forward(
      store, rc, Value::constant(fields::positional_encode(positions, rc.freq_bands)),
      Value::constant(fields::positional_encode(directions, rc.dir_freq_bands)));
  auto raw = fields::radiance_forward_raw(store, rc, positions, directions);
  CHECK((head.sigma.value().col(0) - raw.sigma).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((head.color.value() - raw.color).cwiseAbs().maxCoeff() < 1e-12);
}
