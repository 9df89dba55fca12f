#include "occlab/occ_grid.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "occlab/util.hpp"

namespace occlab::grid {

namespace {

constexpr char kMagic[4] = {'O', 'G', 'R', 'D'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("grid snapshot: truncated file");
  return v;
}

}  // namespace

OccGrid::OccGrid(int resolution, const Aabb& bounds, double decay, double threshold)
    : resolution_(resolution), bounds_(bounds), decay_(decay), threshold_(threshold) {
  if (resolution < 1) throw std::invalid_argument("OccGrid: resolution >= 1");
  const size_t cells =
      static_cast<size_t>(resolution) * static_cast<size_t>(resolution) * resolution;
  values_.assign(cells, 0.0);
  occupied_.assign(cells, 0);
}

long OccGrid::cell_index(const Vec3& p) const {
  if (!bounds_.contains(p)) return -1;
  const Vec3 rel = (p - bounds_.min).cwiseQuotient(bounds_.max - bounds_.min);
  long idx[3];
  for (int a = 0; a < 3; ++a) {
    long i = static_cast<long>(rel(a) * resolution_);
    idx[a] = std::min<long>(std::max<long>(i, 0), resolution_ - 1);
  }
  return (idx[0] * resolution_ + idx[1]) * resolution_ + idx[2];
}

Vec3 OccGrid::cell_center(long cell) const {
  const long iz = cell % resolution_;
  const long iy = (cell / resolution_) % resolution_;
  const long ix = cell / (static_cast<long>(resolution_) * resolution_);
  const Vec3 extent = bounds_.max - bounds_.min;
  return bounds_.min + Vec3((ix + 0.5) / resolution_ * extent.x(),
                            (iy + 0.5) / resolution_ * extent.y(),
                            (iz + 0.5) / resolution_ * extent.z());
}

void OccGrid::update(const SigmaFn& field, uint64_t update_seed, int threads) {
  const long cells = cell_count();
  const Vec3 extent = bounds_.max - bounds_.min;
  const double cell_size[3] = {extent.x() / resolution_, extent.y() / resolution_,
                               extent.z() / resolution_};

  Eigen::MatrixXd points(cells, 3);
  util::parallel_for(cells, threads, [&](int64_t begin, int64_t end) {
    for (int64_t c = begin; c < end; ++c) {
      util::Rng rng(util::derive_seed(update_seed, static_cast<uint64_t>(c)));
      const Vec3 corner = cell_center(c) - 0.5 * Vec3(cell_size[0], cell_size[1], cell_size[2]);
      points.row(c) =
          (corner + Vec3(rng.next_double() * cell_size[0], rng.next_double() * cell_size[1],
                         rng.next_double() * cell_size[2]))
              .transpose();
    }
  });

  Eigen::VectorXd sigma;
  field(points, sigma);
  if (sigma.size() != cells) throw std::runtime_error("OccGrid::update: sigma count mismatch");

  for (long c = 0; c < cells; ++c)
    values_[static_cast<size_t>(c)] = std::max(decay_ * values_[static_cast<size_t>(c)], sigma(c));
  binarize();
}

void OccGrid::binarize() {
  for (size_t i = 0; i < values_.size(); ++i) occupied_[i] = values_[i] > threshold_ ? 1 : 0;
}

bool OccGrid::query(const Vec3& p) const {
  const long cell = cell_index(p);
  return cell >= 0 && occupied_[static_cast<size_t>(cell)] != 0;
}

MemoryReport OccGrid::memory_report(int resolution) {
  if (resolution < 1) throw std::invalid_argument("memory_report: resolution >= 1");
  MemoryReport r;
  r.cells = static_cast<long>(resolution) * resolution * resolution;
  r.value_bytes = r.cells * static_cast<long>(sizeof(double));
  r.bitfield_bytes = (r.cells + 7) / 8;
  return r;
}

void OccGrid::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write grid snapshot: " + path.string());
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, 1);  // version
  write_pod<int32_t>(out, resolution_);
  for (int a = 0; a < 3; ++a) write_pod<double>(out, bounds_.min(a));
  for (int a = 0; a < 3; ++a) write_pod<double>(out, bounds_.max(a));
  write_pod<double>(out, decay_);
  write_pod<double>(out, threshold_);
  for (double v : values_) write_pod<double>(out, v);
  if (!out) throw std::runtime_error("grid snapshot write failed: " + path.string());
}

OccGrid OccGrid::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open grid snapshot: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a grid snapshot: " + path.string());
  const auto version = read_pod<uint32_t>(in);
  if (version != 1) throw std::runtime_error("unsupported grid snapshot version");
  const auto resolution = read_pod<int32_t>(in);
  Aabb bounds;
  for (int a = 0; a < 3; ++a) bounds.min(a) = read_pod<double>(in);
  for (int a = 0; a < 3; ++a) bounds.max(a) = read_pod<double>(in);
  const double decay = read_pod<double>(in);
  const double threshold = read_pod<double>(in);
  OccGrid grid(resolution, bounds, decay, threshold);
  for (auto& v : grid.values_) v = read_pod<double>(in);
  grid.binarize();
  return grid;
}

rendering::OccupancyPredicate OccGrid::predicate() const {
  return [this](const Eigen::MatrixXd& points, std::vector<uint8_t>& occupied) {
    occupied.resize(static_cast<size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i)
      occupied[static_cast<size_t>(i)] = query(points.row(i).transpose()) ? 1 : 0;
  };
}

rendering::GuidedSampleResult grid_guided_sample(const std::vector<rendering::Ray>& rays,
                                                 const OccGrid& grid, int coarse_samples,
                                                 int split_factor, uint64_t seed,
                                                 bool jitter_coarse) {
  return rendering::guided_sample(rays, grid.predicate(), coarse_samples, split_factor, seed,
                                  jitter_coarse);
}

}  // namespace occlab::grid
