#include "occlab/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace occlab::diff {

namespace {

constexpr char kMagic[4] = {'O', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_matrix(std::ostream& out, const Mat& m) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(m.rows()));
  write_pod<uint32_t>(out, static_cast<uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<double>(out, m(r, c));
}

Mat read_matrix(std::istream& in) {
  const auto rows = read_pod<uint32_t>(in);
  const auto cols = read_pod<uint32_t>(in);
  Mat m(rows, cols);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) m(r, c) = read_pod<double>(in);
  return m;
}

}  // namespace

Value ParamStore::insert(const std::string& name, Mat init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  Entry e;
  e.name = name;
  e.value = Value::param(std::move(init));
  e.m = Mat::Zero(e.value.rows(), e.value.cols());
  e.v = Mat::Zero(e.value.rows(), e.value.cols());
  index_[name] = entries_.size();
  names_.push_back(name);
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

Value ParamStore::create(const std::string& name, int rows, int cols, int fan_in,
                         util::Rng& rng) {
  Mat init(rows, cols);
  const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) init(r, c) = rng.uniform(-bound, bound);
  return insert(name, std::move(init));
}

Value ParamStore::create_zeros(const std::string& name, int rows, int cols) {
  return insert(name, Mat::Zero(rows, cols));
}

Value ParamStore::create_ones(const std::string& name, int rows, int cols) {
  return insert(name, Mat::Ones(rows, cols));
}

Value ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return entries_[it->second].value;
}

long ParamStore::total_parameters() const {
  long total = 0;
  for (const auto& e : entries_) total += static_cast<long>(e.value.value().size());
  return total;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.value.node()->zero_grad();
}

bool ParamStore::adam_step(const AdamConfig& cfg, std::string* diagnostics) {
  for (const auto& e : entries_) {
    const Mat& g = e.value.node()->grad;
    if (g.size() != e.value.value().size() || !g.allFinite()) {
      if (diagnostics)
        *diagnostics = "non-finite or missing gradient for parameter '" + e.name + "'";
      return false;
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (auto& e : entries_) {
    const Mat& g = e.value.node()->grad;
    e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * g;
    e.v = cfg.beta2 * e.v.array().matrix() + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Mat m_hat = e.m / bc1;
    const Mat v_hat = e.v / bc2;
    e.value.node()->value.array() -=
        cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
  }
  return true;
}

void ParamStore::save(const std::filesystem::path& path, const std::string& meta) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, kVersion);
  write_pod<uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_pod<int64_t>(out, step_);
  write_pod<uint32_t>(out, static_cast<uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_matrix(out, e.value.value());
    write_matrix(out, e.m);
    write_matrix(out, e.v);
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

ParamStore ParamStore::load(const std::filesystem::path& path, std::string* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const auto version = read_pod<uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto meta_len = read_pod<uint64_t>(in);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (meta) *meta = meta_str;

  ParamStore store;
  store.step_ = read_pod<int64_t>(in);
  const auto count = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    Mat value = read_matrix(in);
    Mat m = read_matrix(in);
    Mat v = read_matrix(in);
    store.insert(name, std::move(value));
    store.entries_.back().m = std::move(m);
    store.entries_.back().v = std::move(v);
  }
  return store;
}

std::string ParamStore::values_hash() const {
  std::string bytes;
  for (const auto& e : entries_) {
    bytes += e.name;
    bytes.push_back('\0');
    const Mat& m = e.value.value();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        double d = m(r, c);
        char buf[sizeof(double)];
        std::memcpy(buf, &d, sizeof(double));
        bytes.append(buf, sizeof(double));
      }
  }
  return util::content_hash(bytes);
}

}  // namespace occlab::diff
