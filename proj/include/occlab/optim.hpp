#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "occlab/diff.hpp"
#include "occlab/util.hpp"

namespace occlab::diff {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named parameter tensors plus Adam moment buffers. Iteration follows
// insertion order so updates and serialization are reproducible.
class ParamStore {
 public:
  // Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] when fan_in > 0,
  // zeros otherwise.
  Value create(const std::string& name, int rows, int cols, int fan_in, util::Rng& rng);
  Value create_zeros(const std::string& name, int rows, int cols);
  Value create_ones(const std::string& name, int rows, int cols);

  Value get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<std::string>& names() const { return names_; }
  size_t size() const { return names_.size(); }
  long total_parameters() const;
  long step_count() const { return step_; }

  void zero_grads();

  // Standard Adam with bias correction. Returns false (and leaves all state
  // untouched) if any gradient is non-finite; `diagnostics` then names the
  // offending tensor.
  bool adam_step(const AdamConfig& cfg, std::string* diagnostics = nullptr);

  // Versioned binary container: values, moments, and step counter round-trip
  // bitwise. `meta` is free-form JSON text stored alongside (network config).
  void save(const std::filesystem::path& path, const std::string& meta = "{}") const;
  static ParamStore load(const std::filesystem::path& path, std::string* meta = nullptr);

  // Hash of parameter values only (not moments); used to verify frozen
  // networks stay frozen.
  std::string values_hash() const;

 private:
  struct Entry {
    std::string name;
    Value value;
    Mat m, v;
  };
  Value insert(const std::string& name, Mat init);

  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
  std::vector<std::string> names_;
  long step_ = 0;
};

}  // namespace occlab::diff
