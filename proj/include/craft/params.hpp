#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "craft/tensor.hpp"

namespace craft::tc {

struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Ordered registry of named trainable tensors.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  /// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
  Tensor xavier(const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    std::vector<double> v(fan_in * fan_out);
    for (auto& x : v) x = u(rng_);
    return add(name, {fan_in, fan_out}, std::move(v));
  }

  Tensor constant(const std::string& name, Shape shape, double value) {
    const std::size_t n = numel(shape);
    return add(name, std::move(shape), std::vector<double>(n, value));
  }

  Tensor add(const std::string& name, Shape shape, std::vector<double> values) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = params_.size();
    params_.push_back({name, Tensor::from(std::move(shape), std::move(values), true)});
    return params_.back().tensor;
  }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second].tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::mt19937_64 rng_;
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

// Checkpoint container: a plain-text index followed by raw little-endian
// float64 data.
//
//   CRAFT-CKPT 1
//   <record count>
//   <name> <rank> <dim0> ... <dimN> <byte offset into data section>
//   ...
//   DATA
//   <binary payload>

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

namespace detail {
inline void put_le_double(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(bytes), 8);
}
inline double get_le_double(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}
}  // namespace detail

inline void write_container(const std::string& path, const std::vector<NamedTensor>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot open for writing: " + path);
  os << "CRAFT-CKPT 1\n" << records.size() << "\n";
  std::size_t offset = 0;
  for (const auto& r : records) {
    if (r.name.find_first_of(" \t\n") != std::string::npos) throw UsageError("record name contains whitespace");
    if (numel(r.shape) != r.values.size()) throw ShapeError("record " + r.name + " shape/value mismatch");
    os << r.name << ' ' << r.shape.size();
    for (auto d : r.shape) os << ' ' << d;
    os << ' ' << offset << '\n';
    offset += r.values.size() * 8;
  }
  os << "DATA\n";
  for (const auto& r : records)
    for (double v : r.values) detail::put_le_double(os, v);
  if (!os) throw LoadError("write failed: " + path);
}

inline std::vector<NamedTensor> read_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open: " + path);
  std::string line;
  std::getline(is, line);
  if (line != "CRAFT-CKPT 1") throw LoadError("not a checkpoint container: " + path);
  std::getline(is, line);
  std::size_t count = 0;
  try {
    count = std::stoul(line);
  } catch (const std::exception&) {
    throw LoadError("bad record count in " + path);
  }
  std::vector<NamedTensor> records(count);
  std::vector<std::size_t> offsets(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw LoadError("truncated index in " + path);
    std::istringstream ls(line);
    std::size_t rank = 0;
    ls >> records[i].name >> rank;
    records[i].shape.resize(rank);
    for (auto& d : records[i].shape) ls >> d;
    ls >> offsets[i];
    if (!ls) throw LoadError("bad index line in " + path + ": " + line);
  }
  std::getline(is, line);
  if (line != "DATA") throw LoadError("missing DATA marker in " + path);
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = numel(records[i].shape);
    if (offsets[i] + n * 8 > payload.size()) throw LoadError("record " + records[i].name + " exceeds payload");
    records[i].values.resize(n);
    for (std::size_t k = 0; k < n; ++k) records[i].values[k] = detail::get_le_double(&payload[offsets[i] + 8 * k]);
  }
  return records;
}

inline void save_parameters(const ParameterStore& store, const std::string& path) {
  std::vector<NamedTensor> recs;
  for (const auto& p : store.all())
    recs.push_back({p.name, p.tensor.shape(), {p.tensor.values().begin(), p.tensor.values().end()}});
  write_container(path, recs);
}

/// Overwrites parameter values in place; every parameter must be present with
/// the same shape.
inline void load_parameters(ParameterStore& store, const std::string& path) {
  const auto recs = read_container(path);
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& r : recs) by_name[r.name] = &r;
  for (auto& p : store.all()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw LoadError("checkpoint lacks parameter " + p.name);
    if (it->second->shape != p.tensor.shape())
      throw LoadError("checkpoint shape mismatch for " + p.name + ": " + shape_str(it->second->shape) + " vs " +
                      shape_str(p.tensor.shape()));
    auto dst = p.tensor.mutable_values();
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
  }
  if (by_name.size() != store.all().size()) throw LoadError("checkpoint has parameters the model does not know");
}

}  // namespace craft::tc
