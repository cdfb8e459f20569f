#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "rotenc/autodiff.hpp"
#include "rotenc/error.hpp"
#include "rotenc/random.hpp"

namespace rotenc {

using NamedTensors = std::map<std::string, ad::Tensor>;

/// Sorted set of atomic numbers a model knows; maps each to an embedding row.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<int> elements) : elements_(std::move(elements)) {
    std::sort(elements_.begin(), elements_.end());
    elements_.erase(std::unique(elements_.begin(), elements_.end()), elements_.end());
  }

  ad::Index index_of(int atomic_number) const {
    auto it = std::lower_bound(elements_.begin(), elements_.end(), atomic_number);
    if (it == elements_.end() || *it != atomic_number) {
      throw Error(ErrorCode::UnknownElement, "atomic number " + std::to_string(atomic_number) + " is not in the vocabulary");
    }
    return static_cast<ad::Index>(it - elements_.begin());
  }

  std::vector<ad::Index> indices_of(const std::vector<int>& atomic_numbers) const {
    std::vector<ad::Index> out;
    out.reserve(atomic_numbers.size());
    for (int z : atomic_numbers) out.push_back(index_of(z));
    return out;
  }

  std::size_t size() const { return elements_.size(); }
  const std::vector<int>& elements() const { return elements_; }

 private:
  std::vector<int> elements_;
};

/// Trainable parameters plus non-trainable buffers (batch-norm running statistics).
struct ModelState {
  ad::ParameterStore parameters;
  std::map<std::string, ad::Value> buffers;

  ModelState() = default;
  /// Deep copy: the copy never shares tensors with the original.
  ModelState(const ModelState& other) : parameters(other.parameters) {
    for (const auto& [name, v] : other.buffers) buffers.emplace(name, ad::Value::constant(v.data()));
  }
  ModelState& operator=(const ModelState& other) {
    if (this != &other) {
      ModelState copy(other);
      *this = std::move(copy);
    }
    return *this;
  }
  ModelState(ModelState&&) noexcept = default;
  ModelState& operator=(ModelState&&) noexcept = default;

  const ad::Value& param(const std::string& name) const { return parameters.at(name); }

  const ad::Value& buffer(const std::string& name) const {
    auto it = buffers.find(name);
    if (it == buffers.end()) throw Error(ErrorCode::InvalidInput, "unknown buffer " + name);
    return it->second;
  }

  void add_buffer(const std::string& name, ad::Tensor init) {
    if (buffers.count(name) != 0 || parameters.contains(name)) {
      throw Error(ErrorCode::InvalidInput, "duplicate state name " + name);
    }
    buffers.emplace(name, ad::Value::constant(std::move(init)));
  }

  /// Deep copy of every parameter and buffer.
  NamedTensors snapshot() const {
    NamedTensors out;
    for (const auto& [name, v] : parameters) out.emplace(name, v.data());
    for (const auto& [name, v] : buffers) out.emplace(name, v.data());
    return out;
  }

  /// Overwrites every entry from `tensors`; names and shapes must match exactly.
  void restore(const NamedTensors& tensors) {
    std::size_t expected = parameters.size() + buffers.size();
    if (tensors.size() != expected) {
      throw Error(ErrorCode::FormatError, "state has " + std::to_string(expected) + " tensors, source has " +
                                              std::to_string(tensors.size()));
    }
    auto assign = [&](const std::string& name, const ad::Value& v) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw Error(ErrorCode::FormatError, "missing tensor " + name);
      if (it->second.rows() != v.rows() || it->second.cols() != v.cols()) {
        throw Error(ErrorCode::FormatError, "tensor " + name + " has the wrong shape");
      }
      v.data_mut() = it->second;
    };
    for (const auto& [name, v] : parameters) assign(name, v);
    for (const auto& [name, v] : buffers) assign(name, v);
  }
};

/// Gaussian init with the given standard deviation.
inline ad::Tensor random_normal(ad::Index rows, ad::Index cols, double stddev, Rng& rng) {
  ad::Tensor t(rows, cols);
  for (ad::Index j = 0; j < cols; ++j) {
    for (ad::Index i = 0; i < rows; ++i) t(i, j) = stddev * rng.normal();
  }
  return t;
}

}  // namespace rotenc
