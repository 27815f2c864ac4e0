#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "perfnet/aligned.hpp"
#include "perfnet/error.hpp"
#include "perfnet/rng.hpp"

namespace perfnet::nn {

template <typename T>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  AlignedVector<T> data;

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
  bool operator==(const Tensor&) const = default;
};

/// Named, ordered collection of tensors. Gradients and optimizer moments use
/// the same layout as the weights they belong to.
template <typename T>
class ParamSet {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape) {
    Tensor<T> t{std::move(name), std::move(shape), {}};
    t.data.assign(t.numel(), T{});
    tensors_.push_back(std::move(t));
    return tensors_.size() - 1;
  }

  std::size_t size() const { return tensors_.size(); }
  Tensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return tensors_[i]; }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  std::span<T> data(std::size_t i) { return tensors_[i].data; }
  std::span<const T> data(std::size_t i) const { return tensors_[i].data; }

  const Tensor<T>& find(const std::string& name) const {
    auto it = std::find_if(tensors_.begin(), tensors_.end(), [&](const auto& t) { return t.name == name; });
    if (it == tensors_.end()) throw ShapeMismatch("no tensor named " + name);
    return *it;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.data.size();
    return n;
  }

  ParamSet zeros_like() const {
    ParamSet out = *this;
    for (auto& t : out.tensors_) std::fill(t.data.begin(), t.data.end(), T{});
    return out;
  }

  void set_zero() {
    for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), T{});
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& t : tensors_) {
      const auto i = out.add(t.name, t.shape);
      std::transform(t.data.begin(), t.data.end(), out[i].data.begin(), [](T v) { return static_cast<U>(v); });
    }
    return out;
  }

  /// Same names and shapes in the same order.
  bool same_layout(const ParamSet& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (tensors_[i].name != other[i].name || tensors_[i].shape != other[i].shape) return false;
    return true;
  }

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<Tensor<T>> tensors_;
};

/// Fill every tensor with uniform(-sqrt(1/fan_in), sqrt(1/fan_in)), where
/// fan_in(i) is supplied per tensor (weights and their biases share it).
template <typename T, typename FanIn>
void init_uniform(ParamSet<T>& params, std::uint64_t seed, FanIn&& fan_in) {
  Rng rng(seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in(i)));
    for (auto& v : params[i].data) v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

}  // namespace perfnet::nn
