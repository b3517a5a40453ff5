#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "metalab/errors.hpp"
#include "metalab/tensor.hpp"

namespace metalab {

// Named trainable tensors in registration order. Modules keep handles to the
// same tensors, so in-place updates (optimizer, checkpoint restore) are seen
// everywhere.
template <typename T>
class ParamStore {
 public:
  // Throws ConfigError on a duplicate name.
  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> values);
  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::size_t parameter_count() const;
  void zero_grad();

  // Copies every value from `other`, which must hold the same names and shapes.
  template <typename U>
  void copy_from(const ParamStore<U>& other);

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor<T>> params_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(ParamStore<T>& store, AdamConfig config);

  // One bias-corrected update of every parameter that received a gradient.
  void step();

  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t step) { step_ = step; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  std::vector<T>& first_moment(const std::string& name) { return m_.at(name); }
  std::vector<T>& second_moment(const std::string& name) { return v_.at(name); }
  const std::vector<T>& first_moment(const std::string& name) const { return m_.at(name); }
  const std::vector<T>& second_moment(const std::string& name) const { return v_.at(name); }

 private:
  ParamStore<T>* store_;
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::map<std::string, std::vector<T>> m_;
  std::map<std::string, std::vector<T>> v_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for conv/linear layers.
template <typename T>
std::vector<T> uniform_fan_in(std::size_t count, std::size_t fan_in, std::mt19937_64& rng);

template <typename T>
template <typename U>
void ParamStore<T>::copy_from(const ParamStore<U>& other) {
  for (const auto& name : order_) {
    auto& dst = params_.at(name);
    const auto& src = other.get(name);
    if (src.shape() != dst.shape()) {
      throw ConfigError("ParamStore::copy_from: shape mismatch for " + name);
    }
    auto out = dst.mutable_data();
    auto in = src.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(in[i]);
  }
}

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace metalab
