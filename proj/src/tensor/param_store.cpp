#include "metalab/param_store.hpp"

#include <cmath>

#include "metalab/errors.hpp"

namespace metalab {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Shape shape, std::vector<T> values) {
  if (contains(name)) throw ConfigError("ParamStore: duplicate parameter name " + name);
  Tensor<T> t(std::move(shape), std::move(values), true);
  params_.emplace(name, t);
  order_.push_back(name);
  return t;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("ParamStore: unknown parameter " + name);
  return it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("ParamStore: unknown parameter " + name);
  return it->second;
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

template <typename T>
Adam<T>::Adam(ParamStore<T>& store, AdamConfig config) : store_(&store), config_(config) {
  for (const auto& name : store.names()) {
    const std::size_t n = store.get(name).numel();
    m_.emplace(name, std::vector<T>(n, T(0)));
    v_.emplace(name, std::vector<T>(n, T(0)));
  }
}

template <typename T>
void Adam<T>::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const T lr = static_cast<T>(config_.lr);
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T eps = static_cast<T>(config_.eps);
  const T correction1 = static_cast<T>(1.0 - std::pow(config_.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(config_.beta2, t));
  for (const auto& name : store_->names()) {
    Tensor<T>& p = store_->get(name);
    if (!p.has_grad()) continue;
    auto data = p.mutable_data();
    auto grad = p.grad();
    auto& m = m_.at(name);
    auto& v = v_.at(name);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const T g = grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T m_hat = m[i] / correction1;
      const T v_hat = v[i] / correction2;
      data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
std::vector<T> uniform_fan_in(std::size_t count, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> out(count);
  for (auto& v : out) v = static_cast<T>(dist(rng));
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Adam<float>;
template class Adam<double>;
template std::vector<float> uniform_fan_in<float>(std::size_t, std::size_t, std::mt19937_64&);
template std::vector<double> uniform_fan_in<double>(std::size_t, std::size_t, std::mt19937_64&);

}  // namespace metalab
