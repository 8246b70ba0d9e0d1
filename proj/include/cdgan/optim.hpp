#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cdgan/error.hpp"
#include "cdgan/tensor.hpp"

namespace cdgan {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

// Adam over a fixed, ordered list of parameter tensors. Moment buffers are
// allocated on the first step.
template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  [[nodiscard]] const AdamConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::int64_t steps() const noexcept { return steps_; }
  [[nodiscard]] const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  [[nodiscard]] const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

  // Descends along grads.
  void step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads) {
    if (params.size() != grads.size()) {
      throw InputError("Adam: parameter and gradient counts differ");
    }
    if (m_.empty()) {
      for (const Tensor<T>* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    }
    if (m_.size() != params.size()) {
      throw InputError("Adam: parameter list changed between steps");
    }
    ++steps_;
    const double b1 = cfg_.beta1;
    const double b2 = cfg_.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    const T step_size = static_cast<T>(cfg_.learning_rate / bias1);
    const T inv_sqrt_bias2 = static_cast<T>(1.0 / std::sqrt(bias2));
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i];
      const Tensor<T>& gr = grads[i];
      if (gr.shape() != p.shape()) {
        throw InputError("Adam: gradient shape " + to_string(gr.shape()) + " does not match parameter " +
                         to_string(p.shape()));
      }
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = static_cast<T>(b1) * m[j] + static_cast<T>(1.0 - b1) * gr[j];
        v[j] = static_cast<T>(b2) * v[j] + static_cast<T>(1.0 - b2) * gr[j] * gr[j];
        p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bias2 + eps);
      }
    }
  }

  // Used by checkpoint restore.
  void restore(AdamConfig cfg, std::int64_t steps, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v) {
    if (m.size() != v.size()) {
      throw InputError("Adam: moment lists differ in length");
    }
    cfg_ = cfg;
    steps_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
  }

  friend bool operator==(const Adam&, const Adam&) = default;

 private:
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

}  // namespace cdgan
