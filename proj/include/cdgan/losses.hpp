#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "cdgan/error.hpp"
#include "cdgan/graph.hpp"
#include "cdgan/networks.hpp"
#include "cdgan/ops.hpp"
#include "cdgan/tensor.hpp"

namespace cdgan {

// Probabilities are clamped to [kProbabilityEps, 1 - kProbabilityEps] before
// any logarithm.
inline constexpr double kProbabilityEps = 1e-7;

struct LossReport {
  double gan = 0.0;
  double dual_im = 0.0;
  double dual_di = 0.0;
  double dual_ds = 0.0;

  [[nodiscard]] bool all_finite() const noexcept {
    return std::isfinite(gan) && std::isfinite(dual_im) && std::isfinite(dual_di) && std::isfinite(dual_ds);
  }
};

namespace detail {

inline double clamped_log(double q) {
  return std::log(std::clamp(q, kProbabilityEps, 1.0 - kProbabilityEps));
}

template <typename T>
double mean_sq(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw InputError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  if (a.empty()) {
    throw InputError(std::string(what) + ": empty tensors");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace detail

// Batch mean of
//   log d_A(x_A) + log(1 - d_A(x_BA)) + log d_B(x_B) + log(1 - d_B(x_AB)).
// Discriminators ascend this value.
template <typename T>
double gan_loss(std::span<const T> dA_real, std::span<const T> dA_fake, std::span<const T> dB_real,
                std::span<const T> dB_fake) {
  const std::size_t k = dA_real.size();
  if (k == 0 || dA_fake.size() != k || dB_real.size() != k || dB_fake.size() != k) {
    throw InputError("gan_loss: all four probability batches must be non-empty and of equal size");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += detail::clamped_log(dA_real[i]) + detail::clamped_log(1.0 - static_cast<double>(dA_fake[i])) +
           detail::clamped_log(dB_real[i]) + detail::clamped_log(1.0 - static_cast<double>(dB_fake[i]));
  }
  return acc / static_cast<double>(k);
}

// Per-element mean squared error of each pair, summed over the two pairs.
template <typename T>
double dual_image_loss(const Tensor<T>& x_A, const Tensor<T>& x_hat_A, const Tensor<T>& x_B,
                       const Tensor<T>& x_hat_B) {
  return detail::mean_sq(x_A, x_hat_A, "dual_image_loss") + detail::mean_sq(x_B, x_hat_B, "dual_image_loss");
}

template <typename T>
double dual_di_loss(const Tensor<T>& di_A, const Tensor<T>& di_hat_A, const Tensor<T>& di_B,
                    const Tensor<T>& di_hat_B) {
  return detail::mean_sq(di_A, di_hat_A, "dual_di_loss") + detail::mean_sq(di_B, di_hat_B, "dual_di_loss");
}

// Asymmetric mode keeps only the B term.
template <typename T>
double dual_ds_loss(const Tensor<T>& ds_A, const Tensor<T>& ds_hat_A, const Tensor<T>& ds_B,
                    const Tensor<T>& ds_hat_B, Mode mode) {
  const double b_term = detail::mean_sq(ds_B, ds_hat_B, "dual_ds_loss");
  if (mode == Mode::AsymmetricAToB) {
    return b_term;
  }
  return detail::mean_sq(ds_A, ds_hat_A, "dual_ds_loss") + b_term;
}

// ---------------------------------------------------------------------------
// Graph forms used by the trainer.

template <typename T>
Var gan_objective(Graph<T>& g, Var dA_real, Var dA_fake, Var dB_real, Var dB_fake) {
  const T eps = static_cast<T>(kProbabilityEps);
  return ops::weighted_sum<T>(g, {{ops::mean_log_prob(g, dA_real, false, eps), T(1)},
                                  {ops::mean_log_prob(g, dA_fake, true, eps), T(1)},
                                  {ops::mean_log_prob(g, dB_real, false, eps), T(1)},
                                  {ops::mean_log_prob(g, dB_fake, true, eps), T(1)}});
}

// Objective the encoders/decoders minimize. Saturating: the fake-image terms
// of the GAN objective as written. Non-saturating: -(log d_A(x_BA) + log d_B(x_AB)).
template <typename T>
Var generator_adversarial(Graph<T>& g, Var dA_fake, Var dB_fake, bool saturating) {
  const T eps = static_cast<T>(kProbabilityEps);
  if (saturating) {
    return ops::weighted_sum<T>(
        g, {{ops::mean_log_prob(g, dA_fake, true, eps), T(1)}, {ops::mean_log_prob(g, dB_fake, true, eps), T(1)}});
  }
  return ops::weighted_sum<T>(
      g, {{ops::mean_log_prob(g, dA_fake, false, eps), T(-1)}, {ops::mean_log_prob(g, dB_fake, false, eps), T(-1)}});
}

template <typename T>
Var pair_reconstruction(Graph<T>& g, Var a, Var a_hat, Var b, Var b_hat) {
  return ops::weighted_sum<T>(
      g, {{ops::mean_squared_error(g, a, a_hat), T(1)}, {ops::mean_squared_error(g, b, b_hat), T(1)}});
}

template <typename T>
Var style_reconstruction(Graph<T>& g, Var ds_A, Var ds_hat_A, Var ds_B, Var ds_hat_B, Mode mode) {
  if (mode == Mode::AsymmetricAToB) {
    return ops::mean_squared_error(g, ds_B, ds_hat_B);
  }
  return pair_reconstruction(g, ds_A, ds_hat_A, ds_B, ds_hat_B);
}

}  // namespace cdgan
