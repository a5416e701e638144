// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cmath>
#include <concepts>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ergo/autodiff.hpp"
#include "ergo/errors.hpp"

namespace ergo {

/// Axis-aligned box, used as a rejection-sampling domain.  Registered
/// targets guarantee it encloses all but < 1e-6 of the mass.
struct Box {
  std::vector<double> lo, hi;
  std::size_t dim() const { return lo.size(); }
};

/// Analytic reference values where the density admits them.
struct GroundTruth {
  double neg_expected_log_target = 0.0;  // -E_pi[log pi*]
  std::optional<double> entropy;         // H(pi), nats
  std::optional<double> log_z;           // log of the normalizer
};

/**
 * A target density exposes the unnormalized log density and its
 * gradient for any scalar type that supports the elementary-operation
 * set (double, ad::Var, ad::Dual), so the same formula serves plain
 * simulation, the differentiable chain, and the detached training path.
 */
template <class T>
concept TargetModel = requires(const T& t, std::span<const double> x,
                               std::span<double> g) {
  { t.dim() } -> std::convertible_to<std::size_t>;
  { t.log_density(x) } -> std::convertible_to<double>;
  t.gradient(x, g);
};

namespace detail {

template <class S>
S smax(const S& a, const S& b) {
  using ergo::ad::gated_select;
  using ergo::ad::value_of;
  return gated_select(value_of(a) > value_of(b), a, b);
}

template <class S>
S logaddexp(const S& a, const S& b) {
  using std::exp;
  using std::log;
  using ergo::ad::exp;
  using ergo::ad::log;
  const S m = smax(a, b);
  return m + log(exp(a - m) + exp(b - m));
}

}  // namespace detail

/// Gaussian with zero mean and diagonal covariance, log pi* = -x'D^-1 x / 2.
class DiagonalGaussian {
 public:
  explicit DiagonalGaussian(std::vector<double> variance)
      : variance_(std::move(variance)) {
    const double d = static_cast<double>(variance_.size());
    double log_det = 0.0;
    for (double v : variance_) log_det += std::log(v);
    GroundTruth gt;
    gt.neg_expected_log_target = d / 2.0;
    gt.entropy = 0.5 * d * std::log(2.0 * std::numbers::pi * std::numbers::e) +
                 0.5 * log_det;
    gt.log_z = 0.5 * d * std::log(2.0 * std::numbers::pi) + 0.5 * log_det;
    truth_ = gt;
    Box box;
    for (double v : variance_) {
      const double half = 6.5 * std::sqrt(v);
      box.lo.push_back(-half);
      box.hi.push_back(half);
    }
    box_ = std::move(box);
  }

  std::size_t dim() const { return variance_.size(); }

  template <class S>
  S log_density(std::span<const S> x) const {
    S q = S(0.0);
    for (std::size_t i = 0; i < variance_.size(); ++i) {
      q = q + x[i] * x[i] * (0.5 / variance_[i]);
    }
    return -q;
  }

  template <class S>
  void gradient(std::span<const S> x, std::span<S> g) const {
    for (std::size_t i = 0; i < variance_.size(); ++i) {
      g[i] = x[i] * (-1.0 / variance_[i]);
    }
  }

  const std::optional<GroundTruth>& ground_truth() const { return truth_; }
  const std::optional<Box>& sampling_box() const { return box_; }
  const std::vector<double>& variance() const { return variance_; }

 private:
  std::vector<double> variance_;
  std::optional<GroundTruth> truth_;
  std::optional<Box> box_;
};

/// Bivariate zero-mean Gaussian with full covariance [[s11,s12],[s12,s22]].
class CorrelatedGaussian {
 public:
  CorrelatedGaussian(double s11, double s12, double s22)
      : s11_(s11), s12_(s12), s22_(s22) {
    const double det = s11 * s22 - s12 * s12;
    inv11_ = s22 / det;
    inv12_ = -s12 / det;
    inv22_ = s11 / det;
    GroundTruth gt;
    gt.neg_expected_log_target = 1.0;  // d/2 for any Gaussian quadratic form
    gt.entropy = 1.0 + std::log(2.0 * std::numbers::pi) + 0.5 * std::log(det);
    gt.log_z = std::log(2.0 * std::numbers::pi) + 0.5 * std::log(det);
    truth_ = gt;
    Box box;
    box.lo = {-6.5 * std::sqrt(s11), -6.5 * std::sqrt(s22)};
    box.hi = {6.5 * std::sqrt(s11), 6.5 * std::sqrt(s22)};
    box_ = std::move(box);
  }

  std::size_t dim() const { return 2; }

  template <class S>
  S log_density(std::span<const S> x) const {
    const S q = x[0] * x[0] * inv11_ + x[0] * x[1] * (2.0 * inv12_) +
                x[1] * x[1] * inv22_;
    return q * (-0.5);
  }

  template <class S>
  void gradient(std::span<const S> x, std::span<S> g) const {
    g[0] = x[0] * (-inv11_) + x[1] * (-inv12_);
    g[1] = x[0] * (-inv12_) + x[1] * (-inv22_);
  }

  const std::optional<GroundTruth>& ground_truth() const { return truth_; }
  const std::optional<Box>& sampling_box() const { return box_; }

  double s11() const { return s11_; }
  double s12() const { return s12_; }
  double s22() const { return s22_; }

 private:
  double s11_, s12_, s22_;
  double inv11_, inv12_, inv22_;
  std::optional<GroundTruth> truth_;
  std::optional<Box> box_;
};

/// Mixture of isotropic 2D Gaussians, log pi* = logsumexp_k(lw_k - |x-mu_k|^2/(2v_k)).
class GaussianMixture2D {
 public:
  struct Component {
    double mx, my;
    double variance;
    double log_weight;
  };

  GaussianMixture2D(std::vector<Component> components, Box box)
      : components_(std::move(components)), box_(std::move(box)) {}

  std::size_t dim() const { return 2; }

  template <class S>
  S log_density(std::span<const S> x) const {
    S acc = component_log<S>(x, components_[0]);
    for (std::size_t k = 1; k < components_.size(); ++k) {
      acc = detail::logaddexp(acc, component_log<S>(x, components_[k]));
    }
    return acc;
  }

  template <class S>
  void gradient(std::span<const S> x, std::span<S> g) const {
    using std::exp;
    using ergo::ad::exp;
    // softmax-weighted sum of the component gradients
    const S lp = log_density(x);
    S gx = S(0.0);
    S gy = S(0.0);
    for (const Component& c : components_) {
      const S w = exp(component_log<S>(x, c) - lp);
      gx = gx + w * (x[0] - c.mx) * (-1.0 / c.variance);
      gy = gy + w * (x[1] - c.my) * (-1.0 / c.variance);
    }
    g[0] = gx;
    g[1] = gy;
  }

  const std::optional<GroundTruth>& ground_truth() const { return truth_; }
  const std::optional<Box>& sampling_box() const { return box_; }
  const std::vector<Component>& components() const { return components_; }

 private:
  template <class S>
  S component_log(std::span<const S> x, const Component& c) const {
    const S dx = x[0] - c.mx;
    const S dy = x[1] - c.my;
    return (dx * dx + dy * dy) * (-0.5 / c.variance) + c.log_weight;
  }

  std::vector<Component> components_;
  std::optional<GroundTruth> truth_;  // none analytic; oracles supply it
  std::optional<Box> box_;
};

/// Annulus of radius R and radial width sigma, log pi* = -(|x|-R)^2/(2 sigma^2).
class Ring {
 public:
  Ring(double radius, double width) : radius_(radius), width_(width) {
    const double half = radius + 6.5 * width;
    box_ = Box{{-half, -half}, {half, half}};
  }

  std::size_t dim() const { return 2; }

  template <class S>
  S log_density(std::span<const S> x) const {
    using std::sqrt;
    using ergo::ad::sqrt;
    const S r = sqrt(x[0] * x[0] + x[1] * x[1]);
    const S d = r - radius_;
    return d * d * (-0.5 / (width_ * width_));
  }

  template <class S>
  void gradient(std::span<const S> x, std::span<S> g) const {
    using std::sqrt;
    using ergo::ad::sqrt;
    const S r = sqrt(x[0] * x[0] + x[1] * x[1]);
    const S f = (r - radius_) * (-1.0 / (width_ * width_)) / r;
    g[0] = f * x[0];
    g[1] = f * x[1];
  }

  const std::optional<GroundTruth>& ground_truth() const { return truth_; }
  const std::optional<Box>& sampling_box() const { return box_; }

 private:
  double radius_, width_;
  std::optional<GroundTruth> truth_;
  std::optional<Box> box_;
};

/// Two crescent-shaped modes: a ring carved by a bimodal term in x0.
class TwoMoons {
 public:
  TwoMoons(double radius, double radial_width, double lobe_width)
      : radius_(radius), rw_(radial_width), lw_(lobe_width) {
    const double half = radius + 6.5 * std::max(radial_width, lobe_width);
    box_ = Box{{-half, -half}, {half, half}};
  }

  std::size_t dim() const { return 2; }

  template <class S>
  S log_density(std::span<const S> x) const {
    using std::sqrt;
    using ergo::ad::sqrt;
    const S r = sqrt(x[0] * x[0] + x[1] * x[1]);
    const S ring = (r - radius_) * (r - radius_) * (-0.5 / (rw_ * rw_));
    const S right = (x[0] - radius_) * (x[0] - radius_) * (-0.5 / (lw_ * lw_));
    const S left = (x[0] + radius_) * (x[0] + radius_) * (-0.5 / (lw_ * lw_));
    return ring + detail::logaddexp(right, left);
  }

  template <class S>
  void gradient(std::span<const S> x, std::span<S> g) const {
    using std::exp;
    using std::sqrt;
    using ergo::ad::exp;
    using ergo::ad::sqrt;
    const S r = sqrt(x[0] * x[0] + x[1] * x[1]);
    const S ring_f = (r - radius_) * (-1.0 / (rw_ * rw_)) / r;
    const S right = (x[0] - radius_) * (x[0] - radius_) * (-0.5 / (lw_ * lw_));
    const S left = (x[0] + radius_) * (x[0] + radius_) * (-0.5 / (lw_ * lw_));
    const S lse = detail::logaddexp(right, left);
    const S w_right = exp(right - lse);
    const S w_left = exp(left - lse);
    g[0] = ring_f * x[0] + w_right * (x[0] - radius_) * (-1.0 / (lw_ * lw_)) +
           w_left * (x[0] + radius_) * (-1.0 / (lw_ * lw_));
    g[1] = ring_f * x[1];
  }

  const std::optional<GroundTruth>& ground_truth() const { return truth_; }
  const std::optional<Box>& sampling_box() const { return box_; }

 private:
  double radius_, rw_, lw_;
  std::optional<GroundTruth> truth_;
  std::optional<Box> box_;
};

using AnyTarget = std::variant<DiagonalGaussian, CorrelatedGaussian,
                               GaussianMixture2D, Ring, TwoMoons>;

/**
 * Registry of benchmark targets addressable by name.
 *
 *   corr-gauss  correlated bivariate Gaussian, cov [[2.0,1.5],[1.5,1.6]]
 *   std-gauss   standard bivariate Gaussian
 *   bench-a     two-component Gaussian mixture
 *   bench-b     anisotropic diagonal Gaussian
 *   bench-c     ring
 *   bench-d     two moons
 *   bench-e     strongly correlated Gaussian (rho = 0.9)
 *   bench-f     heavy-tailed Gaussian scale mixture
 */
inline AnyTarget make_target(std::string_view id) {
  if (id == "corr-gauss") return CorrelatedGaussian(2.0, 1.5, 1.6);
  if (id == "std-gauss") return DiagonalGaussian({1.0, 1.0});
  if (id == "bench-a") {
    const double lw = std::log(0.5);
    return GaussianMixture2D(
        {{-1.5, 0.0, 0.49, lw}, {1.5, 0.0, 0.49, lw}},
        Box{{-6.5, -5.0}, {6.5, 5.0}});
  }
  if (id == "bench-b") return DiagonalGaussian({2.5, 0.16});
  if (id == "bench-c") return Ring(2.0, 0.35);
  if (id == "bench-d") return TwoMoons(2.0, 0.4, 0.6);
  if (id == "bench-e") return CorrelatedGaussian(1.0, 0.9, 1.0);
  if (id == "bench-f") {
    return GaussianMixture2D(
        {{0.0, 0.0, 0.5, 0.0}, {0.0, 0.0, 9.0, std::log(0.2)}},
        Box{{-20.0, -20.0}, {20.0, 20.0}});
  }
  throw std::invalid_argument("unknown target id '" + std::string(id) + "'");
}

inline std::vector<std::string> registered_targets() {
  return {"corr-gauss", "std-gauss", "bench-a", "bench-b",
          "bench-c",    "bench-d",   "bench-e", "bench-f"};
}

inline std::size_t target_dim(const AnyTarget& t) {
  return std::visit([](const auto& v) { return v.dim(); }, t);
}

inline std::optional<GroundTruth> target_ground_truth(const AnyTarget& t) {
  return std::visit([](const auto& v) { return v.ground_truth(); }, t);
}

inline std::optional<Box> target_sampling_box(const AnyTarget& t) {
  return std::visit([](const auto& v) { return v.sampling_box(); }, t);
}

/// H(pi) in nats for targets with a closed form; throws otherwise.
inline double target_entropy_reference(std::string_view id) {
  const AnyTarget t = make_target(id);
  const auto gt = target_ground_truth(t);
  if (!gt || !gt->entropy) {
    throw EntropyUnavailable("no analytic entropy for target '" +
                             std::string(id) + "'");
  }
  return *gt->entropy;
}

/// Gradient of log pi* with a dimension check on the way in.
template <TargetModel Target>
std::vector<double> grad_log_density(const Target& target,
                                     std::span<const double> x) {
  if (x.size() != target.dim()) {
    throw std::invalid_argument("grad_log_density: point has dimension " +
                                std::to_string(x.size()) + ", target expects " +
                                std::to_string(target.dim()));
  }
  std::vector<double> g(x.size());
  target.gradient(x, std::span<double>(g));
  return g;
}

template <TargetModel Target>
double log_density(const Target& target, std::span<const double> x) {
  if (x.size() != target.dim()) {
    throw std::invalid_argument("log_density: dimension mismatch");
  }
  return target.log_density(x);
}

}  // namespace ergo
