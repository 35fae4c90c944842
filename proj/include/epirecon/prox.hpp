#pragma once

// Proximity operators and Euclidean projections used by the solvers.

#include "epirecon/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace epirecon {

/// Prox oracle of some f in Gamma_0: (x, gamma) -> prox_{gamma f}(x).
template <typename Scalar>
using ProxFn = std::function<VectorX<Scalar>(const VectorX<Scalar>&, Scalar)>;

template <typename Scalar>
struct Box {
  Scalar lower;
  Scalar upper;

  void validate() const {
    require(lower <= upper, "Box: lower bound exceeds upper bound");
  }
};

/// {eta in R^L : sum(eta) <= budget}
template <typename Scalar>
struct SumHalfspace {
  Index dimension;
  Scalar budget;

  void validate() const {
    require(dimension >= 1, "SumHalfspace: dimension must be at least 1");
    require(budget > Scalar(0), "SumHalfspace: budget must be positive");
  }
};

/// Epigraph {(x, eta) : ||x - center||^2 <= eta}.
template <typename Scalar>
struct EpigraphBall {
  VectorX<Scalar> center;

  Index dimension() const noexcept { return center.size(); }
};

template <typename Scalar>
struct EpigraphPoint {
  VectorX<Scalar> x;
  Scalar eta;
};

template <typename Derived>
VectorX<typename Derived::Scalar> soft_threshold(const Eigen::MatrixBase<Derived>& x,
                                                 typename Derived::Scalar gamma) {
  using Scalar = typename Derived::Scalar;
  require(gamma > Scalar(0), "soft_threshold: gamma must be positive");
  return x.unaryExpr([gamma](Scalar v) {
    const Scalar mag = std::max(std::abs(v) - gamma, Scalar(0));
    return v < Scalar(0) ? -mag : mag;
  });
}

template <typename Derived>
VectorX<typename Derived::Scalar> project_box(const Eigen::MatrixBase<Derived>& x,
                                              const Box<typename Derived::Scalar>& box) {
  box.validate();
  return x.cwiseMax(box.lower).cwiseMin(box.upper);
}

template <typename Derived>
VectorX<typename Derived::Scalar> project_sum_halfspace(
    const Eigen::MatrixBase<Derived>& eps, const SumHalfspace<typename Derived::Scalar>& H) {
  using Scalar = typename Derived::Scalar;
  H.validate();
  require_same_size(H.dimension, eps.size(), "project_sum_halfspace");
  const Scalar total = eps.sum();
  if (total <= H.budget) return eps;
  return eps.array() + (H.budget - total) / static_cast<Scalar>(H.dimension);
}

template <typename DerivedY, typename DerivedC>
VectorX<typename DerivedY::Scalar> project_l2_ball(const Eigen::MatrixBase<DerivedY>& y,
                                                   const Eigen::MatrixBase<DerivedC>& center,
                                                   typename DerivedY::Scalar radius) {
  using Scalar = typename DerivedY::Scalar;
  require_same_size(center.size(), y.size(), "project_l2_ball");
  require(radius >= Scalar(0), "project_l2_ball: radius must be non-negative");
  const VectorX<Scalar> offset = y - center;
  const Scalar dist = offset.norm();
  if (dist <= radius) return y;
  return center + (radius / dist) * offset;
}

/// Positive root of 2 s^3 + (1 - 2 zeta) s - d = 0 for d > 0.
///
/// This is the distance from the centre, along the ray through y, of the
/// projection of (y, zeta) onto the squared-distance epigraph when
/// d^2 > zeta. The polynomial is negative at 0 and has exactly one positive
/// root, which lies in (0, d] whenever d^2 >= zeta.
template <typename Scalar>
Scalar epigraph_cubic_root(Scalar d, Scalar zeta) {
  using std::abs;
  using std::cbrt;
  using std::sqrt;
  const Scalar c = zeta / Scalar(3) - Scalar(1) / Scalar(6);  // -p/3 of the depressed cubic
  const Scalar disc = d * d / Scalar(16) - c * c * c;
  Scalar root;
  if (disc >= Scalar(0)) {
    // Cardano. Stays real while the discriminant is non-negative.
    const Scalar a = cbrt(d / Scalar(4) + sqrt(disc));
    root = a == Scalar(0) ? Scalar(0) : a + c / a;
  } else {
    // Three real roots (c > 0); the k = 0 trigonometric root is the largest,
    // and the only positive one.
    const Scalar arg = std::clamp(d / (Scalar(4) * c * sqrt(c)), Scalar(-1), Scalar(1));
    root = Scalar(2) * sqrt(c) * std::cos(std::acos(arg) / Scalar(3));
  }

  // Newton polish, falling back to bisection when a step leaves the bracket.
  auto poly = [&](Scalar s) { return Scalar(2) * s * s * s + (Scalar(1) - Scalar(2) * zeta) * s - d; };
  Scalar lo = 0, hi = std::max(d, std::sqrt(std::max(zeta, Scalar(0))) + d);
  root = std::clamp(root, lo, hi);
  for (int it = 0; it < 60; ++it) {
    const Scalar f = poly(root);
    if (f == Scalar(0)) break;
    if (f < Scalar(0)) lo = root; else hi = root;
    const Scalar slope = Scalar(6) * root * root + Scalar(1) - Scalar(2) * zeta;
    Scalar next = slope > Scalar(0) ? root - f / slope : (lo + hi) / Scalar(2);
    if (!(next > lo && next < hi)) next = (lo + hi) / Scalar(2);
    if (abs(next - root) <= std::numeric_limits<Scalar>::epsilon() * std::max(Scalar(1), root)) {
      root = next;
      break;
    }
    root = next;
  }
  return root;
}

/// Projection of (y, zeta) onto {(x, eta) : ||x - z||^2 <= eta}.
///
/// Feasible inputs are returned unchanged. Otherwise the projected point is
/// z + alpha (y - z) with alpha = s / d, s the positive cubic root above, and
/// eta = max(s^2, zeta). For y == z with zeta < 0 the result is (z, 0).
template <typename DerivedY>
EpigraphPoint<typename DerivedY::Scalar> project_squared_distance_epigraph(
    const Eigen::MatrixBase<DerivedY>& y, typename DerivedY::Scalar zeta,
    const EpigraphBall<typename DerivedY::Scalar>& E) {
  using Scalar = typename DerivedY::Scalar;
  require(E.dimension() >= 1, "project_squared_distance_epigraph: empty centre");
  require_same_size(E.dimension(), y.size(), "project_squared_distance_epigraph");
  require(std::isfinite(zeta) && y.allFinite() && E.center.allFinite(),
          "project_squared_distance_epigraph: non-finite input");
  const VectorX<Scalar> offset = y - E.center;
  const Scalar d = offset.norm();
  if (d * d <= zeta) return {y, zeta};
  if (d == Scalar(0)) return {E.center, std::max(Scalar(0), zeta)};
  const Scalar s = epigraph_cubic_root(d, zeta);
  const Scalar alpha = s / d;
  return {alpha * y + (Scalar(1) - alpha) * E.center, std::max(s * s, zeta)};
}

/// prox_{gamma f*}(x) = x - gamma prox_{f/gamma}(x / gamma).
template <typename Scalar>
VectorX<Scalar> conjugate_prox(const ProxFn<Scalar>& prox_f, const VectorX<Scalar>& x,
                               Scalar gamma) {
  require(gamma > Scalar(0), "conjugate_prox: gamma must be positive");
  const VectorX<Scalar> scaled = x / gamma;
  return x - gamma * prox_f(scaled, Scalar(1) / gamma);
}

/// prox of lambda * ||.||_1.
template <typename Scalar>
ProxFn<Scalar> l1_prox(Scalar lambda = Scalar(1)) {
  return [lambda](const VectorX<Scalar>& x, Scalar gamma) -> VectorX<Scalar> {
    return soft_threshold(x, gamma * lambda);
  };
}

/// Projection onto the l-infinity ball of radius lambda (conjugate of lambda ||.||_1).
template <typename Scalar>
ProxFn<Scalar> linf_ball_projection(Scalar lambda = Scalar(1)) {
  return [lambda](const VectorX<Scalar>& x, Scalar) -> VectorX<Scalar> {
    return x.cwiseMax(-lambda).cwiseMin(lambda);
  };
}

}  // namespace epirecon
