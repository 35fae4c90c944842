#pragma once

// Reference computations for the tests. Everything here is written
// independently of the library code paths it is compared against.

#include "epirecon/ct_model.hpp"
#include "epirecon/solvers.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace epirecon::oracle {

inline Vector random_vector(Index n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = lo + (hi - lo) * uniform_unit(rng);
  return v;
}

/// Random sparse matrix with roughly the given fill; values in [-1, 1].
inline Matrix random_sparse_dense(Index rows, Index cols, double fill, Rng& rng) {
  Matrix m = Matrix::Zero(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      if (uniform_unit(rng) < fill) m(r, c) = 2.0 * uniform_unit(rng) - 1.0;
  return m;
}

/// Explicit forward-difference matrix with Neumann boundary.
inline Matrix gradient_matrix(Index h, Index w, GradientDirection dir) {
  Matrix D = Matrix::Zero(h * w, h * w);
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      const Index p = i * w + j;
      if (dir == GradientDirection::vertical && i + 1 < h) {
        D(p, p) = -1.0;
        D(p, p + w) = 1.0;
      }
      if (dir == GradientDirection::horizontal && j + 1 < w) {
        D(p, p) = -1.0;
        D(p, p + 1) = 1.0;
      }
    }
  }
  return D;
}

/// Positive root of 2 s^3 + (1 - 2 zeta) s - d by bisection on [0, d].
inline double cubic_root_bisection(double d, double zeta) {
  double lo = 0.0, hi = d;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (2.0 * mid * mid * mid + (1.0 - 2.0 * zeta) * mid - d < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Distance from (d, zeta) to {(s, eta) : eta >= s^2, s >= 0} in the plane,
/// by a dense grid over s in [0, d] followed by golden-section refinement.
inline double epigraph_distance_grid(double d, double zeta) {
  if (d * d <= zeta) return 0.0;
  auto h = [&](double s) { return (s - d) * (s - d) + (s * s - zeta) * (s * s - zeta); };
  const int grid = 2000;
  double best_s = 0.0, best = h(0.0);
  for (int k = 1; k <= grid; ++k) {
    const double s = d * k / grid;
    if (const double v = h(s); v < best) {
      best = v;
      best_s = s;
    }
  }
  double a = std::max(0.0, best_s - d / grid), b = std::min(d, best_s + d / grid);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double c = b - g * (b - a), e = a + g * (b - a);
    if (h(c) < h(e)) b = e; else a = c;
  }
  return std::sqrt(std::min(best, h(0.5 * (a + b))));
}

/// Epigraph projection through the bisection root.
inline std::pair<Vector, double> epigraph_projection_bisection(const Vector& y, double zeta,
                                                               const Vector& center) {
  const Vector off = y - center;
  const double d = off.norm();
  if (d * d <= zeta) return {y, zeta};
  if (d == 0.0) return {center, std::max(0.0, zeta)};
  const double s = cubic_root_bisection(d, zeta);
  return {center + (s / d) * off, std::max(s * s, zeta)};
}

/// Small TV-regularized CT instance used by several suites.
struct SmallInstance {
  ProblemSpec spec;
  Index side = 0;
  Vector u_true;
};

inline SmallInstance small_ct_instance(Index side, Index angles, Index blocks, double sigma,
                                       std::uint64_t seed) {
  SmallInstance out;
  out.side = side;
  const RadonGeometry g = RadonGeometry::with_defaults(side, angles);
  CsrMatrix<double> phi = build_radon_matrix(g);
  out.u_true = shepp_logan_phantom(side, PhantomKind::modified) / 255.0;
  const Observation obs = simulate_observation(phi, out.u_true, sigma, seed);
  out.spec = make_tv_problem(std::move(phi), obs.data, obs.epsilon_bar,
                             partition_for_blocks(g, blocks, PartitionMode::rows), side, side,
                             Box<double>{0.0, 1.0});
  return out;
}

/// min |u| s.t. (u - 4)^2 <= 1, u in [0, 10]; the minimizer is u = 3.
inline ProblemSpec toy_problem() {
  ProblemSpec spec;
  Regularizer reg;
  reg.op = as_linear_map<double>(Matrix::Identity(1, 1));
  reg.prox = l1_prox<double>();
  reg.norm = 1.0;
  spec.regularizers.push_back(reg);
  spec.fidelity.phi = CsrMatrix<double>::identity(1);
  spec.fidelity.partition = uniform_partition(1, 1);
  spec.fidelity.partition.norms = {1.0};
  spec.fidelity.data = Vector::Constant(1, 4.0);
  spec.fidelity.epsilon_bar = 1.0;
  spec.box = {0.0, 10.0};
  return spec;
}

/// Plain PDHG on the split problem over x = (u, eps) with dense operators
///   A_j x = Psi_j u,  A_{J+l} x = (Phi_l u, eps_l),
/// dual extrapolation y_bar = 2 y_new - y_old, and the conjugate proxes
/// evaluated directly (l-inf clamp for the l1 terms, bisection epigraph
/// projection for the fidelity epigraphs). Only valid for l1 regularizers.
class DensePdhgSplit {
 public:
  DensePdhgSplit(const ProblemSpec& spec, const Stepsizes& steps) : spec_(spec), steps_(steps) {
    n_ = spec.num_unknowns();
    L_ = spec.num_blocks();
    const Index dim = n_ + L_;
    for (const auto& reg : spec.regularizers) {
      Matrix psi(reg.op.rows, n_);
      for (Index c = 0; c < n_; ++c) psi.col(c) = reg.op.apply(Vector::Unit(n_, c));
      Matrix A = Matrix::Zero(reg.op.rows, dim);
      A.leftCols(n_) = psi;
      blocks_.push_back(A);
      rho_.push_back(steps.rho_psi);
    }
    const Matrix phi = spec.fidelity.phi.to_dense();
    for (Index l = 0; l < L_; ++l) {
      const RowRange r = spec.fidelity.partition.ranges[l];
      Matrix A = Matrix::Zero(r.size() + 1, dim);
      A.topLeftCorner(r.size(), n_) = phi.middleRows(r.begin, r.size());
      A(r.size(), n_ + l) = 1.0;
      blocks_.push_back(A);
      rho_.push_back(steps.rho_phi);
      centers_.push_back(spec.fidelity.data.segment(r.begin, r.size()));
    }
    x_ = Vector::Zero(dim);
    x_.tail(L_).setConstant(spec.fidelity.epsilon_bar / static_cast<double>(L_));
    for (const auto& A : blocks_) {
      y_.push_back(Vector::Zero(A.rows()));
      y_bar_.push_back(Vector::Zero(A.rows()));
    }
  }

  void step() {
    Vector grad = Vector::Zero(x_.size());
    for (std::size_t i = 0; i < blocks_.size(); ++i) grad += blocks_[i].transpose() * y_bar_[i];
    Vector x = x_ - steps_.tau * grad;
    for (Index k = 0; k < n_; ++k) x(k) = std::min(std::max(x(k), spec_.box.lower), spec_.box.upper);
    Vector eps = x.tail(L_);
    const double total = eps.sum();
    if (total > spec_.fidelity.epsilon_bar)
      eps.array() += (spec_.fidelity.epsilon_bar - total) / static_cast<double>(L_);
    x.tail(L_) = eps;
    x_ = x;

    const std::size_t J = spec_.regularizers.size();
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const double rho = rho_[i];
      const Vector tilde = y_[i] + rho * blocks_[i] * x_;
      Vector next(tilde.size());
      if (i < J) {
        next = tilde.cwiseMax(-1.0).cwiseMin(1.0);
      } else {
        const Index q = tilde.size() - 1;
        const auto [p, eta] = epigraph_projection_bisection(Vector(tilde.head(q) / rho),
                                                             tilde(q) / rho, centers_[i - J]);
        next.head(q) = tilde.head(q) - rho * p;
        next(q) = tilde(q) - rho * eta;
      }
      y_bar_[i] = 2.0 * next - y_[i];
      y_[i] = next;
    }
  }

  Vector u() const { return x_.head(n_); }
  Vector eps() const { return x_.tail(L_); }

 private:
  const ProblemSpec& spec_;
  Stepsizes steps_;
  Index n_ = 0, L_ = 0;
  std::vector<Matrix> blocks_;
  std::vector<double> rho_;
  std::vector<Vector> centers_;
  Vector x_;
  std::vector<Vector> y_, y_bar_;
};

}  // namespace epirecon::oracle
