#include "epirecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace epirecon {

double tv_objective(const Vector& u, const GradientOperator& vertical,
                    const GradientOperator& horizontal) {
  return apply_gradient(vertical, u).lpNorm<1>() + apply_gradient(horizontal, u).lpNorm<1>();
}

double constraint_error(const Vector& u, const CsrMatrix<double>& phi, const Vector& v,
                        double epsilon_bar) {
  require_same_size(phi.rows(), v.size(), "constraint_error");
  return std::abs(epsilon_bar - (matvec(phi, u) - v).squaredNorm());
}

double primal_distance(const Vector& u, const Vector& u_star) {
  require_same_size(u_star.size(), u.size(), "primal_distance");
  return (u - u_star).squaredNorm();
}

double psnr(const Vector& u, const Vector& u_ref, double peak) {
  require_same_size(u_ref.size(), u.size(), "psnr");
  require(peak > 0.0, "psnr: peak must be positive");
  const double err = (u - u_ref).squaredNorm();
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak * static_cast<double>(u.size()) / err);
}

bool FeasibilityReport::feasible(double tol) const {
  return sum_slack >= -tol && box_violation <= tol &&
         std::all_of(block_slack.begin(), block_slack.end(), [tol](double s) { return s >= -tol; });
}

FeasibilityReport feasibility_report(const Vector& u, const Vector& eps, const ProblemSpec& spec) {
  require_same_size(spec.num_unknowns(), u.size(), "feasibility_report u");
  require_same_size(spec.num_blocks(), eps.size(), "feasibility_report eps");
  FeasibilityReport report;
  const Vector residuals = block_residuals(spec, u);
  for (Index l = 0; l < eps.size(); ++l) report.block_slack.push_back(eps(l) - residuals(l));
  report.residual = residuals.sum();
  report.sum_slack = spec.fidelity.epsilon_bar - eps.sum();
  const double below = (spec.box.lower - u.array()).maxCoeff();
  const double above = (u.array() - spec.box.upper).maxCoeff();
  report.box_violation = std::max({0.0, below, above});
  return report;
}

}  // namespace epirecon
