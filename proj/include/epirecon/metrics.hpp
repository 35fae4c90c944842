#pragma once

#include "epirecon/linops.hpp"
#include "epirecon/solvers.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace epirecon {

struct ConvergenceRecord {
  std::uint64_t epoch = 0;
  double wall_seconds = 0.0;
  double tv_objective = 0.0;
  double constraint_error = 0.0;
  std::optional<double> primal_distance;
  std::optional<double> psnr_db;  // +inf for an exact match
};

/// ||D_v u||_1 + ||D_h u||_1
double tv_objective(const Vector& u, const GradientOperator& vertical,
                    const GradientOperator& horizontal);

/// | eps_bar - ||Phi u - v||^2 |
double constraint_error(const Vector& u, const CsrMatrix<double>& phi, const Vector& v,
                        double epsilon_bar);

double primal_distance(const Vector& u, const Vector& u_star);

/// 10 log10(peak^2 N / ||u - u_ref||^2), +inf when the inputs coincide.
double psnr(const Vector& u, const Vector& u_ref, double peak = 255.0);

struct FeasibilityReport {
  std::vector<double> block_slack;  // eps_l - ||Phi_l u - v_l||^2
  double sum_slack = 0.0;           // eps_bar - sum_l eps_l
  double box_violation = 0.0;       // largest distance of an entry outside the box
  double residual = 0.0;            // ||Phi u - v||^2

  bool feasible(double tol = 1e-10) const;
};

FeasibilityReport feasibility_report(const Vector& u, const Vector& eps, const ProblemSpec& spec);

}  // namespace epirecon
