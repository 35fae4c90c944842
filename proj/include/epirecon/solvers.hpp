#pragma once

// Solvers for
//
//   min_u  sum_j R_j(Psi_j u)   s.t.  ||Phi u - v||^2 <= eps_bar,  u in [lo, hi]^N.
//
// The randomized solver splits the fidelity constraint into per-block
// epigraph constraints ||Phi_l u - v_l||^2 <= eps_l with sum_l eps_l <= eps_bar
// and runs stochastic PDHG over the variable (u, eps), touching one
// regularizer block j and one fidelity block l per iteration. The
// deterministic baseline is plain PDHG on the original constraint.

#include "epirecon/linops.hpp"
#include "epirecon/prox.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace epirecon {

/// Norm estimates feeding a stepsize rule are inflated by this factor.
inline constexpr double kNormSafetyFactor = 1.01;

struct Regularizer {
  LinearMap<double> op;
  ProxFn<double> prox;  // prox_{gamma R}
  double norm = 0.0;    // inflated estimate of ||op||
};

struct Fidelity {
  CsrMatrix<double> phi;
  BlockPartition partition;  // norms are inflated estimates of ||Phi_l||
  Vector data;
  double epsilon_bar = 0.0;
};

struct ProblemSpec {
  std::vector<Regularizer> regularizers;
  Fidelity fidelity;
  Box<double> box{0.0, 255.0};

  Index num_unknowns() const noexcept { return fidelity.phi.cols(); }
  Index num_regularizers() const noexcept { return static_cast<Index>(regularizers.size()); }
  Index num_blocks() const noexcept { return fidelity.partition.num_blocks(); }
  void validate() const;
};

/// kNormSafetyFactor times the power-method estimate.
double stepsize_norm(const LinearMap<double>& op, const PowerMethodOptions& opts = {});

/// Anisotropic TV (vertical and horizontal differences, l1 prox) with the given
/// fidelity. Fills every norm the stepsize rules need.
ProblemSpec make_tv_problem(CsrMatrix<double> phi, Vector data, double epsilon_bar,
                            BlockPartition partition, Index height, Index width,
                            Box<double> box = {0.0, 255.0}, const PowerMethodOptions& opts = {});

struct Stepsizes {
  double tau = 0.0;
  double rho_psi = 0.0;
  double rho_phi = 0.0;
};

/// rho_psi = gamma / max_j ||Psi_j||, rho_phi = gamma / max_l ||Phi_l||,
/// tau = gamma / (max(J, L) * max(all norms)).
Stepsizes stepsizes(std::span<const double> psi_norms, std::span<const double> phi_norms,
                    double gamma);
Stepsizes stepsizes(const ProblemSpec& spec, double gamma);

struct IndexPair {
  Index j = 0;
  Index l = 0;
  friend bool operator==(const IndexPair&, const IndexPair&) = default;
};

/// Independent uniform draws of a regularizer block and a fidelity block.
IndexPair sample_indices(Index num_regularizers, Index num_blocks, Rng& rng);

struct PrimalState {
  Vector u;
  Vector eps;
};

struct DualState {
  std::vector<Vector> z;  // one per regularizer
  std::vector<Vector> w;  // one per fidelity block
  Vector zeta;
  Vector t;      // sum_j Psi_j^T z_j + sum_l Phi_l^T w_l
  Vector t_bar;
  Vector xi;     // equals zeta, kept as a separate aggregate
  Vector xi_bar;
};

struct SpdhgState {
  PrimalState primal;
  DualState dual;
};

/// u = 0, eps_l = eps_bar / L, every dual and aggregate zero.
SpdhgState initial_spdhg_state(const ProblemSpec& spec);

/// Dual extrapolation weights (c_J, c_L) in t_bar = t + c_J dz + c_L dw.
enum class Extrapolation {
  algorithm1,           // (1 + J, 1 + L)
  inverse_probability,  // (J, L)
};

struct SolverConfig {
  double gamma = 0.99;
  std::uint64_t epochs = 200;
  std::uint64_t seed = 0;
  Extrapolation extrapolation = Extrapolation::algorithm1;
  std::uint64_t record_every = 1;
  bool check_aggregates = false;
  PowerMethodOptions norm_options{};
};

/// Called with the epoch number and a read-only view of the current primal
/// iterate at epoch 0, every record_every epochs, and at the last epoch.
using EpochCallback = std::function<void(std::uint64_t epoch, const PrimalState& primal)>;

struct SpdhgResult {
  SpdhgState state;
  Stepsizes steps;
  std::uint64_t iterations = 0;
};

/// Randomized epigraphical SPDHG. One epoch is L iterations.
SpdhgResult spdhg_epi_solve(const ProblemSpec& spec, const SolverConfig& cfg,
                            std::optional<SpdhgState> init = std::nullopt,
                            const EpochCallback& on_epoch = {});

/// One SPDHG iteration with every block selected and unit extrapolation.
void spdhg_full_activation_step(const ProblemSpec& spec, const Stepsizes& steps,
                                SpdhgState& state);

/// t and xi recomputed from the duals, for checking the incremental aggregates.
std::pair<Vector, Vector> recompute_aggregates(const ProblemSpec& spec, const DualState& dual);

struct PdhgState {
  Vector u;
  Vector u_bar;
  std::vector<Vector> y_reg;
  Vector y_fid;
};

PdhgState initial_pdhg_state(const ProblemSpec& spec);

struct PdhgResult {
  PdhgState state;
  PrimalState primal;  // eps holds the per-block residuals ||Phi_l u - v_l||^2
  double tau = 0.0;
  double sigma = 0.0;
  double operator_norm = 0.0;  // inflated estimate of ||(Psi_1; ...; Psi_J; Phi)||
  std::uint64_t iterations = 0;
};

/// Deterministic PDHG on the unsplit constraint. One epoch is one iteration.
PdhgResult pdhg_deterministic_solve(const ProblemSpec& spec, const SolverConfig& cfg,
                                    std::optional<PdhgState> init = std::nullopt,
                                    const EpochCallback& on_epoch = {});

/// Per-block squared residuals ||Phi_l u - v_l||^2.
Vector block_residuals(const ProblemSpec& spec, const Vector& u);

}  // namespace epirecon
