#include "epirecon/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace epirecon {

void ProblemSpec::validate() const {
  require(!regularizers.empty(), "ProblemSpec: need at least one regularizer");
  const Index n = num_unknowns();
  for (const auto& r : regularizers) {
    require_same_size(n, r.op.cols, "ProblemSpec regularizer domain");
    require(static_cast<bool>(r.prox), "ProblemSpec: regularizer without prox");
    require(std::isfinite(r.norm) && r.norm >= 0.0, "ProblemSpec: bad regularizer norm");
  }
  fidelity.partition.validate(fidelity.phi.rows());
  require_same_size(fidelity.phi.rows(), fidelity.data.size(), "ProblemSpec data");
  require(fidelity.epsilon_bar > 0.0 && std::isfinite(fidelity.epsilon_bar),
          "ProblemSpec: epsilon_bar must be positive");
  require(fidelity.data.allFinite(), "ProblemSpec: non-finite data");
  box.validate();
}

double stepsize_norm(const LinearMap<double>& op, const PowerMethodOptions& opts) {
  return kNormSafetyFactor * operator_norm(op, opts);
}

ProblemSpec make_tv_problem(CsrMatrix<double> phi, Vector data, double epsilon_bar,
                            BlockPartition partition, Index height, Index width,
                            Box<double> box, const PowerMethodOptions& opts) {
  require_same_size(phi.cols(), height * width, "make_tv_problem image size");
  ProblemSpec spec;
  for (auto dir : {GradientDirection::vertical, GradientDirection::horizontal}) {
    Regularizer reg;
    reg.op = as_linear_map<double>(GradientOperator{height, width, dir});
    reg.prox = l1_prox<double>();
    reg.norm = stepsize_norm(reg.op, opts);
    spec.regularizers.push_back(std::move(reg));
  }
  spec.fidelity.phi = std::move(phi);
  spec.fidelity.data = std::move(data);
  spec.fidelity.epsilon_bar = epsilon_bar;
  partition.validate(spec.fidelity.phi.rows());
  partition.norms.clear();
  for (Index l = 0; l < partition.num_blocks(); ++l) {
    const CsrMatrix<double> block = block_view(spec.fidelity.phi, partition, l);
    partition.norms.push_back(stepsize_norm(as_linear_map(block), opts));
  }
  spec.fidelity.partition = std::move(partition);
  spec.box = box;
  spec.validate();
  return spec;
}

Stepsizes stepsizes(std::span<const double> psi_norms, std::span<const double> phi_norms,
                    double gamma) {
  require(gamma > 0.0 && gamma < 1.0, "stepsizes: gamma must lie in (0, 1)");
  require(!psi_norms.empty() && !phi_norms.empty(), "stepsizes: need J >= 1 and L >= 1");
  for (double n : psi_norms) require(n > 0.0 && std::isfinite(n), "stepsizes: zero regularizer norm");
  for (double n : phi_norms) require(n > 0.0 && std::isfinite(n), "stepsizes: zero fidelity block norm");
  const double psi_max = *std::max_element(psi_norms.begin(), psi_norms.end());
  const double phi_max = *std::max_element(phi_norms.begin(), phi_norms.end());
  const double blocks = static_cast<double>(std::max(psi_norms.size(), phi_norms.size()));
  return {gamma / (blocks * std::max(psi_max, phi_max)), gamma / psi_max, gamma / phi_max};
}

Stepsizes stepsizes(const ProblemSpec& spec, double gamma) {
  std::vector<double> psi;
  for (const auto& r : spec.regularizers) psi.push_back(r.norm);
  require(!spec.fidelity.partition.norms.empty(), "stepsizes: fidelity block norms not computed");
  return stepsizes(psi, spec.fidelity.partition.norms, gamma);
}

IndexPair sample_indices(Index num_regularizers, Index num_blocks, Rng& rng) {
  require(num_regularizers >= 1 && num_blocks >= 1, "sample_indices: need J, L >= 1");
  const auto j = static_cast<Index>(uniform_below(rng, static_cast<std::uint64_t>(num_regularizers)));
  const auto l = static_cast<Index>(uniform_below(rng, static_cast<std::uint64_t>(num_blocks)));
  return {j, l};
}

SpdhgState initial_spdhg_state(const ProblemSpec& spec) {
  const Index n = spec.num_unknowns();
  const Index L = spec.num_blocks();
  SpdhgState s;
  s.primal.u = Vector::Zero(n);
  s.primal.eps = Vector::Constant(L, spec.fidelity.epsilon_bar / static_cast<double>(L));
  for (const auto& r : spec.regularizers) s.dual.z.push_back(Vector::Zero(r.op.rows));
  for (const auto& range : spec.fidelity.partition.ranges) s.dual.w.push_back(Vector::Zero(range.size()));
  s.dual.zeta = Vector::Zero(L);
  s.dual.t = Vector::Zero(n);
  s.dual.t_bar = Vector::Zero(n);
  s.dual.xi = Vector::Zero(L);
  s.dual.xi_bar = Vector::Zero(L);
  return s;
}

namespace {

void check_finite(const Vector& v, std::uint64_t iteration, const char* name) {
  if (!v.allFinite()) throw NumericalAbort(iteration, name);
}

void check_state_shape(const ProblemSpec& spec, const SpdhgState& s) {
  const Index n = spec.num_unknowns(), L = spec.num_blocks();
  require_same_size(n, s.primal.u.size(), "SpdhgState u");
  require_same_size(L, s.primal.eps.size(), "SpdhgState eps");
  require(s.dual.z.size() == spec.regularizers.size(), "SpdhgState: one z per regularizer");
  require(static_cast<Index>(s.dual.w.size()) == L, "SpdhgState: one w per block");
  for (std::size_t j = 0; j < s.dual.z.size(); ++j)
    require_same_size(spec.regularizers[j].op.rows, s.dual.z[j].size(), "SpdhgState z");
  for (Index l = 0; l < L; ++l)
    require_same_size(spec.fidelity.partition.ranges[l].size(), s.dual.w[l].size(), "SpdhgState w");
  for (const Vector* v : {&s.dual.t, &s.dual.t_bar}) require_same_size(n, v->size(), "SpdhgState t");
  for (const Vector* v : {&s.dual.zeta, &s.dual.xi, &s.dual.xi_bar})
    require_same_size(L, v->size(), "SpdhgState zeta/xi");
}

// Block data and the per-block dual updates shared by the stochastic and the
// full-activation iterations.
class SpdhgKernel {
 public:
  SpdhgKernel(const ProblemSpec& spec, Stepsizes steps) : spec_(spec), steps_(steps) {
    const auto& fid = spec.fidelity;
    for (Index l = 0; l < spec.num_blocks(); ++l) {
      const RowRange r = fid.partition.ranges[l];
      phi_blocks_.push_back(block_view(fid.phi, fid.partition, l));
      centers_.push_back({fid.data.segment(r.begin, r.size())});
    }
    halfspace_ = {spec.num_blocks(), fid.epsilon_bar};
  }

  void primal_update(SpdhgState& s) const {
    s.primal.u = project_box(s.primal.u - steps_.tau * s.dual.t_bar, spec_.box);
    s.primal.eps = project_sum_halfspace(s.primal.eps - steps_.tau * s.dual.xi_bar, halfspace_);
  }

  /// Updates z_j and returns Psi_j^T (z_j_new - z_j_old).
  Vector regularizer_update(SpdhgState& s, Index j) const {
    const Regularizer& reg = spec_.regularizers[j];
    const double rho = steps_.rho_psi;
    Vector& z = s.dual.z[j];
    const Vector z_tilde = z + rho * reg.op.apply(s.primal.u);
    Vector z_new = conjugate_prox(reg.prox, z_tilde, rho);
    const Vector delta = z_new - z;
    z = std::move(z_new);
    return reg.op.apply_adjoint(delta);
  }

  struct FidelityDelta {
    Vector w_hat;
    double zeta_delta;
  };

  /// Updates (w_l, zeta_l) through the epigraph projection.
  FidelityDelta fidelity_update(SpdhgState& s, Index l, std::uint64_t iteration) const {
    const double rho = steps_.rho_phi;
    const CsrMatrix<double>& block = phi_blocks_[l];
    Vector& w = s.dual.w[l];
    double& zeta = s.dual.zeta(l);
    const Vector w_tilde = w + rho * matvec(block, s.primal.u);
    const double zeta_tilde = zeta + rho * s.primal.eps(l);
    if (!std::isfinite(zeta_tilde) || !w_tilde.allFinite()) throw NumericalAbort(iteration, "w");
    const EpigraphPoint<double> p =
        project_squared_distance_epigraph(Vector(w_tilde / rho), zeta_tilde / rho, centers_[l]);
    Vector w_new = w_tilde - rho * p.x;
    const double zeta_new = zeta_tilde - rho * p.eta;
    const Vector delta = w_new - w;
    FidelityDelta out{rmatvec(block, delta), zeta_new - zeta};
    w = std::move(w_new);
    zeta = zeta_new;
    return out;
  }

  const CsrMatrix<double>& phi_block(Index l) const { return phi_blocks_[l]; }

 private:
  const ProblemSpec& spec_;
  Stepsizes steps_;
  std::vector<CsrMatrix<double>> phi_blocks_;
  std::vector<EpigraphBall<double>> centers_;
  SumHalfspace<double> halfspace_{1, 1.0};
};

void check_aggregates(const ProblemSpec& spec, const SpdhgState& s, std::uint64_t iteration) {
  const auto [t, xi] = recompute_aggregates(spec, s.dual);
  const double t_err = (t - s.dual.t).norm();
  const double xi_err = (xi - s.dual.xi).norm();
  if (t_err > 1e-8 * (1.0 + s.dual.t.norm()) || xi_err > 1e-8 * (1.0 + s.dual.xi.norm())) {
    throw std::logic_error("aggregate drift at iteration " + std::to_string(iteration) +
                           ": |t err| = " + std::to_string(t_err) +
                           ", |xi err| = " + std::to_string(xi_err));
  }
}

bool should_record(std::uint64_t epoch, const SolverConfig& cfg) {
  return epoch % cfg.record_every == 0 || epoch == cfg.epochs;
}

void validate_config(const SolverConfig& cfg) {
  require(cfg.gamma > 0.0 && cfg.gamma < 1.0, "SolverConfig: gamma must lie in (0, 1)");
  require(cfg.record_every >= 1, "SolverConfig: record_every must be at least 1");
}

}  // namespace

std::pair<Vector, Vector> recompute_aggregates(const ProblemSpec& spec, const DualState& dual) {
  Vector t = Vector::Zero(spec.num_unknowns());
  for (std::size_t j = 0; j < spec.regularizers.size(); ++j)
    t += spec.regularizers[j].op.apply_adjoint(dual.z[j]);
  for (Index l = 0; l < spec.num_blocks(); ++l)
    t += rmatvec(block_view(spec.fidelity.phi, spec.fidelity.partition, l), dual.w[l]);
  return {t, dual.zeta};
}

SpdhgResult spdhg_epi_solve(const ProblemSpec& spec, const SolverConfig& cfg,
                            std::optional<SpdhgState> init, const EpochCallback& on_epoch) {
  spec.validate();
  validate_config(cfg);
  SpdhgResult result;
  result.steps = stepsizes(spec, cfg.gamma);
  result.state = init ? std::move(*init) : initial_spdhg_state(spec);
  SpdhgState& s = result.state;
  check_state_shape(spec, s);

  const Index J = spec.num_regularizers();
  const Index L = spec.num_blocks();
  const double c_reg = cfg.extrapolation == Extrapolation::algorithm1 ? 1.0 + J : J;
  const double c_fid = cfg.extrapolation == Extrapolation::algorithm1 ? 1.0 + L : L;

  const SpdhgKernel kernel(spec, result.steps);
  Rng rng(cfg.seed);
  if (on_epoch) on_epoch(0, s.primal);

  std::uint64_t iteration = 0;
  for (std::uint64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (Index inner = 0; inner < L; ++inner, ++iteration) {
      kernel.primal_update(s);
      const IndexPair pick = sample_indices(J, L, rng);
      const Vector z_hat = kernel.regularizer_update(s, pick.j);
      const auto [w_hat, zeta_delta] = kernel.fidelity_update(s, pick.l, iteration);

      s.dual.t += z_hat + w_hat;
      s.dual.t_bar = s.dual.t + c_reg * z_hat + c_fid * w_hat;
      s.dual.xi(pick.l) += zeta_delta;
      s.dual.xi_bar = s.dual.xi;
      s.dual.xi_bar(pick.l) += c_fid * zeta_delta;
    }
    check_finite(s.primal.u, iteration, "u");
    check_finite(s.primal.eps, iteration, "eps");
    check_finite(s.dual.t_bar, iteration, "t_bar");
    check_finite(s.dual.xi_bar, iteration, "xi_bar");
    if (cfg.check_aggregates) check_aggregates(spec, s, iteration);
    if (on_epoch && should_record(epoch, cfg)) on_epoch(epoch, s.primal);
  }
  result.iterations = iteration;
  return result;
}

void spdhg_full_activation_step(const ProblemSpec& spec, const Stepsizes& steps,
                                SpdhgState& state) {
  spec.validate();
  check_state_shape(spec, state);
  const SpdhgKernel kernel(spec, steps);
  kernel.primal_update(state);
  Vector dt = Vector::Zero(spec.num_unknowns());
  Vector dxi = Vector::Zero(spec.num_blocks());
  for (Index j = 0; j < spec.num_regularizers(); ++j) dt += kernel.regularizer_update(state, j);
  for (Index l = 0; l < spec.num_blocks(); ++l) {
    const auto [w_hat, zeta_delta] = kernel.fidelity_update(state, l, 0);
    dt += w_hat;
    dxi(l) = zeta_delta;
  }
  state.dual.t += dt;
  state.dual.t_bar = state.dual.t + dt;
  state.dual.xi += dxi;
  state.dual.xi_bar = state.dual.xi + dxi;
  check_finite(state.primal.u, 0, "u");
  check_finite(state.dual.t_bar, 0, "t_bar");
}

Vector block_residuals(const ProblemSpec& spec, const Vector& u) {
  const Vector r = matvec(spec.fidelity.phi, u) - spec.fidelity.data;
  Vector out(spec.num_blocks());
  for (Index l = 0; l < spec.num_blocks(); ++l) {
    const RowRange range = spec.fidelity.partition.ranges[l];
    out(l) = r.segment(range.begin, range.size()).squaredNorm();
  }
  return out;
}

PdhgState initial_pdhg_state(const ProblemSpec& spec) {
  PdhgState s;
  s.u = Vector::Zero(spec.num_unknowns());
  s.u_bar = s.u;
  for (const auto& r : spec.regularizers) s.y_reg.push_back(Vector::Zero(r.op.rows));
  s.y_fid = Vector::Zero(spec.fidelity.phi.rows());
  return s;
}

PdhgResult pdhg_deterministic_solve(const ProblemSpec& spec, const SolverConfig& cfg,
                                    std::optional<PdhgState> init, const EpochCallback& on_epoch) {
  spec.validate();
  validate_config(cfg);
  const auto& fid = spec.fidelity;

  std::vector<LinearMap<double>> parts;
  for (const auto& r : spec.regularizers) parts.push_back(r.op);
  parts.push_back(as_linear_map(fid.phi));
  PdhgResult result;
  result.operator_norm = stepsize_norm(vstack(std::move(parts)), cfg.norm_options);
  require(result.operator_norm > 0.0, "pdhg_deterministic_solve: zero operator");
  result.tau = cfg.gamma / result.operator_norm;
  result.sigma = cfg.gamma / result.operator_norm;
  const double tau = result.tau, sigma = result.sigma;
  const double radius = std::sqrt(fid.epsilon_bar);

  result.state = init ? std::move(*init) : initial_pdhg_state(spec);
  PdhgState& s = result.state;
  require_same_size(spec.num_unknowns(), s.u.size(), "PdhgState u");
  require_same_size(spec.num_unknowns(), s.u_bar.size(), "PdhgState u_bar");
  require(s.y_reg.size() == spec.regularizers.size(), "PdhgState: one dual per regularizer");
  require_same_size(fid.phi.rows(), s.y_fid.size(), "PdhgState y_fid");

  auto snapshot = [&]() { return PrimalState{s.u, block_residuals(spec, s.u)}; };
  if (on_epoch) on_epoch(0, snapshot());

  Vector phi_u(fid.phi.rows());
  Vector grad(spec.num_unknowns());
  for (std::uint64_t it = 1; it <= cfg.epochs; ++it) {
    for (std::size_t j = 0; j < spec.regularizers.size(); ++j) {
      const Regularizer& reg = spec.regularizers[j];
      const Vector y_tilde = s.y_reg[j] + sigma * reg.op.apply(s.u_bar);
      s.y_reg[j] = conjugate_prox(reg.prox, y_tilde, sigma);
    }
    matvec_into(fid.phi, s.u_bar, phi_u);
    const Vector y_tilde = s.y_fid + sigma * phi_u;
    s.y_fid = y_tilde - sigma * project_l2_ball(Vector(y_tilde / sigma), fid.data, radius);

    rmatvec_into(fid.phi, s.y_fid, grad);
    for (std::size_t j = 0; j < spec.regularizers.size(); ++j)
      grad += spec.regularizers[j].op.apply_adjoint(s.y_reg[j]);
    Vector u_next = project_box(s.u - tau * grad, spec.box);
    s.u_bar = 2.0 * u_next - s.u;
    s.u = std::move(u_next);

    check_finite(s.u, it, "u");
    check_finite(s.y_fid, it, "y_fid");
    if (on_epoch && should_record(it, cfg)) on_epoch(it, snapshot());
  }
  result.iterations = cfg.epochs;
  result.primal = snapshot();
  return result;
}

}  // namespace epirecon
