// Acceptance gate: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.
//
//   acceptance [work_dir]

#include "epirecon/cli.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

using namespace epirecon;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  std::printf("%s  %-6s %s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1: epigraph projection against the nearest-point oracle.
void criterion_epigraph() {
  const auto start = Clock::now();
  Rng rng(2024);
  double worst_dist = 0.0, worst_member = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const double d = 10.0 * uniform_unit(rng);
    const double zeta = -5.0 + 15.0 * uniform_unit(rng);
    const Index dim = 1 + static_cast<Index>(uniform_below(rng, 4));
    const Vector center = oracle::random_vector(dim, rng, -2.0, 2.0);
    Vector dir = oracle::random_vector(dim, rng);
    if (dir.norm() == 0.0) dir(0) = 1.0;
    const Vector y = center + d * dir.normalized();
    const auto p = project_squared_distance_epigraph(y, zeta, EpigraphBall<double>{center});
    const double dist = std::sqrt((p.x - y).squaredNorm() + (p.eta - zeta) * (p.eta - zeta));
    const double d_actual = (y - center).norm();
    worst_dist = std::max(worst_dist, std::abs(dist - oracle::epigraph_distance_grid(d_actual, zeta)));
    worst_member = std::max(worst_member, (p.x - center).squaredNorm() - p.eta);
  }
  const double secs = seconds_since(start);
  report("1", worst_dist <= 1e-6 && worst_member <= 1e-10 && secs < 10.0,
         fmt("epigraph projection: max distance error %.2e (<= 1e-6), max membership violation "
             "%.2e (<= 1e-10), %.2f s (< 10 s)",
             worst_dist, worst_member, secs));
}

// 2: all-blocks iteration against an independent PDHG on the split problem.
void criterion_full_activation() {
  const auto start = Clock::now();
  const auto inst = oracle::small_ct_instance(8, 6, 2, 0.05, 0);
  const Stepsizes steps = stepsizes(inst.spec, 0.99);
  SpdhgState s = initial_spdhg_state(inst.spec);
  oracle::DensePdhgSplit ref(inst.spec, steps);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    spdhg_full_activation_step(inst.spec, steps, s);
    ref.step();
    worst = std::max({worst, (s.primal.u - ref.u()).cwiseAbs().maxCoeff(),
                      (s.primal.eps - ref.eps()).cwiseAbs().maxCoeff()});
  }
  const double secs = seconds_since(start);
  report("2", worst <= 1e-10 && secs < 5.0,
         fmt("full activation vs dense split PDHG, 8x8, J=2, L=2, 100 iterations: max iterate "
             "gap %.2e (<= 1e-10), %.2f s (< 5 s)",
             worst, secs));
}

// 3: min |u| s.t. (u - 4)^2 <= 1, u in [0, 10].
void criterion_toy() {
  const ProblemSpec toy = oracle::toy_problem();
  SolverConfig cfg;
  cfg.epochs = 10000;
  const double u_rand = spdhg_epi_solve(toy, cfg).state.primal.u(0);
  const double u_det = pdhg_deterministic_solve(toy, cfg).state.u(0);
  SolverConfig alt = cfg;
  alt.extrapolation = Extrapolation::inverse_probability;
  const double u_alt = spdhg_epi_solve(toy, alt).state.primal.u(0);
  std::printf("info   toy with (J, L) extrapolation weights: |u-3| = %.2e\n", std::abs(u_alt - 3.0));
  report("3", std::abs(u_rand - 3.0) <= 1e-3 && std::abs(u_det - 3.0) <= 1e-3,
         fmt("toy problem after 1e4 iterations: randomized (default weights) |u-3| = %.2e, "
             "deterministic |u-3| = %.2e (both <= 1e-3)",
             std::abs(u_rand - 3.0), std::abs(u_det - 3.0)));
}

struct DeskRuns {
  cli::Instance inst;
  Vector u_star;
  double tv_star = 0.0;
  std::vector<ConvergenceRecord> pdhg;
};

DeskRuns prepare_desk(const fs::path& work) {
  DeskRuns desk;
  cli::BuildOptions b;
  b.out_dir = work / "desk";
  desk.inst = cli::make_instance(b);

  const fs::path cache = work / ("u_star_" + desk.inst.instance_id + ".vec");
  if (fs::exists(cache)) {
    desk.u_star = io::read_vector(cache);
    std::printf("info   reference u_star loaded from %s\n", cache.string().c_str());
  } else {
    const auto start = Clock::now();
    cli::SolveOptions ref;
    ref.kind = cli::SolverKind::reference;
    ref.record_every = cli::kReferenceIterations;
    desk.u_star = cli::run_solver(desk.inst, ref, std::nullopt).u;
    io::write_vector(cache, desk.u_star);
    std::printf("info   reference u_star: %llu deterministic iterations in %.1f s\n",
                static_cast<unsigned long long>(cli::kReferenceIterations), seconds_since(start));
  }
  const Index n = desk.inst.geometry.image_side;
  desk.tv_star = tv_objective(desk.u_star, {n, n, GradientDirection::vertical},
                              {n, n, GradientDirection::horizontal});
  const double eps_bar = desk.inst.epsilon_bar;
  const double ref_err = constraint_error(desk.u_star, desk.inst.phi, desk.inst.data, eps_bar);
  std::printf("info   u_star: TV %.6g, relative constraint error %.2e, PSNR %.2f dB\n",
              desk.tv_star, ref_err / eps_bar,
              psnr(desk.u_star, desk.inst.u_true, desk.inst.intensity_peak));
  report("4-ref", ref_err <= 1e-3 * eps_bar,
         fmt("reference u_star constraint error %.2e * eps_bar (<= 1e-3 * eps_bar)", ref_err / eps_bar));

  cli::SolveOptions det;
  det.kind = cli::SolverKind::pdhg;
  desk.pdhg = cli::run_solver(desk.inst, det, desk.u_star).records;
  return desk;
}

void criterion_desk(const DeskRuns& desk, Index blocks, const std::string& id, bool check_speed) {
  cli::SolveOptions opts;
  opts.kind = cli::SolverKind::spdhg;
  opts.blocks = blocks;
  const auto rand = cli::run_solver(desk.inst, opts, desk.u_star).records;
  const auto& r200 = rand.at(200);
  const auto& d200 = desk.pdhg.at(200);
  const double eps_bar = desk.inst.epsilon_bar;

  const double rel_err = r200.constraint_error / eps_bar;
  report(id + "a", rel_err <= 1e-2,
         fmt("L=%lld: randomized relative constraint error at epoch 200 = %.4f (<= 0.01)",
             static_cast<long long>(blocks), rel_err));
  const double tv_gap = std::abs(r200.tv_objective - desk.tv_star) / desk.tv_star;
  report(id + "b", tv_gap <= 1e-2,
         fmt("L=%lld: randomized TV at epoch 200 = %.6g vs TV(u_star) = %.6g, relative gap %.4f "
             "(<= 0.01)",
             static_cast<long long>(blocks), r200.tv_objective, desk.tv_star, tv_gap));
  if (check_speed) {
    const double rd = *rand.at(50).primal_distance, dd = *desk.pdhg.at(50).primal_distance;
    report(id + "c", rd < dd,
           fmt("L=%lld: primal distance at epoch 50: randomized %.4g < deterministic %.4g",
               static_cast<long long>(blocks), rd, dd));
  }
  report(id + "d", *r200.psnr_db >= *d200.psnr_db,
         fmt("L=%lld: PSNR at epoch 200: randomized %.2f dB >= deterministic %.2f dB",
             static_cast<long long>(blocks), *r200.psnr_db, *d200.psnr_db));
}

// 6: invariant suites, condensed.
void criterion_prox_invariants() {
  Rng rng(61);
  double worst_idem = 0.0, worst_member = 0.0, worst_expand = 0.0;
  const Box<double> B{0.0, 1.0};
  const SumHalfspace<double> H{4, 1.0};
  for (int trial = 0; trial < 1000; ++trial) {
    const Vector x = oracle::random_vector(4, rng, -3.0, 3.0);
    const Vector y = oracle::random_vector(4, rng, -3.0, 3.0);
    const Vector c = oracle::random_vector(4, rng);
    const double zx = -5.0 + 15.0 * uniform_unit(rng), zy = -5.0 + 15.0 * uniform_unit(rng);
    const EpigraphBall<double> E{c};
    auto epi = [&](const Vector& v, double z) {
      const auto p = project_squared_distance_epigraph(v, z, E);
      Vector out(5);
      out << p.x, p.eta;
      return out;
    };
    std::vector<std::function<Vector(const Vector&)>> projections = {
        [&](const Vector& v) { return project_box(v, B); },
        [&](const Vector& v) { return project_sum_halfspace(v, H); },
        [&](const Vector& v) { return project_l2_ball(v, c, 0.7); },
        [&](const Vector& v) { return epi(v.head(4), v(4)); },
    };
    Vector xe(5), ye(5);
    xe << x, zx;
    ye << y, zy;
    for (std::size_t k = 0; k < projections.size(); ++k) {
      const bool lifted = k == 3;
      const Vector& a = lifted ? xe : x;
      const Vector& b = lifted ? ye : y;
      const Vector pa = projections[k](a), pb = projections[k](b);
      worst_idem = std::max(worst_idem, (projections[k](pa) - pa).norm());
      worst_expand = std::max(worst_expand, (pa - pb).norm() - (a - b).norm() * (1 + 1e-12));
    }
    const Vector pe = epi(x, zx);
    worst_member = std::max({worst_member, (pe.head(4) - c).squaredNorm() - pe(4),
                             project_sum_halfspace(x, H).sum() - 1.0,
                             (project_l2_ball(x, c, 0.7) - c).norm() - 0.7});
  }
  report("6-prox", worst_idem <= 1e-10 && worst_member <= 1e-10 && worst_expand <= 0.0,
         fmt("projections: idempotence gap %.1e, membership violation %.1e, expansion %.1e",
             worst_idem, worst_member, worst_expand));
}

void criterion_linops_invariants(const DeskRuns& desk) {
  Rng rng(62);
  const auto& phi = desk.inst.phi;
  const Index n = desk.inst.geometry.image_side;
  const std::vector<LinearMap<double>> maps = {
      as_linear_map(phi),
      as_linear_map<double>(GradientOperator{n, n, GradientDirection::vertical}),
      as_linear_map<double>(GradientOperator{n, n, GradientDirection::horizontal})};
  double worst = 0.0;
  for (const auto& A : maps) {
    for (int draw = 0; draw < 100; ++draw) {
      const Vector x = oracle::random_vector(A.cols, rng), y = oracle::random_vector(A.rows, rng);
      worst = std::max(worst, std::abs(A.apply(x).dot(y) - x.dot(A.apply_adjoint(y))) /
                                  (1 + x.norm() * y.norm()));
    }
  }
  bool complete = true;
  const Vector x = oracle::random_vector(phi.cols(), rng);
  const Vector full = matvec(phi, x);
  for (Index L : {1, 10, 50}) {
    const auto P = partition_for_blocks(desk.inst.geometry, L, PartitionMode::rows);
    Vector stacked(phi.rows());
    for (Index l = 0; l < L; ++l)
      stacked.segment(P.ranges[l].begin, P.ranges[l].size()) = matvec(block_view(phi, P, l), x);
    complete = complete && stacked == full;
  }
  report("6-linops", worst <= 1e-10 && complete,
         fmt("adjoint gap %.1e over 300 draws (<= 1e-10); block matvecs reassemble the full "
             "product exactly: %s",
             worst, complete ? "yes" : "no"));
}

void criterion_solver_invariants(const DeskRuns& desk) {
  const Index n = desk.inst.geometry.image_side;
  const ProblemSpec spec =
      make_tv_problem(desk.inst.phi, desk.inst.data, desk.inst.epsilon_bar,
                      partition_for_blocks(desk.inst.geometry, 10, PartitionMode::rows), n, n,
                      desk.inst.box);
  SolverConfig cfg;
  cfg.epochs = 20;
  cfg.check_aggregates = true;
  bool aggregates_ok = true;
  try {
    spdhg_epi_solve(spec, cfg);
  } catch (const std::logic_error& e) {
    aggregates_ok = false;
    std::printf("info   %s\n", e.what());
  }

  const auto small = oracle::small_ct_instance(8, 6, 2, 0.05, 5);
  SolverConfig long_run;
  long_run.epochs = 20000;
  long_run.seed = 1;
  const auto result = spdhg_epi_solve(small.spec, long_run);
  const auto& u = result.state.primal.u;
  const auto& eps = result.state.primal.eps;
  const double eps_bar = small.spec.fidelity.epsilon_bar;
  const FeasibilityReport rep = feasibility_report(u, eps, small.spec);
  double worst_block = 0.0;
  for (double s : rep.block_slack) worst_block = std::max(worst_block, -s);
  const bool feasible = rep.residual <= eps_bar * (1 + 1e-2) && rep.box_violation <= 1e-9 &&
                        eps.sum() <= eps_bar + 1e-8 && worst_block <= 1e-2 * eps_bar;
  report("6-solve", aggregates_ok && feasible,
         fmt("aggregates consistent over 20 desk epochs: %s; converged 8x8 run: residual/eps_bar "
             "%.5f (<= 1.01), box violation %.1e, sum(eps) - eps_bar %.1e, worst block "
             "shortfall %.1e * eps_bar",
             aggregates_ok ? "yes" : "no", rep.residual / eps_bar, rep.box_violation,
             eps.sum() - eps_bar, worst_block / eps_bar));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EPIRECON_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string strip_wall_time(const std::string& csv) {
  std::istringstream in(csv);
  std::string out;
  for (std::string line; std::getline(in, line);) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    out += line.substr(0, a) + line.substr(b) + "\n";
  }
  return out;
}

void criterion_cli_determinism(const fs::path& work) {
  const fs::path root = work / "cli";
  fs::remove_all(root);
  fs::create_directories(root);
  bool ok = true;
  for (const char* name : {"a", "b"})
    ok = ok && run_cli("build --size 24 --angles 12 --out " + (root / name).string()) == 0;
  for (const char* f : {cli::InstanceFiles::phi, cli::InstanceFiles::data, cli::InstanceFiles::truth,
                        cli::InstanceFiles::meta})
    ok = ok && io::read_file(root / "a" / f) == io::read_file(root / "b" / f);
  for (const char* name : {"x", "y"}) {
    ok = ok && run_cli("solve --instance " + (root / "a").string() + " --blocks 6 --epochs 30 " +
                       "--seed 5 --log " + (root / name).string() + ".csv --out-state " +
                       (root / name).string() + ".vec") == 0;
  }
  ok = ok && strip_wall_time(io::read_file(root / "x.csv")) ==
                 strip_wall_time(io::read_file(root / "y.csv")) &&
       io::read_file(root / "x.vec") == io::read_file(root / "y.vec");
  const cli::Instance loaded = cli::load_instance(root / "a");
  cli::BuildOptions b;
  b.out_dir = root / "a";
  b.image_side = 24;
  b.num_angles = 12;
  const cli::Instance mem = cli::make_instance(b);
  ok = ok && loaded.phi == mem.phi && loaded.data == mem.data &&
       loaded.epsilon_bar == mem.epsilon_bar;
  report("6-cli", ok,
         "seeded build and solve through the executable reproduce identical files and logs "
         "(wall time excluded); reload equals the in-memory instance");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "epirecon_acceptance";
  fs::create_directories(work);
  try {
    criterion_epigraph();
    criterion_full_activation();
    criterion_toy();

    const auto start = Clock::now();
    const DeskRuns desk = prepare_desk(work);
    criterion_desk(desk, 10, "4", true);
    criterion_desk(desk, 50, "5", false);
    const double secs = seconds_since(start);
    report("4-time", secs < 600.0,
           fmt("desk experiments (reference, deterministic, L=10, L=50) took %.1f s (< 600 s)", secs));

    criterion_prox_invariants();
    criterion_linops_invariants(desk);
    criterion_solver_invariants(desk);
    criterion_cli_determinism(work);
  } catch (const std::exception& e) {
    std::printf("FAIL  abort  %s\n", e.what());
    return 2;
  }
  std::printf("%d criterion line(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
