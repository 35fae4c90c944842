#pragma once

// Experiment driver behind the `epirecon` executable: build a CT instance,
// run a solver on it, compare convergence logs.

#include "epirecon/ct_model.hpp"
#include "epirecon/io.hpp"
#include "epirecon/metrics.hpp"
#include "epirecon/solvers.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace epirecon::cli {

enum ExitCode : int {
  kSuccess = 0,
  kConfigError = 2,
  kIoError = 3,
  kNumericalAbort = 4,
};

/// Maps the exception currently being handled to an exit code and prints it.
int report_exception(std::ostream& err);

inline constexpr const char* kCsvHeader =
    "epoch,wall_seconds,tv_objective,constraint_error,primal_distance,psnr_db";

struct BuildOptions {
  std::filesystem::path out_dir;
  Index image_side = 64;
  std::optional<std::filesystem::path> image;  // square 8-bit PGM instead of the phantom
  PhantomKind phantom = PhantomKind::standard;
  Index num_angles = 30;
  std::optional<Index> num_detectors;  // default ceil(sqrt(2) n) + 1
  double pixel_width = 1.0;
  double intensity_peak = 1.0;  // images are scaled to [0, intensity_peak]
  double sigma = 10.0 / 255.0;
  std::uint64_t noise_seed = 0;
  std::optional<double> box_upper;  // defaults to intensity_peak
};

/// Files written into out_dir.
struct InstanceFiles {
  static constexpr const char* phi = "phi.csr";
  static constexpr const char* data = "v.vec";
  static constexpr const char* truth = "u_true.vec";
  static constexpr const char* truth_image = "u_true.pgm";
  static constexpr const char* meta = "meta.txt";
};

struct Instance {
  RadonGeometry geometry;
  CsrMatrix<double> phi;
  Vector data;
  Vector u_true;
  double epsilon_bar = 0.0;
  double intensity_peak = 1.0;
  Box<double> box{0.0, 1.0};
  std::string instance_id;
  io::Metadata meta;
};

Instance make_instance(const BuildOptions& opts);
void cmd_build(const BuildOptions& opts);
Instance load_instance(const std::filesystem::path& dir);

enum class SolverKind { spdhg, pdhg, reference };

struct SolveOptions {
  std::filesystem::path instance_dir;
  SolverKind kind = SolverKind::spdhg;
  Index blocks = 10;
  PartitionMode partition = PartitionMode::rows;
  double gamma = 0.99;
  std::optional<std::uint64_t> epochs;  // 200, or 200000 for the reference run
  Extrapolation extrapolation = Extrapolation::algorithm1;
  std::uint64_t seed = 0;
  std::uint64_t record_every = 1;
  bool check_aggregates = false;
  std::optional<std::filesystem::path> log;
  std::optional<std::filesystem::path> out_image;
  std::optional<std::filesystem::path> out_state;
  std::optional<std::filesystem::path> reference;  // u_star for the primal distance
};

struct SolveSummary {
  std::vector<ConvergenceRecord> records;
  Vector u;
  Vector eps;
  Stepsizes steps;  // tau and sigma of the deterministic run are stored as tau and rho_phi
};

inline constexpr std::uint64_t kDefaultEpochs = 200;
inline constexpr std::uint64_t kReferenceIterations = 200000;

SolveSummary run_solver(const Instance& inst, const SolveOptions& opts,
                        const std::optional<Vector>& reference);
SolveSummary cmd_solve(const SolveOptions& opts);

void write_log(const std::filesystem::path& path, const std::vector<ConvergenceRecord>& records);
std::vector<ConvergenceRecord> read_log(const std::filesystem::path& path);

struct CompareOptions {
  std::vector<std::filesystem::path> logs;
  double threshold = 1e-2;  // primal-distance level whose first crossing is reported
  std::optional<std::filesystem::path> out;
};

struct CompareRow {
  std::string label;
  std::uint64_t final_epoch = 0;
  double final_tv = 0.0;
  double final_constraint_error = 0.0;
  std::optional<double> final_psnr;
  std::optional<std::uint64_t> first_epoch_below_threshold;
};

std::vector<CompareRow> cmd_compare(const CompareOptions& opts, std::ostream& out);

}  // namespace epirecon::cli
