// epirecon: build a CT instance, reconstruct it, compare convergence logs.
//
//   epirecon build   --out inst/
//   epirecon solve   --instance inst/ --kind reference --out-state inst/u_star.vec
//   epirecon solve   --instance inst/ --kind spdhg --blocks 10 --reference inst/u_star.vec --log spdhg.csv
//   epirecon compare --log pdhg.csv --log spdhg.csv
//
// Any option may also come from a key=value file given with --config;
// command-line flags take precedence.

#include "epirecon/cli.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <map>

namespace {

using namespace epirecon;

template <typename T>
std::optional<T> as_optional(bool set, const T& value) {
  return set ? std::optional<T>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained CT reconstruction with randomized epigraphical projection"};
  app.set_config("--config", "", "key=value configuration file");
  app.require_subcommand(1);

  // build
  cli::BuildOptions build;
  std::string build_out, image_path, phantom = "standard";
  Index detectors = 0;
  double box_upper = 0.0;
  auto* cmd_build = app.add_subcommand("build", "Generate phantom, system matrix and noisy data");
  cmd_build->add_option("--out", build_out, "Output directory")->required();
  cmd_build->add_option("--size", build.image_side, "Phantom side length n (image is n x n)");
  cmd_build->add_option("--image", image_path, "Square 8-bit PGM to use instead of the phantom");
  cmd_build->add_option("--phantom", phantom, "Phantom table")
      ->check(CLI::IsMember({"standard", "modified"}));
  cmd_build->add_option("--angles", build.num_angles, "Number of projection angles in [0, pi)");
  auto* det_opt = cmd_build->add_option("--detectors", detectors, "Detector cells per angle");
  cmd_build->add_option("--pixel-width", build.pixel_width, "Pixel side (also detector spacing)");
  cmd_build->add_option("--peak", build.intensity_peak, "Image intensity range is [0, peak]");
  cmd_build->add_option("--sigma", build.sigma, "Noise standard deviation on the [0, peak] scale");
  cmd_build->add_option("--noise-seed", build.noise_seed, "Seed of the noise stream");
  auto* box_opt = cmd_build->add_option("--box-upper", box_upper, "Upper range bound (default: peak)");

  // solve
  cli::SolveOptions solve;
  std::string instance_dir, log_path, image_out, state_out, reference_path;
  std::uint64_t epochs = 0;
  const std::map<std::string, cli::SolverKind> kinds{{"spdhg", cli::SolverKind::spdhg},
                                                      {"pdhg", cli::SolverKind::pdhg},
                                                      {"reference", cli::SolverKind::reference}};
  const std::map<std::string, PartitionMode> partitions{{"rows", PartitionMode::rows},
                                                        {"angles", PartitionMode::angles}};
  const std::map<std::string, Extrapolation> extrapolations{
      {"algorithm1", Extrapolation::algorithm1},
      {"inverse_probability", Extrapolation::inverse_probability}};
  auto* cmd_solve = app.add_subcommand("solve", "Run a solver on a built instance");
  cmd_solve->add_option("--instance", instance_dir, "Instance directory from 'build'")->required();
  cmd_solve->add_option("--kind", solve.kind, "spdhg | pdhg | reference")
      ->transform(CLI::CheckedTransformer(kinds, CLI::ignore_case));
  cmd_solve->add_option("--blocks,-L", solve.blocks, "Number of fidelity blocks L (spdhg)");
  cmd_solve->add_option("--partition", solve.partition, "rows | angles")
      ->transform(CLI::CheckedTransformer(partitions, CLI::ignore_case));
  cmd_solve->add_option("--gamma", solve.gamma, "Stepsize factor in (0, 1)");
  auto* epochs_opt = cmd_solve->add_option(
      "--epochs", epochs, "Epochs (default 200; reference runs default to 200000 iterations)");
  cmd_solve->add_option("--extrapolation", solve.extrapolation, "algorithm1 | inverse_probability")
      ->transform(CLI::CheckedTransformer(extrapolations, CLI::ignore_case));
  cmd_solve->add_option("--seed", solve.seed, "Seed of the block sampler");
  cmd_solve->add_option("--record-every", solve.record_every, "Log every k epochs");
  cmd_solve->add_flag("--check-aggregates", solve.check_aggregates,
                      "Recompute dual aggregates every epoch and abort on drift");
  cmd_solve->add_option("--log", log_path, "Convergence CSV");
  cmd_solve->add_option("--out-image", image_out, "Reconstruction as 8-bit PGM");
  cmd_solve->add_option("--out-state", state_out, "Reconstruction as VEC1");
  cmd_solve->add_option("--reference", reference_path, "u_star (VEC1) for the primal distance");

  // compare
  cli::CompareOptions compare;
  std::vector<std::string> logs;
  std::string compare_out;
  auto* cmd_compare = app.add_subcommand("compare", "Summarize convergence logs of one instance");
  cmd_compare->add_option("--log", logs, "Convergence CSV (repeatable)")->required();
  cmd_compare->add_option("--threshold", compare.threshold, "Primal-distance level to report");
  cmd_compare->add_option("--out", compare_out, "Write the summary CSV here too");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kSuccess : cli::kConfigError;
  }

  try {
    if (cmd_build->parsed()) {
      build.out_dir = build_out;
      if (!image_path.empty()) build.image = image_path;
      build.phantom = phantom == "modified" ? PhantomKind::modified : PhantomKind::standard;
      build.num_detectors = as_optional(det_opt->count() > 0, detectors);
      build.box_upper = as_optional(box_opt->count() > 0, box_upper);
      cli::cmd_build(build);
      std::cout << "wrote instance to " << build_out << "\n";
    } else if (cmd_solve->parsed()) {
      solve.instance_dir = instance_dir;
      solve.epochs = as_optional(epochs_opt->count() > 0, epochs);
      if (!log_path.empty()) solve.log = log_path;
      if (!image_out.empty()) solve.out_image = image_out;
      if (!state_out.empty()) solve.out_state = state_out;
      if (!reference_path.empty()) solve.reference = reference_path;
      const auto summary = cli::cmd_solve(solve);
      const auto& last = summary.records.back();
      std::cout << "epoch " << last.epoch << ": tv=" << last.tv_objective
                << " constraint_error=" << last.constraint_error;
      if (last.psnr_db) std::cout << " psnr=" << *last.psnr_db << " dB";
      std::cout << "\n";
    } else if (cmd_compare->parsed()) {
      for (const auto& l : logs) compare.logs.emplace_back(l);
      if (!compare_out.empty()) compare.out = compare_out;
      cli::cmd_compare(compare, std::cout);
    }
  } catch (...) {
    return cli::report_exception(std::cerr);
  }
  return cli::kSuccess;
}
