#include "epirecon/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

namespace epirecon::cli {

namespace fs = std::filesystem;

int report_exception(std::ostream& err) {
  try {
    throw;
  } catch (const NumericalAbort& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kNumericalAbort;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

namespace {

std::string instance_fingerprint(const CsrMatrix<double>& phi, const Vector& data) {
  std::string bytes;
  for (auto v : phi.row_offsets()) bytes.append(reinterpret_cast<const char*>(&v), sizeof(v));
  for (auto v : phi.col_indices()) bytes.append(reinterpret_cast<const char*>(&v), sizeof(v));
  for (double v : phi.values()) bytes.append(reinterpret_cast<const char*>(&v), sizeof(v));
  bytes.append(reinterpret_cast<const char*>(data.data()), sizeof(double) * data.size());
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << io::fnv1a(bytes);
  return out.str();
}

const std::string& meta_get(const io::Metadata& meta, const std::string& key, const fs::path& path) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw IoError(path.string() + ": missing key '" + key + "'");
  return it->second;
}

double meta_double(const io::Metadata& meta, const std::string& key, const fs::path& path) {
  const std::string& s = meta_get(meta, key, path);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw IoError(path.string() + ": bad number for '" + key + "': " + s);
  }
}

Index meta_index(const io::Metadata& meta, const std::string& key, const fs::path& path) {
  const double v = meta_double(meta, key, path);
  if (v < 0 || v != std::floor(v)) throw IoError(path.string() + ": bad count for '" + key + "'");
  return static_cast<Index>(v);
}

const char* kind_name(SolverKind kind) {
  switch (kind) {
    case SolverKind::spdhg: return "spdhg";
    case SolverKind::pdhg: return "pdhg";
    case SolverKind::reference: return "reference";
  }
  return "?";
}

std::string format_optional(const std::optional<double>& v) {
  if (!v) return "";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return io::format_double(*v);
}

}  // namespace

Instance make_instance(const BuildOptions& opts) {
  require(opts.intensity_peak > 0.0, "build: intensity peak must be positive");
  Instance inst;
  Vector image;
  Index side = opts.image_side;
  if (opts.image) {
    const io::GrayImage img = io::read_pgm(*opts.image);
    require(img.height == img.width, "build: input image must be square");
    side = img.height;
    image = img.pixels * (opts.intensity_peak / 255.0);
  } else {
    image = shepp_logan_phantom(side, opts.phantom) * (opts.intensity_peak / 255.0);
  }
  inst.geometry = RadonGeometry::with_defaults(side, opts.num_angles);
  if (opts.num_detectors) inst.geometry.num_detectors = *opts.num_detectors;
  inst.geometry.pixel_width = opts.pixel_width;
  inst.geometry.detector_spacing = opts.pixel_width;
  inst.geometry.validate();

  inst.phi = build_radon_matrix(inst.geometry);
  inst.u_true = std::move(image);
  const double floor = opts.sigma == 0.0 ? 1e-6 * matvec(inst.phi, inst.u_true).squaredNorm() : 0.0;
  Observation obs = simulate_observation(inst.phi, inst.u_true, opts.sigma, opts.noise_seed, floor);
  inst.data = std::move(obs.data);
  inst.epsilon_bar = obs.epsilon_bar;
  inst.intensity_peak = opts.intensity_peak;
  inst.box = {0.0, opts.box_upper.value_or(opts.intensity_peak)};
  inst.box.validate();
  inst.instance_id = instance_fingerprint(inst.phi, inst.data);

  auto& m = inst.meta;
  m["format"] = "epirecon-instance-1";
  m["image_side"] = std::to_string(inst.geometry.image_side);
  m["num_angles"] = std::to_string(inst.geometry.num_angles);
  m["num_detectors"] = std::to_string(inst.geometry.num_detectors);
  m["pixel_width"] = io::format_double(inst.geometry.pixel_width);
  m["detector_spacing"] = io::format_double(inst.geometry.detector_spacing);
  m["rows"] = std::to_string(inst.phi.rows());
  m["cols"] = std::to_string(inst.phi.cols());
  m["nnz"] = std::to_string(inst.phi.nnz());
  m["noise_sigma"] = io::format_double(opts.sigma);
  m["noise_seed"] = std::to_string(opts.noise_seed);
  m["epsilon_bar"] = io::format_double(inst.epsilon_bar);
  m["intensity_peak"] = io::format_double(inst.intensity_peak);
  m["box_lower"] = io::format_double(inst.box.lower);
  m["box_upper"] = io::format_double(inst.box.upper);
  m["source"] = opts.image ? opts.image->string() : (opts.phantom == PhantomKind::standard
                                                         ? "shepp-logan"
                                                         : "modified-shepp-logan");
  m["instance_id"] = inst.instance_id;
  return inst;
}

void cmd_build(const BuildOptions& opts) {
  require(!opts.out_dir.empty(), "build: output directory required");
  const Instance inst = make_instance(opts);
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec) throw IoError(opts.out_dir.string() + ": cannot create directory: " + ec.message());
  io::write_csr(opts.out_dir / InstanceFiles::phi, inst.phi);
  io::write_vector(opts.out_dir / InstanceFiles::data, inst.data);
  io::write_vector(opts.out_dir / InstanceFiles::truth, inst.u_true);
  const Index n = inst.geometry.image_side;
  io::write_pgm(opts.out_dir / InstanceFiles::truth_image, inst.u_true * (255.0 / inst.intensity_peak),
                n, n);
  io::write_metadata(opts.out_dir / InstanceFiles::meta, inst.meta);
}

Instance load_instance(const fs::path& dir) {
  Instance inst;
  const fs::path meta_path = dir / InstanceFiles::meta;
  inst.meta = io::read_metadata(meta_path);
  const auto& m = inst.meta;
  inst.geometry.image_side = meta_index(m, "image_side", meta_path);
  inst.geometry.num_angles = meta_index(m, "num_angles", meta_path);
  inst.geometry.num_detectors = meta_index(m, "num_detectors", meta_path);
  inst.geometry.pixel_width = meta_double(m, "pixel_width", meta_path);
  inst.geometry.detector_spacing = meta_double(m, "detector_spacing", meta_path);
  inst.epsilon_bar = meta_double(m, "epsilon_bar", meta_path);
  inst.intensity_peak = meta_double(m, "intensity_peak", meta_path);
  inst.box = {meta_double(m, "box_lower", meta_path), meta_double(m, "box_upper", meta_path)};
  inst.instance_id = meta_get(m, "instance_id", meta_path);

  inst.phi = io::read_csr(dir / InstanceFiles::phi);
  inst.data = io::read_vector(dir / InstanceFiles::data);
  inst.u_true = io::read_vector(dir / InstanceFiles::truth);
  const Index n = inst.geometry.image_side;
  if (inst.phi.rows() != inst.geometry.num_rays() || inst.phi.cols() != n * n ||
      inst.data.size() != inst.phi.rows() || inst.u_true.size() != n * n) {
    throw IoError(dir.string() + ": instance files disagree with metadata shapes");
  }
  if (instance_fingerprint(inst.phi, inst.data) != inst.instance_id)
    throw IoError(dir.string() + ": instance_id does not match the stored matrix and data");
  return inst;
}

SolveSummary run_solver(const Instance& inst, const SolveOptions& opts,
                        const std::optional<Vector>& reference) {
  const Index n = inst.geometry.image_side;
  if (reference) require_same_size(n * n, reference->size(), "reference image");

  const bool randomized = opts.kind == SolverKind::spdhg;
  const BlockPartition partition =
      randomized ? partition_for_blocks(inst.geometry, opts.blocks, opts.partition)
                 : uniform_partition(inst.phi.rows(), 1);

  SolverConfig cfg;
  cfg.gamma = opts.gamma;
  cfg.epochs = opts.epochs.value_or(opts.kind == SolverKind::reference ? kReferenceIterations
                                                                       : kDefaultEpochs);
  cfg.seed = opts.seed;
  cfg.extrapolation = opts.extrapolation;
  cfg.record_every = opts.record_every;
  cfg.check_aggregates = opts.check_aggregates;

  const ProblemSpec spec =
      make_tv_problem(inst.phi, inst.data, inst.epsilon_bar, partition, n, n, inst.box);
  const GradientOperator dv{n, n, GradientDirection::vertical};
  const GradientOperator dh{n, n, GradientDirection::horizontal};

  SolveSummary summary;
  const auto start = std::chrono::steady_clock::now();
  auto on_epoch = [&](std::uint64_t epoch, const PrimalState& p) {
    ConvergenceRecord rec;
    rec.epoch = epoch;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.tv_objective = tv_objective(p.u, dv, dh);
    rec.constraint_error = constraint_error(p.u, inst.phi, inst.data, inst.epsilon_bar);
    if (reference) rec.primal_distance = primal_distance(p.u, *reference);
    rec.psnr_db = psnr(p.u, inst.u_true, inst.intensity_peak);
    summary.records.push_back(rec);
  };

  if (randomized) {
    SpdhgResult r = spdhg_epi_solve(spec, cfg, std::nullopt, on_epoch);
    summary.u = std::move(r.state.primal.u);
    summary.eps = std::move(r.state.primal.eps);
    summary.steps = r.steps;
  } else {
    PdhgResult r = pdhg_deterministic_solve(spec, cfg, std::nullopt, on_epoch);
    summary.u = std::move(r.primal.u);
    summary.eps = std::move(r.primal.eps);
    summary.steps = {r.tau, 0.0, r.sigma};
  }
  return summary;
}

SolveSummary cmd_solve(const SolveOptions& opts) {
  require(!opts.instance_dir.empty(), "solve: instance directory required");
  const Instance inst = load_instance(opts.instance_dir);
  std::optional<Vector> reference;
  if (opts.reference) reference = io::read_vector(*opts.reference);
  SolveSummary summary = run_solver(inst, opts, reference);

  const Index n = inst.geometry.image_side;
  if (opts.log) {
    write_log(*opts.log, summary.records);
    io::Metadata side;
    side["instance_id"] = inst.instance_id;
    side["kind"] = kind_name(opts.kind);
    side["blocks"] = std::to_string(opts.kind == SolverKind::spdhg ? opts.blocks : 1);
    side["gamma"] = io::format_double(opts.gamma);
    side["seed"] = std::to_string(opts.seed);
    side["extrapolation"] =
        opts.extrapolation == Extrapolation::algorithm1 ? "algorithm1" : "inverse_probability";
    side["tau"] = io::format_double(summary.steps.tau);
    side["rho_psi"] = io::format_double(summary.steps.rho_psi);
    side["rho_phi"] = io::format_double(summary.steps.rho_phi);
    fs::path meta_path = *opts.log;
    meta_path += ".meta";
    io::write_metadata(meta_path, side);
  }
  if (opts.out_state) io::write_vector(*opts.out_state, summary.u);
  if (opts.out_image)
    io::write_pgm(*opts.out_image, summary.u * (255.0 / inst.intensity_peak), n, n);
  return summary;
}

void write_log(const fs::path& path, const std::vector<ConvergenceRecord>& records) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + "," + io::format_double(r.wall_seconds) + "," +
           io::format_double(r.tv_objective) + "," + io::format_double(r.constraint_error) + "," +
           format_optional(r.primal_distance) + "," + format_optional(r.psnr_db) + "\n";
  }
  io::write_file_atomic(path, out);
}

std::vector<ConvergenceRecord> read_log(const fs::path& path) {
  std::istringstream in(io::read_file(path));
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty log");
  const auto header = split(line);
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw IoError(path.string() + ": missing column '" + name + "'");
  };
  const std::size_t c_epoch = column("epoch"), c_wall = column("wall_seconds"),
                    c_tv = column("tv_objective"), c_err = column("constraint_error"),
                    c_dist = column("primal_distance"), c_psnr = column("psnr_db");

  auto number = [&](const std::string& cell, std::size_t lineno) {
    if (cell == "inf") return std::numeric_limits<double>::infinity();
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used == cell.size()) return v;
    } catch (const std::logic_error&) {
    }
    throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
  };

  std::vector<ConvergenceRecord> records;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": wrong number of fields");
    ConvergenceRecord r;
    r.epoch = static_cast<std::uint64_t>(number(cells[c_epoch], lineno));
    r.wall_seconds = number(cells[c_wall], lineno);
    r.tv_objective = number(cells[c_tv], lineno);
    r.constraint_error = number(cells[c_err], lineno);
    if (!cells[c_dist].empty()) r.primal_distance = number(cells[c_dist], lineno);
    if (!cells[c_psnr].empty()) r.psnr_db = number(cells[c_psnr], lineno);
    if (!records.empty() && r.epoch < records.back().epoch)
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": epochs must not decrease");
    records.push_back(r);
  }
  if (records.empty()) throw IoError(path.string() + ": log has no rows");
  return records;
}

std::vector<CompareRow> cmd_compare(const CompareOptions& opts, std::ostream& out) {
  require(!opts.logs.empty(), "compare: at least one log required");
  require(opts.threshold >= 0.0, "compare: threshold must be non-negative");

  std::optional<std::string> instance;
  std::vector<CompareRow> rows;
  for (const auto& path : opts.logs) {
    fs::path meta_path = path;
    meta_path += ".meta";
    std::string label = path.filename().string();
    if (fs::exists(meta_path)) {
      const io::Metadata side = io::read_metadata(meta_path);
      const std::string& id = meta_get(side, "instance_id", meta_path);
      if (instance && *instance != id) {
        throw std::invalid_argument("compare: " + path.string() + " was produced on instance " + id +
                                    " but earlier logs used " + *instance);
      }
      instance = id;
      if (auto it = side.find("kind"); it != side.end()) {
        label += " [" + it->second;
        if (auto b = side.find("blocks"); b != side.end() && it->second == "spdhg")
          label += " L=" + b->second;
        label += "]";
      }
    }
    const auto records = read_log(path);
    CompareRow row;
    row.label = label;
    const ConvergenceRecord& last = records.back();
    row.final_epoch = last.epoch;
    row.final_tv = last.tv_objective;
    row.final_constraint_error = last.constraint_error;
    row.final_psnr = last.psnr_db;
    for (const auto& r : records) {
      if (r.primal_distance && *r.primal_distance <= opts.threshold) {
        row.first_epoch_below_threshold = r.epoch;
        break;
      }
    }
    rows.push_back(row);
  }

  std::ostringstream table;
  table << "log,final_epoch,tv_objective,constraint_error,psnr_db,first_epoch_primal_distance_le_"
        << io::format_double(opts.threshold) << ",delta_tv,delta_constraint_error,delta_psnr_db\n";
  const CompareRow& base = rows.front();
  for (const auto& r : rows) {
    std::string dpsnr;
    if (r.final_psnr && base.final_psnr) {
      const double d = *r.final_psnr - *base.final_psnr;
      dpsnr = std::isnan(d) ? "0" : format_optional(d);
    }
    table << r.label << "," << r.final_epoch << "," << io::format_double(r.final_tv) << ","
          << io::format_double(r.final_constraint_error) << "," << format_optional(r.final_psnr)
          << ","
          << (r.first_epoch_below_threshold ? std::to_string(*r.first_epoch_below_threshold) : "")
          << "," << io::format_double(r.final_tv - base.final_tv) << ","
          << io::format_double(r.final_constraint_error - base.final_constraint_error) << ","
          << dpsnr << "\n";
  }
  out << table.str();
  if (opts.out) io::write_file_atomic(*opts.out, table.str());
  return rows;
}

}  // namespace epirecon::cli
