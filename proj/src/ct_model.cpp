#include "epirecon/ct_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

namespace epirecon {

Index RadonGeometry::default_detectors(Index image_side) {
  return static_cast<Index>(std::ceil(std::numbers::sqrt2 * static_cast<double>(image_side))) + 1;
}

RadonGeometry RadonGeometry::with_defaults(Index image_side, Index num_angles) {
  RadonGeometry g;
  g.image_side = image_side;
  g.num_angles = num_angles;
  g.num_detectors = default_detectors(image_side);
  return g;
}

std::vector<double> RadonGeometry::angles() const {
  std::vector<double> out(num_angles);
  for (Index k = 0; k < num_angles; ++k)
    out[k] = std::numbers::pi * static_cast<double>(k) / static_cast<double>(num_angles);
  return out;
}

double RadonGeometry::detector_offset(Index k) const {
  return (static_cast<double>(k) - 0.5 * static_cast<double>(num_detectors - 1)) * detector_spacing;
}

void RadonGeometry::validate() const {
  require(image_side >= 1, "RadonGeometry: image_side must be positive");
  require(num_angles >= 1, "RadonGeometry: need at least one angle");
  require(num_detectors >= 1, "RadonGeometry: need at least one detector");
  require(pixel_width > 0.0 && std::isfinite(pixel_width), "RadonGeometry: bad pixel width");
  require(detector_spacing > 0.0 && std::isfinite(detector_spacing),
          "RadonGeometry: bad detector spacing");
}

namespace {

struct Ellipse {
  double x0, y0, a, b, phi_deg, intensity;
};

// Shepp & Logan (1974); the modified table rescales intensities for contrast.
constexpr std::array<Ellipse, 10> kSheppLogan{{
    {0.0, 0.0, 0.69, 0.92, 0.0, 2.0},
    {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98},
    {0.22, 0.0, 0.11, 0.31, -18.0, -0.02},
    {-0.22, 0.0, 0.16, 0.41, 18.0, -0.02},
    {0.0, 0.35, 0.21, 0.25, 0.0, 0.01},
    {0.0, 0.1, 0.046, 0.046, 0.0, 0.01},
    {0.0, -0.1, 0.046, 0.046, 0.0, 0.01},
    {-0.08, -0.605, 0.046, 0.023, 0.0, 0.01},
    {0.0, -0.605, 0.023, 0.023, 0.0, 0.01},
    {0.06, -0.605, 0.023, 0.046, 0.0, 0.01},
}};

constexpr std::array<double, 10> kModifiedIntensity{1.0, -0.8, -0.2, -0.2, 0.1,
                                                    0.1, 0.1,  0.1,  0.1,  0.1};

}  // namespace

Vector shepp_logan_phantom(Index n, PhantomKind kind) {
  require(n >= 8, "shepp_logan_phantom: image side must be at least 8");
  Vector img = Vector::Zero(n * n);
  const double nd = static_cast<double>(n);
  for (std::size_t e = 0; e < kSheppLogan.size(); ++e) {
    const Ellipse& el = kSheppLogan[e];
    const double intensity =
        kind == PhantomKind::standard ? el.intensity : kModifiedIntensity[e];
    const double phi = el.phi_deg * std::numbers::pi / 180.0;
    const double c = std::cos(phi), s = std::sin(phi);
    for (Index i = 0; i < n; ++i) {
      const double y = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / nd;
      for (Index j = 0; j < n; ++j) {
        const double x = (2.0 * static_cast<double>(j) + 1.0) / nd - 1.0;
        const double dx = x - el.x0, dy = y - el.y0;
        const double u = dx * c + dy * s;
        const double v = -dx * s + dy * c;
        if ((u * u) / (el.a * el.a) + (v * v) / (el.b * el.b) <= 1.0) img(i * n + j) += intensity;
      }
    }
  }
  // Overlapping ellipses can cancel to a rounding residue instead of 0.
  img = img.unaryExpr([](double v) { return std::abs(v) < 1e-12 ? 0.0 : v; });
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  if (hi > lo) img = ((img.array() - lo) * (255.0 / (hi - lo))).matrix();
  return img;
}

CsrMatrix<double> build_radon_matrix(const RadonGeometry& geometry) {
  geometry.validate();
  const Index n = geometry.image_side;
  const double pw = geometry.pixel_width;
  const double half = 0.5 * static_cast<double>(n) * pw;
  constexpr double kParallel = 1e-12;

  std::vector<CsrMatrix<double>::StorageIndex> offsets{0};
  std::vector<CsrMatrix<double>::StorageIndex> columns;
  std::vector<double> values;
  offsets.reserve(geometry.num_rays() + 1);

  std::vector<double> crossings;
  std::vector<std::pair<Index, double>> row;

  for (double theta : geometry.angles()) {
    const double c = std::cos(theta), s = std::sin(theta);
    for (Index k = 0; k < geometry.num_detectors; ++k) {
      const double off = geometry.detector_offset(k);
      const double px = -off * s, py = off * c;

      // Parametric slab clipping against [-half, half]^2.
      double t_in = -std::numeric_limits<double>::infinity();
      double t_out = std::numeric_limits<double>::infinity();
      bool hits = true;
      auto clip = [&](double p, double dir) {
        if (std::abs(dir) < kParallel) {
          if (p <= -half || p >= half) hits = false;
          return;
        }
        double t0 = (-half - p) / dir, t1 = (half - p) / dir;
        if (t0 > t1) std::swap(t0, t1);
        t_in = std::max(t_in, t0);
        t_out = std::min(t_out, t1);
      };
      clip(px, c);
      clip(py, s);

      row.clear();
      if (hits && t_out > t_in) {
        crossings.clear();
        crossings.push_back(t_in);
        crossings.push_back(t_out);
        if (std::abs(c) >= kParallel) {
          for (Index g = 1; g < n; ++g) {
            const double t = (-half + static_cast<double>(g) * pw - px) / c;
            if (t > t_in && t < t_out) crossings.push_back(t);
          }
        }
        if (std::abs(s) >= kParallel) {
          for (Index g = 1; g < n; ++g) {
            const double t = (-half + static_cast<double>(g) * pw - py) / s;
            if (t > t_in && t < t_out) crossings.push_back(t);
          }
        }
        std::sort(crossings.begin(), crossings.end());
        for (std::size_t q = 0; q + 1 < crossings.size(); ++q) {
          const double len = crossings[q + 1] - crossings[q];
          if (len <= 1e-12 * pw) continue;
          const double tm = 0.5 * (crossings[q] + crossings[q + 1]);
          const double x = px + tm * c, y = py + tm * s;
          const Index col = std::clamp<Index>(static_cast<Index>(std::floor((x + half) / pw)), 0, n - 1);
          const Index rw = std::clamp<Index>(static_cast<Index>(std::floor((half - y) / pw)), 0, n - 1);
          row.emplace_back(rw * n + col, len);
        }
        std::sort(row.begin(), row.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
      }
      for (std::size_t q = 0; q < row.size(); ++q) {
        if (!columns.empty() && static_cast<std::size_t>(offsets.back()) < columns.size() &&
            columns.back() == row[q].first) {
          values.back() += row[q].second;
        } else {
          columns.push_back(row[q].first);
          values.push_back(row[q].second);
        }
      }
      offsets.push_back(static_cast<CsrMatrix<double>::StorageIndex>(columns.size()));
    }
  }
  return CsrMatrix<double>(geometry.num_rays(), geometry.num_pixels(), std::move(offsets),
                           std::move(columns), std::move(values));
}

Observation simulate_observation(const CsrMatrix<double>& phi, const Vector& u_true, double sigma,
                                 std::uint64_t seed, double epsilon_floor) {
  require_same_size(phi.cols(), u_true.size(), "simulate_observation");
  require(sigma >= 0.0 && std::isfinite(sigma), "simulate_observation: sigma must be >= 0");
  Observation obs;
  obs.noise_sigma = sigma;
  obs.seed = seed;
  obs.data = matvec(phi, u_true);
  Rng rng(seed);
  NormalSampler normal;
  double noise_energy = 0.0;
  for (Index r = 0; r < obs.data.size(); ++r) {
    const double noise = sigma * normal(rng);
    obs.data(r) += noise;
    noise_energy += noise * noise;
  }
  obs.epsilon_bar = std::max(noise_energy, epsilon_floor);
  require(obs.epsilon_bar > 0.0,
          "simulate_observation: epsilon_bar must be positive (supply a floor for noiseless data)");
  return obs;
}

BlockPartition partition_for_blocks(const RadonGeometry& geometry, Index num_blocks,
                                    PartitionMode mode) {
  geometry.validate();
  if (mode == PartitionMode::rows) return uniform_partition(geometry.num_rays(), num_blocks);
  require(num_blocks >= 1, "partition_for_blocks: need L >= 1");
  require(num_blocks <= geometry.num_angles,
          "partition_for_blocks: angle mode needs L <= number of angles");
  const BlockPartition by_angle = uniform_partition(geometry.num_angles, num_blocks);
  BlockPartition p;
  for (const RowRange& r : by_angle.ranges)
    p.ranges.push_back({r.begin * geometry.num_detectors, r.end * geometry.num_detectors});
  return p;
}

void compute_block_norms(const CsrMatrix<double>& phi, BlockPartition& partition,
                         const PowerMethodOptions& opts) {
  partition.validate(phi.rows());
  partition.norms.clear();
  for (Index l = 0; l < partition.num_blocks(); ++l) {
    const CsrMatrix<double> block = block_view(phi, partition, l);
    partition.norms.push_back(operator_norm(as_linear_map(block), opts));
  }
}

}  // namespace epirecon
