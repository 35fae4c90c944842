#pragma once

// Parallel-beam CT test problem: phantom, Radon system matrix and noisy data.
//
// Geometry: an n x n pixel grid of side pixel_width, centred at the origin,
// row 0 at the top. At angle theta the rays travel along (cos t, sin t) and
// are offset along the detector axis (-sin t, cos t); at theta = 0 each ray is
// a horizontal line. Detector cells are centred on the origin with spacing
// detector_spacing. Matrix rows are ordered angle-major, detector-minor.

#include "epirecon/linops.hpp"

#include <cstdint>
#include <vector>

namespace epirecon {

struct RadonGeometry {
  Index image_side = 0;
  Index num_angles = 0;
  Index num_detectors = 0;
  double pixel_width = 1.0;
  double detector_spacing = 1.0;

  /// Enough unit-spaced detectors to cover the circumscribed circle: ceil(sqrt(2) n) + 1.
  static Index default_detectors(Index image_side);
  static RadonGeometry with_defaults(Index image_side, Index num_angles);

  Index num_rays() const noexcept { return num_angles * num_detectors; }
  Index num_pixels() const noexcept { return image_side * image_side; }
  /// Equispaced in [0, pi).
  std::vector<double> angles() const;
  /// Signed offset of detector k from the rotation centre.
  double detector_offset(Index k) const;
  void validate() const;
};

enum class PhantomKind { standard, modified };

/// Shepp-Logan ellipses sampled at pixel centres and rescaled to [0, 255].
Vector shepp_logan_phantom(Index n, PhantomKind kind = PhantomKind::standard);

/// Intersection lengths of every ray with every pixel (Siddon traversal).
CsrMatrix<double> build_radon_matrix(const RadonGeometry& geometry);

struct Observation {
  Vector data;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  double epsilon_bar = 0.0;
};

/// v = Phi u + n with n ~ N(0, sigma^2 I) from the seeded stream.
///
/// epsilon_bar = max(||n||^2, epsilon_floor). A non-positive result is
/// rejected, so noiseless data needs an explicit floor.
Observation simulate_observation(const CsrMatrix<double>& phi, const Vector& u_true, double sigma,
                                 std::uint64_t seed, double epsilon_floor = 0.0);

enum class PartitionMode { rows, angles };

/// Rows mode: contiguous near-equal row ranges. Angles mode: angles split into
/// L near-equal contiguous groups, each block holding the rays of its group.
BlockPartition partition_for_blocks(const RadonGeometry& geometry, Index num_blocks,
                                    PartitionMode mode);

/// Fills partition.norms with power-method estimates of each block.
void compute_block_norms(const CsrMatrix<double>& phi, BlockPartition& partition,
                         const PowerMethodOptions& opts = {});

}  // namespace epirecon
