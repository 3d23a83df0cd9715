#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "atrium/data/volume.hpp"

namespace atrium::data {

/// Parameters of the synthetic left-atrium corpus.
struct PhantomSpec {
  std::int64_t n_volumes = 10;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t n_slices = 8;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  /// height and width >= 16, n_slices >= 1, n_volumes >= 1, noise_sigma >= 0.
  void validate() const;
};

/// Deterministic phantom volumes `phantom_000`, `phantom_001`, ...
///
/// Each volume holds a body ellipse of soft tissue, an adjacent
/// "neighbouring structure" ellipsoid, and the labelled blood pool: an
/// ellipsoid with one to three tubular vein stubs. The pool intensity sits
/// a little above the neighbour band so the boundary against it is low
/// contrast. Gaussian noise of `noise_sigma` is added last.
std::vector<Volume> generate_phantom(const PhantomSpec& spec);

/// generate_phantom + save_volume for each volume into `dir`.
std::vector<Volume> write_phantom(const PhantomSpec& spec, const std::filesystem::path& dir);

}  // namespace atrium::data
