#include "atrium/data/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <c10/util/StringUtil.h>

#include "atrium/common/random.hpp"
#include "atrium/data/nifti.hpp"

namespace atrium::data {

namespace {

constexpr float kBodyIntensity = 0.35f;
constexpr std::int64_t kMinSide = 16;

// Portable draws straight from the engine bits (std distributions are
// implementation-defined, which would make phantoms platform dependent).
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1)); }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct Ellipsoid {
  double r, c, s;     // centre
  double ar, ac, as;  // semi-axes (pixels, pixels, slices)
  bool contains(double pr, double pc, double ps) const {
    const double dr = (pr - r) / ar, dc = (pc - c) / ac, ds = (ps - s) / as;
    return dr * dr + dc * dc + ds * ds <= 1.0;
  }
};

// In-plane tube leaving the pool centre along `angle`, spanning a slab of slices.
struct Tube {
  double r, c, s;
  double dir_r, dir_c;
  double reach, radius, half_depth;
  bool contains(double pr, double pc, double ps) const {
    if (std::abs(ps - s) > half_depth) return false;
    const double vr = pr - r, vc = pc - c;
    const double t = vr * dir_r + vc * dir_c;
    if (t < 0.0 || t > reach) return false;
    const double pr_perp = vr - t * dir_r, pc_perp = vc - t * dir_c;
    return pr_perp * pr_perp + pc_perp * pc_perp <= radius * radius;
  }
};

Volume make_volume(const PhantomSpec& spec, std::int64_t index) {
  Draw draw(mix_seed(spec.seed, static_cast<std::uint64_t>(index)));
  const double H = static_cast<double>(spec.height);
  const double W = static_cast<double>(spec.width);
  const double S = static_cast<double>(spec.n_slices);
  const double side = std::min(H, W);

  Ellipsoid pool{H * draw.uniform(0.40, 0.50), W * draw.uniform(0.50, 0.60),
                 (S - 1.0) / 2.0 + draw.uniform(-0.5, 0.5),
                 H * draw.uniform(0.12, 0.18), W * draw.uniform(0.12, 0.18),
                 std::max(0.75, S * draw.uniform(0.30, 0.45))};

  // Neighbouring structure: a vertical column touching the pool on one side.
  const double neighbour_angle = draw.uniform(0.0, 2.0 * std::numbers::pi);
  const double neighbour_radius = side * draw.uniform(0.08, 0.12);
  const double pool_extent = 0.5 * (pool.ar + pool.ac);
  const double gap = pool_extent + neighbour_radius * 0.9;
  Ellipsoid neighbour{pool.r + gap * std::sin(neighbour_angle), pool.c + gap * std::cos(neighbour_angle),
                      pool.s, neighbour_radius, neighbour_radius, S * 10.0};
  const float neighbour_intensity = static_cast<float>(0.65 + draw.uniform(-0.03, 0.03));
  const float pool_intensity = neighbour_intensity + static_cast<float>(draw.uniform(0.12, 0.20));

  std::vector<Tube> veins;
  const int n_veins = draw.integer(1, 3);
  for (int v = 0; v < n_veins; ++v) {
    // Keep veins away from the neighbour so they stay distinguishable.
    const double angle = neighbour_angle + std::numbers::pi / 3.0 +
                         draw.uniform(0.0, 4.0 * std::numbers::pi / 3.0);
    veins.push_back(Tube{pool.r, pool.c, pool.s, std::sin(angle), std::cos(angle),
                         pool_extent + side * draw.uniform(0.08, 0.15), side * draw.uniform(0.03, 0.05),
                         std::max(0.5, pool.as * 0.6)});
  }

  auto voxels = torch::zeros({spec.n_slices, spec.height, spec.width}, torch::kFloat32);
  auto labels = torch::zeros({spec.n_slices, spec.height, spec.width}, torch::kUInt8);
  auto vox = voxels.accessor<float, 3>();
  auto lab = labels.accessor<std::uint8_t, 3>();
  const double body_r = 0.46 * H, body_c = 0.46 * W;
  for (std::int64_t k = 0; k < spec.n_slices; ++k) {
    for (std::int64_t i = 0; i < spec.height; ++i) {
      for (std::int64_t j = 0; j < spec.width; ++j) {
        const double r = static_cast<double>(i), c = static_cast<double>(j), s = static_cast<double>(k);
        const double br = (r - (H - 1) / 2) / body_r, bc = (c - (W - 1) / 2) / body_c;
        float value = br * br + bc * bc <= 1.0 ? kBodyIntensity : 0.0f;
        if (neighbour.contains(r, c, s)) value = neighbour_intensity;
        bool in_pool = pool.contains(r, c, s);
        for (const auto& tube : veins) in_pool = in_pool || tube.contains(r, c, s);
        if (in_pool) {
          value = pool_intensity;
          lab[k][i][j] = 1;
        }
        vox[k][i][j] = value;
      }
    }
  }
  if (spec.noise_sigma > 0.0) {
    auto* data = voxels.data_ptr<float>();
    for (std::int64_t n = 0; n < voxels.numel(); ++n) {
      data[n] += static_cast<float>(spec.noise_sigma * draw.normal());
    }
  }
  char id[32];
  std::snprintf(id, sizeof(id), "phantom_%03lld", static_cast<long long>(index));
  return Volume(voxels, labels, id, Spacing{1.0, 1.0, 2.5});
}

}  // namespace

void PhantomSpec::validate() const {
  if (n_volumes < 1) throw std::invalid_argument("phantom needs at least one volume");
  if (height < kMinSide || width < kMinSide) {
    throw std::invalid_argument(c10::str("phantom slices must be at least ", kMinSide, "x", kMinSide,
                                         ", got ", height, "x", width));
  }
  if (n_slices < 1) throw std::invalid_argument("phantom needs at least one slice");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw std::invalid_argument("noise_sigma must be finite and >= 0");
  }
}

std::vector<Volume> generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::vector<Volume> volumes;
  volumes.reserve(static_cast<std::size_t>(spec.n_volumes));
  for (std::int64_t v = 0; v < spec.n_volumes; ++v) volumes.push_back(make_volume(spec, v));
  return volumes;
}

std::vector<Volume> write_phantom(const PhantomSpec& spec, const std::filesystem::path& dir) {
  auto volumes = generate_phantom(spec);
  std::filesystem::create_directories(dir);
  for (const auto& v : volumes) save_volume(v, dir);
  return volumes;
}

}  // namespace atrium::data
