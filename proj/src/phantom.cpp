#include "volssl/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "volssl/error.hpp"

namespace volssl {

void PhantomSpec::validate() const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (extents[a] < 32) throw ValueError("phantom: extents must be >= 32");
  }
  auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_unit(object_fraction)) throw ValueError("phantom: object_fraction must lie in (0,1)");
  if (!in_unit(holder_radius_fraction)) {
    throw ValueError("phantom: holder_radius_fraction must lie in (0,1)");
  }
  if (noise_sigma < 0.0) throw ValueError("phantom: noise_sigma must be >= 0");
  if (texture_frequency <= 0.0) throw ValueError("phantom: texture_frequency must be > 0");
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const auto& ext = spec.extents;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::array<double, 3> semi{}, center{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double e = static_cast<double>(ext[a]);
    if (spec.object_fraction * e > e - 2.0) {
      throw ValueError("phantom: object would exceed the volume bounds on axis " +
                       std::to_string(a));
    }
    semi[a] = spec.object_fraction * e / 2.0 * (0.85 + 0.15 * unit(rng));
    const double lo = semi[a] + 1.0, hi = e - 1.0 - semi[a];
    center[a] = lo + (hi - lo) * unit(rng);
  }
  const double theta0 = (spec.orientation_start_deg + 10.0 * (unit(rng) - 0.5)) *
                        std::numbers::pi / 180.0;
  const double span = spec.orientation_span_deg * std::numbers::pi / 180.0;
  const double phase0 = 2.0 * std::numbers::pi * unit(rng);
  const double omega = 2.0 * std::numbers::pi * spec.texture_frequency;

  Phantom ph{Volume3D(ext), {}, std::vector<std::uint8_t>(ext[0] * ext[1] * ext[2], 0)};
  std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_sigma));
  const double hc1 = (static_cast<double>(ext[1]) - 1.0) / 2.0;
  const double hc2 = (static_cast<double>(ext[2]) - 1.0) / 2.0;
  const double holder_r =
      spec.holder_radius_fraction * static_cast<double>(std::min(ext[1], ext[2])) / 2.0;

  for (std::size_t i = 0; i < ext[0]; ++i) {
    const double t = ext[0] > 1 ? static_cast<double>(i) / static_cast<double>(ext[0] - 1) : 0.0;
    const double theta = theta0 + span * t;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double phase = phase0 + spec.phase_step * static_cast<double>(i);
    const double zi = (static_cast<double>(i) - center[0]) / semi[0];
    for (std::size_t j = 0; j < ext[1]; ++j) {
      const double dj = static_cast<double>(j) - center[1];
      const double zj = dj / semi[1];
      for (std::size_t k = 0; k < ext[2]; ++k) {
        const double dk = static_cast<double>(k) - center[2];
        const double zk = dk / semi[2];
        double v = noise(rng);
        const double hj = static_cast<double>(j) - hc1, hk = static_cast<double>(k) - hc2;
        if (hj * hj + hk * hk <= holder_r * holder_r) v += spec.holder_level;
        if (zi * zi + zj * zj + zk * zk <= 1.0) {
          const double u = omega * (ct * dj + st * dk) + phase;
          v += spec.object_level + spec.texture_amplitude * (std::sin(u) + 0.5 * std::sin(2.0 * u));
          ph.object_mask[ph.volume.index(i, j, k)] = 1;
        }
        ph.volume.at(i, j, k) = static_cast<float>(v);
      }
    }
  }
  ph.truth = mask_bbox(ext, ph.object_mask);
  return ph;
}

BBox3D mask_bbox(const Volume3D::Extents& shape, const std::vector<std::uint8_t>& mask) {
  std::array<std::size_t, 3> lo{shape[0], shape[1], shape[2]}, hi{0, 0, 0};
  bool any = false;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < shape[0]; ++i) {
    for (std::size_t j = 0; j < shape[1]; ++j) {
      for (std::size_t k = 0; k < shape[2]; ++k, ++idx) {
        if (!mask[idx]) continue;
        any = true;
        const std::array<std::size_t, 3> p{i, j, k};
        for (std::size_t a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], p[a]);
          hi[a] = std::max(hi[a], p[a] + 1);
        }
      }
    }
  }
  if (!any) throw NoObjectError("mask is empty");
  return {{Interval{lo[0], hi[0]}, Interval{lo[1], hi[1]}, Interval{lo[2], hi[2]}}};
}

}  // namespace volssl
