#pragma once

#include <cstdint>
#include <vector>

#include "volssl/volume.hpp"

namespace volssl {

// Synthetic CT-like test volume: Gaussian noise, an axis-0 holder cylinder
// and one textured ellipsoid. The texture is a skewed sinusoid whose
// in-plane orientation and phase drift monotonically with the axis-0 index,
// so slice order and in-plane rotation are only recoverable from the object.
struct PhantomSpec {
  std::uint64_t seed = 0;
  Volume3D::Extents extents{64, 64, 64};
  double object_fraction = 0.5;         // ellipsoid diameter / extent, per axis
  double noise_sigma = 0.5;
  double holder_radius_fraction = 0.8;  // cylinder radius / (min in-plane extent / 2)
  double texture_frequency = 1.0 / 6.0; // in-plane cycles per voxel

  double holder_level = 0.05;
  double object_level = 0.5;
  double texture_amplitude = 1.0;
  double orientation_start_deg = 20.0;
  double orientation_span_deg = 120.0;  // drift over the full axis-0 extent
  double phase_step = 0.785398;         // radians per axis-0 slice

  void validate() const;
};

struct Phantom {
  Volume3D volume;
  BBox3D truth;                        // tight box of object voxels
  std::vector<std::uint8_t> object_mask;  // 1 where the voxel belongs to the object
};

Phantom generate_phantom(const PhantomSpec& spec);

// Tight box of the nonzero entries of a voxel mask; throws NoObjectError when empty.
BBox3D mask_bbox(const Volume3D::Extents& shape, const std::vector<std::uint8_t>& mask);

}  // namespace volssl
