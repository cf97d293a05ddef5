#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace volssl {

// Dense float voxel grid, row-major with axis 2 fastest.
class Volume3D {
 public:
  using Extents = std::array<std::size_t, 3>;

  Volume3D() = default;
  explicit Volume3D(Extents shape, float fill = 0.0f);
  Volume3D(Extents shape, std::vector<float> data);

  const Extents& shape() const { return shape_; }
  std::size_t extent(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t voxel_count() const { return data_.size(); }
  std::size_t payload_bytes() const { return data_.size() * sizeof(float); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * shape_[1] + j) * shape_[2] + k;
  }
  float at(std::size_t i, std::size_t j, std::size_t k) const { return data_[index(i, j, k)]; }
  float& at(std::size_t i, std::size_t j, std::size_t k) { return data_[index(i, j, k)]; }

  bool operator==(const Volume3D&) const = default;

 private:
  Extents shape_{0, 0, 0};
  std::vector<float> data_;
};

class Slice2D {
 public:
  Slice2D() = default;
  Slice2D(std::size_t height, std::size_t width, float fill = 0.0f);
  Slice2D(std::size_t height, std::size_t width, std::vector<float> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  float at(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }
  float& at(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }

  bool operator==(const Slice2D&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> data_;
};

// Half-open voxel interval [lo, hi).
struct Interval {
  std::size_t lo = 0;
  std::size_t hi = 0;

  std::size_t length() const { return hi > lo ? hi - lo : 0; }
  bool operator==(const Interval&) const = default;
};

struct BBox3D {
  std::array<Interval, 3> axes;

  static BBox3D full(const Volume3D::Extents& shape);
  std::size_t voxel_count() const;
  // Nonempty and within the given extents.
  bool valid_for(const Volume3D::Extents& shape) const;
  bool operator==(const BBox3D&) const = default;
};

// ---- VVOL1 files ------------------------------------------------------------
// "VVOL1\n" + {"shape":[d0,d1,d2],"dtype":"f32le"} + "\n" + float32 payload.

void write_volume(std::ostream& out, const Volume3D& vol);
Volume3D read_volume(std::istream& in);
void save_volume(const Volume3D& vol, const std::filesystem::path& path);
Volume3D load_volume(const std::filesystem::path& path);

// ---- slicing and 2D transforms ----------------------------------------------

// Cross-section perpendicular to `axis`. The two remaining axes keep their
// relative order: axis 0 -> (d1,d2), axis 1 -> (d0,d2), axis 2 -> (d0,d1).
Slice2D slice_at(const Volume3D& vol, int axis, std::size_t index);

// Inverse of slicing every index along `axis`.
Volume3D assemble(std::span<const Slice2D> slices, int axis);

// Counter-clockwise rotation about ((h-1)/2, (w-1)/2) with bilinear
// interpolation; samples outside the slice read as 0.
Slice2D rotate_slice(const Slice2D& s, double angle_deg);

// Zeroes everything farther than min(h,w)/2 from the center.
Slice2D incircle_mask(const Slice2D& s);

// Mean pooling over factor^3 blocks. Extents that are not divisible are
// padded by repeating the edge voxel.
Volume3D downscale(const Volume3D& vol, std::size_t factor);

// ---- inspection -------------------------------------------------------------

// Binary 8-bit PGM, min-max normalized. With a box, draws its in-plane
// rectangle at maximum intensity.
void write_pgm(const Slice2D& s, const std::filesystem::path& path);
Slice2D overlay_box(const Slice2D& s, const BBox3D& box, int axis);

}  // namespace volssl
