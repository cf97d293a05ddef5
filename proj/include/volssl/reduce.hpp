#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "volssl/volume.hpp"

namespace volssl {

// Grows every interval by `margin` voxels per side, clamped to the extents.
BBox3D expand_box(const BBox3D& box, std::size_t margin, const Volume3D::Extents& shape);

// Lossless sub-volume over expand_box(box, margin).
Volume3D crop(const Volume3D& vol, const BBox3D& box, std::size_t margin = 2);

struct ReductionReport {
  std::size_t bytes_before = 0;
  std::size_t bytes_after = 0;
  double fraction = 0.0;  // 1 - after / before
  BBox3D box;             // the expanded box that was cut out
  std::size_t margin = 0;
};

ReductionReport reduction_report(const Volume3D& before, const Volume3D& after, const BBox3D& box,
                                 std::size_t margin);

std::string report_to_json(const ReductionReport& report);
void save_report(const ReductionReport& report, const std::filesystem::path& path);

}  // namespace volssl
