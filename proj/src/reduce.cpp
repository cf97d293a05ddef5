#include "volssl/reduce.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "volssl/error.hpp"

namespace volssl {

BBox3D expand_box(const BBox3D& box, std::size_t margin, const Volume3D::Extents& shape) {
  if (!box.valid_for(shape)) throw ValueError("crop: box does not fit the volume");
  BBox3D out;
  for (std::size_t a = 0; a < 3; ++a) {
    out.axes[a].lo = box.axes[a].lo > margin ? box.axes[a].lo - margin : 0;
    out.axes[a].hi = std::min(shape[a], box.axes[a].hi + margin);
  }
  return out;
}

Volume3D crop(const Volume3D& vol, const BBox3D& box, std::size_t margin) {
  const BBox3D b = expand_box(box, margin, vol.shape());
  const Volume3D::Extents ext{b.axes[0].length(), b.axes[1].length(), b.axes[2].length()};
  std::vector<float> data;
  data.reserve(ext[0] * ext[1] * ext[2]);
  const auto src = vol.data();
  for (std::size_t i = b.axes[0].lo; i < b.axes[0].hi; ++i) {
    for (std::size_t j = b.axes[1].lo; j < b.axes[1].hi; ++j) {
      const auto row = src.begin() + static_cast<std::ptrdiff_t>(vol.index(i, j, b.axes[2].lo));
      data.insert(data.end(), row, row + static_cast<std::ptrdiff_t>(ext[2]));
    }
  }
  return Volume3D(ext, std::move(data));
}

ReductionReport reduction_report(const Volume3D& before, const Volume3D& after, const BBox3D& box,
                                 std::size_t margin) {
  ReductionReport r;
  r.bytes_before = before.payload_bytes();
  r.bytes_after = after.payload_bytes();
  r.fraction = 1.0 - static_cast<double>(r.bytes_after) / static_cast<double>(r.bytes_before);
  r.box = box;
  r.margin = margin;
  return r;
}

std::string report_to_json(const ReductionReport& report) {
  nlohmann::json j;
  j["bytes_before"] = report.bytes_before;
  j["bytes_after"] = report.bytes_after;
  j["reduction"] = report.fraction;
  j["margin"] = report.margin;
  j["bbox"] = nlohmann::json::array();
  for (const auto& iv : report.box.axes) j["bbox"].push_back({iv.lo, iv.hi});
  return j.dump();
}

void save_report(const ReductionReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << report_to_json(report) << '\n';
}

}  // namespace volssl
