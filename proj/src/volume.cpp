#include "volssl/volume.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include <json.hpp>

#include "binary_io.hpp"
#include "volssl/error.hpp"

namespace volssl {

namespace {

void check_axis(int axis) {
  if (axis < 0 || axis > 2) throw ValueError("axis must be 0, 1 or 2, got " + std::to_string(axis));
}

// In-plane axes of a slice perpendicular to `axis`.
std::array<int, 2> plane_axes(int axis) {
  switch (axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

}  // namespace

Volume3D::Volume3D(Extents shape, float fill)
    : Volume3D(shape, std::vector<float>(shape[0] * shape[1] * shape[2], fill)) {}

Volume3D::Volume3D(Extents shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (shape[0] == 0 || shape[1] == 0 || shape[2] == 0) {
    throw ShapeError("volume: all extents must be >= 1");
  }
  if (data_.size() != shape[0] * shape[1] * shape[2]) {
    throw ShapeError("volume: " + std::to_string(data_.size()) + " values do not fill shape [" +
                     std::to_string(shape[0]) + "," + std::to_string(shape[1]) + "," +
                     std::to_string(shape[2]) + "]");
  }
}

Slice2D::Slice2D(std::size_t height, std::size_t width, float fill)
    : Slice2D(height, width, std::vector<float>(height * width, fill)) {}

Slice2D::Slice2D(std::size_t height, std::size_t width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != height * width) {
    throw ShapeError("slice: " + std::to_string(data_.size()) + " values do not fill " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
}

BBox3D BBox3D::full(const Volume3D::Extents& shape) {
  return {{Interval{0, shape[0]}, Interval{0, shape[1]}, Interval{0, shape[2]}}};
}

std::size_t BBox3D::voxel_count() const {
  return axes[0].length() * axes[1].length() * axes[2].length();
}

bool BBox3D::valid_for(const Volume3D::Extents& shape) const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (axes[a].lo >= axes[a].hi || axes[a].hi > shape[a]) return false;
  }
  return true;
}

// ---- VVOL1 ------------------------------------------------------------------

void write_volume(std::ostream& out, const Volume3D& vol) {
  nlohmann::json header = {{"shape", vol.shape()}, {"dtype", "f32le"}};
  out << "VVOL1\n" << header.dump() << '\n';
  detail::write_f32le(out, vol.data());
  if (!out) throw IoError("volume: write failed");
}

Volume3D read_volume(std::istream& in) {
  detail::expect_magic(in, "VVOL1");
  const std::string line = detail::read_header_line(in, "volume");
  Volume3D::Extents shape{};
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("dtype", std::string("f32le")) != "f32le") {
      throw FormatError("volume: unsupported dtype " + header["dtype"].dump());
    }
    const auto dims = header.at("shape").get<std::vector<long long>>();
    if (dims.size() != 3) throw ShapeMismatchError("volume: shape must have 3 extents");
    for (std::size_t a = 0; a < 3; ++a) {
      if (dims[a] <= 0) throw ShapeMismatchError("volume: extents must be >= 1");
      shape[a] = static_cast<std::size_t>(dims[a]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("volume: malformed header: ") + e.what());
  }
  std::vector<float> data(shape[0] * shape[1] * shape[2]);
  if (detail::read_f32le(in, data) != data.size()) {
    throw TruncatedError("volume: payload shorter than the declared shape");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ShapeMismatchError("volume: payload longer than the declared shape");
  }
  return Volume3D(shape, std::move(data));
}

void save_volume(const Volume3D& vol, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_volume(out, vol);
}

Volume3D load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_volume(in);
}

// ---- slicing ----------------------------------------------------------------

Slice2D slice_at(const Volume3D& vol, int axis, std::size_t index) {
  check_axis(axis);
  const auto& s = vol.shape();
  if (index >= s[static_cast<std::size_t>(axis)]) {
    throw ValueError("slice_at: index " + std::to_string(index) + " outside [0, " +
                     std::to_string(s[static_cast<std::size_t>(axis)]) + ") on axis " +
                     std::to_string(axis));
  }
  const auto [ra, ca] = plane_axes(axis);
  const std::size_t h = s[static_cast<std::size_t>(ra)], w = s[static_cast<std::size_t>(ca)];
  Slice2D out(h, w);
  const auto src = vol.data();
  auto dst = out.data();
  switch (axis) {
    case 0:
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(vol.index(index, 0, 0)), h * w,
                  dst.begin());
      break;
    case 1:
      for (std::size_t i = 0; i < h; ++i) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(vol.index(i, index, 0)), w,
                    dst.begin() + static_cast<std::ptrdiff_t>(i * w));
      }
      break;
    default:
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) dst[i * w + j] = vol.at(i, j, index);
      }
  }
  return out;
}

Volume3D assemble(std::span<const Slice2D> slices, int axis) {
  check_axis(axis);
  if (slices.empty()) throw ShapeError("assemble: no slices");
  const std::size_t h = slices[0].height(), w = slices[0].width(), n = slices.size();
  Volume3D::Extents shape{};
  const auto [ra, ca] = plane_axes(axis);
  shape[static_cast<std::size_t>(axis)] = n;
  shape[static_cast<std::size_t>(ra)] = h;
  shape[static_cast<std::size_t>(ca)] = w;
  Volume3D vol(shape);
  for (std::size_t idx = 0; idx < n; ++idx) {
    const Slice2D& s = slices[idx];
    if (s.height() != h || s.width() != w) throw ShapeError("assemble: slice extents differ");
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        std::array<std::size_t, 3> p{};
        p[static_cast<std::size_t>(axis)] = idx;
        p[static_cast<std::size_t>(ra)] = r;
        p[static_cast<std::size_t>(ca)] = c;
        vol.at(p[0], p[1], p[2]) = s.at(r, c);
      }
    }
  }
  return vol;
}

Slice2D rotate_slice(const Slice2D& s, double angle_deg) {
  const std::size_t h = s.height(), w = s.width();
  // Exact trigonometry on the lattice-aligned angles.
  double cs, sn;
  const double turns = angle_deg / 90.0;
  if (turns == std::round(turns)) {
    static constexpr double kCos[4] = {1, 0, -1, 0};
    static constexpr double kSin[4] = {0, 1, 0, -1};
    const long q = ((static_cast<long>(std::round(turns)) % 4) + 4) % 4;
    cs = kCos[q];
    sn = kSin[q];
  } else {
    const double rad = angle_deg * std::numbers::pi / 180.0;
    cs = std::cos(rad);
    sn = std::sin(rad);
  }
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  Slice2D out(h, w);
  auto sample = [&](long y, long x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
    return s.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      // Output offset with the vertical axis pointing up, then rotate back.
      const double dx = static_cast<double>(c) - cx;
      const double dy = cy - static_cast<double>(r);
      const double sx = cx + cs * dx + sn * dy;
      const double sy = cy - (-sn * dx + cs * dy);
      const double fy = std::floor(sy), fx = std::floor(sx);
      const double ty = sy - fy, tx = sx - fx;
      const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
      double v = 0.0;
      if (ty == 0.0 && tx == 0.0) {
        v = sample(y0, x0);
      } else {
        v = (1 - ty) * ((1 - tx) * sample(y0, x0) + tx * sample(y0, x0 + 1)) +
            ty * ((1 - tx) * sample(y0 + 1, x0) + tx * sample(y0 + 1, x0 + 1));
      }
      out.at(r, c) = static_cast<float>(v);
    }
  }
  return out;
}

Slice2D incircle_mask(const Slice2D& s) {
  const std::size_t h = s.height(), w = s.width();
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double radius = static_cast<double>(std::min(h, w)) / 2.0;
  Slice2D out = s;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
      if (dy * dy + dx * dx > radius * radius) out.at(r, c) = 0.0f;
    }
  }
  return out;
}

Volume3D downscale(const Volume3D& vol, std::size_t factor) {
  if (factor == 0) throw ValueError("downscale: factor must be >= 1");
  if (factor == 1) return vol;
  const auto& s = vol.shape();
  const Volume3D::Extents o{(s[0] + factor - 1) / factor, (s[1] + factor - 1) / factor,
                            (s[2] + factor - 1) / factor};
  Volume3D out(o);
  const double inv = 1.0 / static_cast<double>(factor * factor * factor);
  for (std::size_t i = 0; i < o[0]; ++i) {
    for (std::size_t j = 0; j < o[1]; ++j) {
      for (std::size_t k = 0; k < o[2]; ++k) {
        double acc = 0.0;
        for (std::size_t a = 0; a < factor; ++a) {
          const std::size_t si = std::min(i * factor + a, s[0] - 1);
          for (std::size_t b = 0; b < factor; ++b) {
            const std::size_t sj = std::min(j * factor + b, s[1] - 1);
            for (std::size_t c = 0; c < factor; ++c) {
              acc += vol.at(si, sj, std::min(k * factor + c, s[2] - 1));
            }
          }
        }
        out.at(i, j, k) = static_cast<float>(acc * inv);
      }
    }
  }
  return out;
}

// ---- inspection -------------------------------------------------------------

Slice2D overlay_box(const Slice2D& s, const BBox3D& box, int axis) {
  check_axis(axis);
  const auto [ra, ca] = plane_axes(axis);
  const Interval rows = box.axes[static_cast<std::size_t>(ra)];
  const Interval cols = box.axes[static_cast<std::size_t>(ca)];
  Slice2D out = s;
  if (rows.length() == 0 || cols.length() == 0 || s.data().empty()) return out;
  const float top = *std::max_element(s.data().begin(), s.data().end());
  const std::size_t r1 = std::min(rows.hi, s.height()) - 1, c1 = std::min(cols.hi, s.width()) - 1;
  for (std::size_t r = rows.lo; r <= r1; ++r) {
    out.at(r, cols.lo) = top;
    out.at(r, c1) = top;
  }
  for (std::size_t c = cols.lo; c <= c1; ++c) {
    out.at(rows.lo, c) = top;
    out.at(r1, c) = top;
  }
  return out;
}

void write_pgm(const Slice2D& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << s.width() << ' ' << s.height() << "\n255\n";
  const auto d = s.data();
  const auto [lo_it, hi_it] = std::minmax_element(d.begin(), d.end());
  const float lo = d.empty() ? 0.0f : *lo_it, hi = d.empty() ? 0.0f : *hi_it;
  const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;
  std::vector<unsigned char> bytes(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround((d[i] - lo) * scale));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace volssl
