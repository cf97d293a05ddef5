#include "volssl/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "volssl/error.hpp"

namespace volssl {

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& params) {
  nlohmann::json header = nlohmann::json::array();
  for (const auto& p : params) header.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  out << "VCKP1\n" << header.dump() << '\n';
  for (const auto& p : params) detail::write_f32le(out, p.tensor.data());
  if (!out) throw IoError("checkpoint: write failed");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  detail::expect_magic(in, "VCKP1");
  const std::string line = detail::read_header_line(in, "checkpoint");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (!header.is_array()) throw FormatError("checkpoint: header must be a JSON array");
  std::vector<NamedTensor> params;
  for (const auto& entry : header) {
    NamedTensor p;
    Shape shape;
    try {
      p.name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<Shape>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint: bad header entry: ") + e.what());
    }
    std::vector<float> data(numel(shape));
    if (detail::read_f32le(in, data) != data.size()) {
      throw TruncatedError("checkpoint: payload for '" + p.name + "' is truncated");
    }
    p.tensor = Tensor::from_data(std::move(shape), std::move(data), true);
    params.push_back(std::move(p));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ShapeMismatchError("checkpoint: trailing bytes after the declared parameters");
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace volssl
