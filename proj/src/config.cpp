#include "volssl/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <functional>
#include <sstream>

#include "volssl/error.hpp"

namespace volssl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T number(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

bool boolean(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: key '" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (sampler.batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
  if (train.steps < 1) throw ConfigError("config: steps must be >= 1");
  if (train_volumes.empty()) throw ConfigError("config: 'train' lists no volumes");
  for (const auto* list : {&train_volumes, &test_volumes}) {
    for (const auto& p : *list) {
      if (!std::filesystem::exists(p)) throw ConfigError("config: volume not found: " + p.string());
    }
  }
  try {
    sampler.validate();
  } catch (const ValueError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig parse_config(std::istream& in, const std::filesystem::path& base) {
  RunConfig cfg;
  auto paths = [&](const std::string& v) {
    std::vector<std::filesystem::path> out;
    for (const auto& item : split_list(v)) {
      const std::filesystem::path p(item);
      out.push_back(p.is_absolute() || base.empty() ? p : base / p);
    }
    return out;
  };
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"task",
       [&](const std::string& k, const std::string& v) {
         if (v == "sort") cfg.task = Task::Sort;
         else if (v == "rot") cfg.task = Task::Rot;
         else throw ConfigError("config: key '" + k + "' expects sort or rot, got '" + v + "'");
       }},
      {"seed", [&](auto& k, auto& v) { cfg.train.seed = number<std::uint64_t>(k, v); }},
      {"steps", [&](auto& k, auto& v) { cfg.train.steps = number<std::size_t>(k, v); }},
      {"lr", [&](auto& k, auto& v) { cfg.train.lr = number<float>(k, v); }},
      {"margin", [&](auto& k, auto& v) { cfg.train.margin = number<float>(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { cfg.sampler.batch_size = number<std::size_t>(k, v); }},
      {"slice_dist",
       [&](const std::string& k, const std::string& v) {
         if (v == "uniform") cfg.sampler.slice_dist.kind = SliceDistribution::Kind::Uniform;
         else if (v == "normal") cfg.sampler.slice_dist.kind = SliceDistribution::Kind::Normal;
         else throw ConfigError("config: key '" + k + "' expects uniform or normal, got '" + v + "'");
       }},
      {"slice_mean", [&](auto& k, auto& v) { cfg.sampler.slice_dist.mean = number<double>(k, v); }},
      {"slice_std", [&](auto& k, auto& v) { cfg.sampler.slice_dist.stddev = number<double>(k, v); }},
      {"offset", [&](auto& k, auto& v) { cfg.sampler.offset_halfwidth = number<int>(k, v); }},
      {"angles",
       [&](const std::string& k, const std::string& v) {
         cfg.sampler.angles.clear();
         for (const auto& a : split_list(v)) cfg.sampler.angles.push_back(number<double>(k, a));
       }},
      {"axis",
       [&](const std::string& k, const std::string& v) {
         cfg.sampler.axis = v == "any" ? kAnyAxis : number<int>(k, v);
       }},
      {"mask_sort_slices", [&](auto& k, auto& v) { cfg.sampler.mask_sort_slices = boolean(k, v); }},
      {"flips", [&](auto& k, auto& v) { cfg.sampler.augment.flips = boolean(k, v); }},
      {"intensity_jitter",
       [&](auto& k, auto& v) { cfg.sampler.augment.intensity_jitter = number<float>(k, v); }},
      {"channels",
       [&](const std::string& k, const std::string& v) {
         const auto items = split_list(v);
         if (items.size() != 4) throw ConfigError("config: key '" + k + "' expects 4 stage widths");
         for (std::size_t i = 0; i < 4; ++i) cfg.channels[i] = number<std::size_t>(k, items[i]);
       }},
      {"train", [&](auto&, auto& v) { cfg.train_volumes = paths(v); }},
      {"test", [&](auto&, auto& v) { cfg.test_volumes = paths(v); }},
      {"eval_batches", [&](auto& k, auto& v) { cfg.eval_batches = number<std::size_t>(k, v); }},
      {"log", [&](auto&, auto& v) { cfg.log = paths(v).front(); }},
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config: unknown key '" + key + "'");
    if (value.empty()) throw ConfigError("config: key '" + key + "' has no value");
    it->second(key, value);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_config(in, path.parent_path());
}

}  // namespace volssl
