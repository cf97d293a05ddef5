#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "volssl/config.hpp"
#include "volssl/error.hpp"
#include "volssl/phantom.hpp"
#include "volssl/reduce.hpp"
#include "volssl/training.hpp"
#include "volssl/transfer.hpp"

namespace fs = std::filesystem;
using namespace volssl;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNoObject = 3, kIo = 4 };

fs::path sidecar(const fs::path& volume) {
  fs::path p = volume;
  p.replace_extension(".truth.json");
  return p;
}

// profiles.csv -> profiles.axis0.csv, ...
fs::path profile_path(const fs::path& base, int axis) {
  fs::path p = base;
  p.replace_filename(base.stem().string() + ".axis" + std::to_string(axis) + base.extension().string());
  return p;
}

struct GenArgs {
  std::uint64_t seed = 0;
  std::size_t size = 64;
  std::size_t count = 1;
  double fraction = 0.5;
  double noise = PhantomSpec{}.noise_sigma;
  fs::path out;
};

int gen_phantom(const GenArgs& a) {
  if (a.count == 0) return kOk;
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < a.count; ++i) {
    PhantomSpec spec;
    spec.seed = a.seed + i;
    spec.extents = {a.size, a.size, a.size};
    spec.object_fraction = a.fraction;
    spec.noise_sigma = a.noise;
    const Phantom ph = generate_phantom(spec);
    std::ostringstream name;
    name << "phantom_" << std::setw(3) << std::setfill('0') << i << ".vvol";
    const fs::path vol = a.out / name.str();
    save_volume(ph.volume, vol);
    save_bbox(ph.truth, sidecar(vol));
    std::cout << vol.string() << '\n';
  }
  return kOk;
}

std::vector<Volume3D> load_all(const std::vector<fs::path>& paths) {
  std::vector<Volume3D> out;
  for (const auto& p : paths) out.push_back(load_volume(p));
  return out;
}

int train(const fs::path& config_path, const fs::path& out) {
  const RunConfig cfg = load_config(config_path);
  cfg.validate();
  const auto train_vols = load_all(cfg.train_volumes);
  const auto test_vols = load_all(cfg.test_volumes);
  const fs::path log_path = cfg.log.empty() ? fs::path(out.string() + ".log.csv") : cfg.log;
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot open " + log_path.string() + " for writing");
  log << "step,loss,metric\n" << std::setprecision(9);
  const auto on_step = [&](const StepRecord& r) {
    log << r.step << ',' << r.loss << ',' << r.metric << '\n';
  };
  const std::uint64_t eval_seed = cfg.train.seed ^ 0x5eedULL;
  if (cfg.task == Task::Sort) {
    SortNet net(cfg.train.seed, cfg.channels);
    train_sort(net, train_vols, cfg.sampler, cfg.train, on_step);
    net.save(out);
    if (!test_vols.empty()) {
      const auto e = evaluate_sort(net, test_vols, cfg.sampler, cfg.eval_batches, eval_seed,
                                   cfg.train.margin);
      std::cout << "held-out loss " << e.loss << " mean displacement " << e.metric << '\n';
    }
  } else {
    RotNet net(cfg.sampler.angles.size(), cfg.train.seed, cfg.channels);
    train_rot(net, train_vols, cfg.sampler, cfg.train, on_step);
    net.save(out);
    if (!test_vols.empty()) {
      std::vector<BBox3D> boxes;
      for (const auto& p : cfg.test_volumes) {
        if (!fs::exists(sidecar(p))) {
          boxes.clear();
          break;
        }
        boxes.push_back(load_bbox(sidecar(p)));
      }
      const auto e = evaluate_rot(net, test_vols, cfg.sampler, cfg.eval_batches, eval_seed, boxes);
      std::cout << "held-out loss " << e.loss << " accuracy " << e.metric;
      if (e.object_pairs) std::cout << " object-bearing accuracy " << e.object_metric;
      std::cout << '\n';
    }
  }
  return kOk;
}

struct LocalizeArgs {
  std::string method;
  fs::path ckpt, volume, out, profiles;
  double tau = 0.5;
  double eps = ClusterOptions{}.eps;
  std::size_t min_pts = ClusterOptions{}.min_pts;
  double dense_fraction = ClusterOptions{}.dense_fraction;
  std::size_t smooth = 5;
  int offset = 1;
  unsigned threads = 0;
  std::vector<double> angles;
};

int localize(const LocalizeArgs& a) {
  const Volume3D vol = load_volume(a.volume);
  BBox3D box;
  if (a.method == "uncertainty") {
    const RotNet net = RotNet::load(a.ckpt);
    ProfileOptions opts;
    if (!a.angles.empty()) opts.angles = a.angles;
    if (net.num_classes() != opts.angles.size()) {
      throw ConfigError("rotation checkpoint has " + std::to_string(net.num_classes()) +
                        " classes; the angle table has " + std::to_string(opts.angles.size()));
    }
    opts.sigma_offset = a.offset;
    opts.threads = a.threads;
    std::array<ProbProfile, 3> profiles;
    for (int ax = 0; ax < 3; ++ax) {
      profiles[static_cast<std::size_t>(ax)] = rotation_certainty_profile(net, vol, ax, opts);
      if (!a.profiles.empty()) save_profile_csv(profiles[static_cast<std::size_t>(ax)], profile_path(a.profiles, ax));
    }
    box = bbox_from_profiles(profiles, a.tau, a.smooth);
  } else {
    const SortNet net = SortNet::load(a.ckpt);
    ClusterOptions opts;
    opts.eps = a.eps;
    opts.min_pts = a.min_pts;
    opts.dense_fraction = a.dense_fraction;
    box = localize_by_clustering(net, vol, opts).box;
  }
  save_bbox(box, a.out);
  std::cout << bbox_to_json(box) << '\n';
  return kOk;
}

int crop_cmd(const fs::path& volume, const fs::path& bbox, std::size_t margin, const fs::path& out) {
  const Volume3D vol = load_volume(volume);
  const BBox3D box = load_bbox(bbox);
  if (!box.valid_for(vol.shape())) throw FormatError("bbox does not fit the volume");
  const Volume3D cut = crop(vol, box, margin);
  save_volume(cut, out);
  fs::path report = out;
  report.replace_extension(".report.json");
  const auto r = reduction_report(vol, cut, expand_box(box, margin, vol.shape()), margin);
  save_report(r, report);
  std::cout << report_to_json(r) << '\n';
  return kOk;
}

int eval_cmd(const fs::path& pred_path, const fs::path& truth_path) {
  const BBox3D pred = load_bbox(pred_path), truth = load_bbox(truth_path);
  const BoxError e = bbox_abs_error(pred, truth);
  std::cout << std::fixed << std::setprecision(4) << "iou " << iou3d(pred, truth) << '\n'
            << "error_axis0 " << e.per_axis[0] << '\n'
            << "error_axis1 " << e.per_axis[1] << '\n'
            << "error_axis2 " << e.per_axis[2] << '\n'
            << "error_mean " << e.mean << '\n'
            << "error_percent " << e.percent_of_extent << '\n';
  return kOk;
}

int slice_cmd(const fs::path& volume, int axis, std::size_t index, const fs::path& bbox,
              const fs::path& out) {
  const Volume3D vol = load_volume(volume);
  if (axis < 0 || axis > 2 || index >= vol.extent(axis)) throw ConfigError("slice index out of range");
  Slice2D s = slice_at(vol, axis, index);
  if (!bbox.empty()) s = overlay_box(s, load_bbox(bbox), axis);
  write_pgm(s, out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised slice pretext training and zero-label localization"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-phantom", "write seeded phantoms with truth boxes");
  g->add_option("--seed", gen.seed)->required();
  g->add_option("--size", gen.size, "extent of every axis")->check(CLI::Range(32, 4096));
  g->add_option("--count", gen.count);
  g->add_option("--fraction", gen.fraction, "object diameter / extent");
  g->add_option("--noise", gen.noise, "Gaussian noise sigma");
  g->add_option("--out", gen.out)->required();

  fs::path config, ckpt_out;
  auto* t = app.add_subcommand("train", "train a sorting or rotation network");
  t->add_option("--config", config)->required();
  t->add_option("--out", ckpt_out)->required();

  LocalizeArgs loc;
  auto* l = app.add_subcommand("localize", "predict the object box of a volume");
  l->add_option("--method", loc.method)->required()->check(CLI::IsMember({"cluster", "uncertainty"}));
  l->add_option("--ckpt", loc.ckpt)->required();
  l->add_option("--volume", loc.volume)->required();
  l->add_option("--out", loc.out)->required();
  l->add_option("--profiles", loc.profiles, "CSV base name; one file per axis");
  l->add_option("--tau", loc.tau)->check(CLI::Range(0.0, 1.0));
  l->add_option("--smooth", loc.smooth);
  l->add_option("--offset", loc.offset, "neighbor offset for the certainty pairs");
  l->add_option("--threads", loc.threads);
  l->add_option("--angles", loc.angles, "angle table the network was trained with")->delimiter(',');
  l->add_option("--eps", loc.eps, "DBSCAN radius on RMS per-dimension distance");
  l->add_option("--min-pts", loc.min_pts);
  l->add_option("--dense-fraction", loc.dense_fraction);

  fs::path crop_vol, crop_box, crop_out;
  std::size_t margin = 2;
  auto* c = app.add_subcommand("crop", "cut a volume down to a box");
  c->add_option("--volume", crop_vol)->required();
  c->add_option("--bbox", crop_box)->required();
  c->add_option("--margin", margin);
  c->add_option("--out", crop_out)->required();

  fs::path pred, truth;
  auto* e = app.add_subcommand("eval", "compare a predicted box with the truth");
  e->add_option("--pred", pred)->required();
  e->add_option("--truth", truth)->required();

  fs::path sl_vol, sl_box, sl_out;
  int sl_axis = 0;
  std::size_t sl_index = 0;
  auto* s = app.add_subcommand("slice", "export one slice as PGM");
  s->add_option("--volume", sl_vol)->required();
  s->add_option("--axis", sl_axis);
  s->add_option("--index", sl_index)->required();
  s->add_option("--bbox", sl_box, "draw this box");
  s->add_option("--out", sl_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*g) return gen_phantom(gen);
    if (*t) return train(config, ckpt_out);
    if (*l) return localize(loc);
    if (*c) return crop_cmd(crop_vol, crop_box, margin, crop_out);
    if (*e) return eval_cmd(pred, truth);
    if (*s) return slice_cmd(sl_vol, sl_axis, sl_index, sl_box, sl_out);
  } catch (const NoObjectError& err) {
    std::cerr << "no object: " << err.what() << '\n';
    return kNoObject;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kConfig;
  } catch (const IoError& err) {
    std::cerr << "i/o error: " << err.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "i/o error: " << err.what() << '\n';
    return kIo;
  } catch (const FormatError& err) {
    std::cerr << "format error: " << err.what() << '\n';
    return kIo;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kFailure;
  }
  return kOk;
}
