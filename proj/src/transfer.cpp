#include "volssl/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "volssl/error.hpp"
#include "volssl/sampling.hpp"

namespace volssl {

// ---- embeddings ---------------------------------------------------------------

void EmbeddingSet::append(const EmbeddingGrid& grid, std::size_t volume, int axis,
                          std::size_t slice) {
  if (dim == 0) dim = grid.dim;
  if (grid.dim != dim) throw ShapeError("embeddings: dimension mismatch");
  vectors.insert(vectors.end(), grid.vectors.begin(), grid.vectors.end());
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) provenance.push_back({volume, axis, slice, r, c});
  }
}

void EmbeddingSet::append(const EmbeddingSet& other) {
  if (other.size() == 0) return;
  if (dim == 0) dim = other.dim;
  if (other.dim != dim) throw ShapeError("embeddings: dimension mismatch");
  vectors.insert(vectors.end(), other.vectors.begin(), other.vectors.end());
  provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
}

EmbeddingSet collect_embeddings(const SortNet& net, const Volume3D& vol, int axis,
                                std::size_t volume_id, std::size_t slice_step) {
  if (slice_step == 0) throw ValueError("collect_embeddings: slice step must be >= 1");
  EmbeddingSet set;
  constexpr std::size_t kChunk = 16;
  std::vector<Slice2D> slices;
  std::vector<std::size_t> ids;
  auto flush = [&]() {
    if (slices.empty()) return;
    const auto grids = embed(net, slices);
    for (std::size_t i = 0; i < grids.size(); ++i) set.append(grids[i], volume_id, axis, ids[i]);
    slices.clear();
    ids.clear();
  };
  for (std::size_t s = 0; s < vol.extent(axis); s += slice_step) {
    slices.push_back(slice_at(vol, axis, s));
    ids.push_back(s);
    if (slices.size() == kChunk) flush();
  }
  flush();
  return set;
}

Standardizer Standardizer::fit(const EmbeddingSet& reference) {
  const std::size_t n = reference.size(), d = reference.dim;
  if (n < 2) throw ValueError("standardize: need at least two vectors");
  Standardizer st{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) st.mean[k] += reference.vectors[i * d + k];
  }
  for (auto& m : st.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double e = reference.vectors[i * d + k] - st.mean[k];
      st.stddev[k] += e * e;
    }
  }
  for (auto& s : st.stddev) s = std::sqrt(std::max(s / static_cast<double>(n), 1e-8));
  return st;
}

EmbeddingSet Standardizer::apply(const EmbeddingSet& set) const {
  if (set.dim != mean.size()) throw ShapeError("standardize: dimension mismatch");
  EmbeddingSet out = set;
  const std::size_t d = set.dim;
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      out.vectors[i * d + k] =
          static_cast<float>((set.vectors[i * d + k] - mean[k]) / stddev[k]);
    }
  }
  return out;
}

EmbeddingSet standardize(const EmbeddingSet& set) { return Standardizer::fit(set).apply(set); }

// ---- clustering ---------------------------------------------------------------

ClusterLabels dbscan(std::span<const float> points, std::size_t dim, double eps,
                     std::size_t min_pts) {
  if (dim == 0 || points.size() % dim != 0) throw ShapeError("dbscan: bad point buffer");
  if (!(eps > 0.0)) throw ValueError("dbscan: eps must be > 0");
  if (min_pts < 1) throw ValueError("dbscan: min_pts must be >= 1");
  const std::size_t n = points.size() / dim;
  const double eps2 = eps * eps;
  auto region = [&](std::size_t p, std::vector<std::size_t>& out) {
    out.clear();
    const float* a = points.data() + p * dim;
    for (std::size_t q = 0; q < n; ++q) {
      const float* b = points.data() + q * dim;
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim && d2 <= eps2; ++k) {
        const double e = static_cast<double>(a[k]) - b[k];
        d2 += e * e;
      }
      if (d2 <= eps2) out.push_back(q);
    }
  };

  constexpr int kUnvisited = -2;
  ClusterLabels labels(n, kUnvisited);
  std::vector<std::size_t> seeds, found;
  int cluster = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (labels[p] != kUnvisited) continue;
    region(p, seeds);
    if (seeds.size() < min_pts) {
      labels[p] = kNoise;
      continue;
    }
    labels[p] = cluster;
    std::deque<std::size_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (labels[q] == kNoise) labels[q] = cluster;  // border point
      if (labels[q] != kUnvisited) continue;
      labels[q] = cluster;
      region(q, found);
      if (found.size() >= min_pts) queue.insert(queue.end(), found.begin(), found.end());
    }
    ++cluster;
  }
  return labels;
}

BackgroundLabels label_background(const ClusterLabels& labels, double dense_fraction) {
  if (!(dense_fraction > 0.0 && dense_fraction <= 1.0)) {
    throw ValueError("label_background: dense_fraction must lie in (0,1]");
  }
  std::map<int, std::size_t> sizes;
  for (int l : labels) {
    if (l != kNoise) ++sizes[l];
  }
  const double threshold = dense_fraction * static_cast<double>(labels.size());
  BackgroundLabels out;
  out.object.resize(labels.size());
  bool any_background = false, any_object = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool dense = labels[i] != kNoise && static_cast<double>(sizes[labels[i]]) >= threshold;
    out.object[i] = dense ? 0 : 1;
    any_background = any_background || dense;
    any_object = any_object || !dense;
  }
  out.degenerate = !any_background;
  if (!any_object) throw NoObjectError("every superpixel belongs to a dense background cluster");
  return out;
}

// ---- linear classifier --------------------------------------------------------

LinearClassifier train_linear_classifier(const EmbeddingSet& set, std::span<const int> labels,
                                         const LogisticOptions& opts) {
  const std::size_t n = set.size(), d = set.dim;
  if (labels.size() != n || n == 0) throw ShapeError("classifier: one label per vector required");
  const auto pos = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  if (pos == 0 || static_cast<std::size_t>(pos) == n) {
    throw ValueError("classifier: both classes must be present");
  }
  // Augmented design matrix [x, 1] in double.
  const std::size_t da = d + 1;
  std::vector<double> x(n * da);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) x[i * da + k] = set.vectors[i * d + k];
    x[i * da + d] = 1.0;
  }
  // Largest eigenvalue of X^T X / n by power iteration bounds the curvature.
  std::vector<double> v(da, 1.0 / std::sqrt(static_cast<double>(da))), xv(n), w(da);
  double lambda = 1.0;
  for (int it = 0; it < 50; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < da; ++k) s += x[i * da + k] * v[k];
      xv[i] = s;
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < da; ++k) w[k] += x[i * da + k] * xv[i];
    }
    double norm = 0.0;
    for (auto& e : w) {
      e /= static_cast<double>(n);
      norm += e * e;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    lambda = norm;
    for (std::size_t k = 0; k < da; ++k) v[k] = w[k] / norm;
  }
  const double step = 1.0 / (0.25 * lambda * 1.01 + opts.l2);

  std::vector<double> theta(da, 0.0), grad(da);
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0.0;
      for (std::size_t k = 0; k < da; ++k) z += x[i * da + k] * theta[k];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double r = p - (labels[i] != 0 ? 1.0 : 0.0);
      for (std::size_t k = 0; k < da; ++k) grad[k] += r * x[i * da + k];
    }
    double gnorm = 0.0;
    for (std::size_t k = 0; k < da; ++k) {
      grad[k] /= static_cast<double>(n);
      if (k < d) grad[k] += opts.l2 * theta[k];
      gnorm += grad[k] * grad[k];
    }
    if (std::sqrt(gnorm) < opts.tolerance) break;
    for (std::size_t k = 0; k < da; ++k) theta[k] -= step * grad[k];
  }
  LinearClassifier clf;
  clf.weight.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  clf.bias = theta[d];
  return clf;
}

std::vector<double> predict(const LinearClassifier& clf, const EmbeddingSet& set) {
  if (clf.weight.size() != set.dim) throw ShapeError("predict: classifier dimension mismatch");
  std::vector<double> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    double z = clf.bias;
    const auto e = set.at(i);
    for (std::size_t k = 0; k < set.dim; ++k) z += clf.weight[k] * e[k];
    out[i] = z;
  }
  return out;
}

// ---- boxes ----------------------------------------------------------------------

BBox3D bbox_from_superpixels(const EmbeddingSet& set, std::span<const int> object_labels,
                             const Volume3D::Extents& shape) {
  if (object_labels.size() != set.size()) throw ShapeError("bbox_from_superpixels: label count");
  constexpr std::size_t kPatch = BackboneConfig::kStride;
  std::array<std::size_t, 3> lo{shape[0], shape[1], shape[2]}, hi{0, 0, 0};
  bool any = false;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (object_labels[i] == 0) continue;
    const SuperpixelRef& ref = set.provenance[i];
    const auto a = static_cast<std::size_t>(ref.axis);
    const std::size_t ra = a == 0 ? 1 : 0, ca = a == 2 ? 1 : 2;
    std::array<Interval, 3> fp{};
    fp[a] = {ref.slice, ref.slice + 1};
    fp[ra] = {ref.row * kPatch, std::min((ref.row + 1) * kPatch, shape[ra])};
    fp[ca] = {ref.col * kPatch, std::min((ref.col + 1) * kPatch, shape[ca])};
    for (std::size_t ax = 0; ax < 3; ++ax) {
      lo[ax] = std::min(lo[ax], fp[ax].lo);
      hi[ax] = std::max(hi[ax], fp[ax].hi);
    }
    any = true;
  }
  if (!any) throw NoObjectError("no superpixel is labelled as object");
  return {{Interval{lo[0], hi[0]}, Interval{lo[1], hi[1]}, Interval{lo[2], hi[2]}}};
}

double iou3d(const BBox3D& a, const BBox3D& b) {
  double inter = 1.0;
  for (std::size_t ax = 0; ax < 3; ++ax) {
    const std::size_t lo = std::max(a.axes[ax].lo, b.axes[ax].lo);
    const std::size_t hi = std::min(a.axes[ax].hi, b.axes[ax].hi);
    inter *= hi > lo ? static_cast<double>(hi - lo) : 0.0;
  }
  const double uni =
      static_cast<double>(a.voxel_count()) + static_cast<double>(b.voxel_count()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

BoxError bbox_abs_error(const BBox3D& pred, const BBox3D& truth) {
  BoxError e;
  double extent = 0.0;
  for (std::size_t ax = 0; ax < 3; ++ax) {
    const auto d = [](std::size_t u, std::size_t v) {
      return std::abs(static_cast<double>(u) - static_cast<double>(v));
    };
    e.per_axis[ax] = (d(pred.axes[ax].lo, truth.axes[ax].lo) + d(pred.axes[ax].hi, truth.axes[ax].hi)) / 2.0;
    e.mean += e.per_axis[ax] / 3.0;
    extent += static_cast<double>(truth.axes[ax].length()) / 3.0;
  }
  e.percent_of_extent = extent > 0.0 ? 100.0 * e.mean / extent : 0.0;
  return e;
}

// ---- certainty profiles ---------------------------------------------------------

ProbProfile rotation_certainty_profile(const RotNet& net, const Volume3D& vol, int axis,
                                       const ProfileOptions& opts) {
  if (axis < 0 || axis > 2) throw ValueError("profile: axis must be 0, 1 or 2");
  const std::size_t l = vol.extent(axis);
  if (l < 2) throw ValueError("profile: axis extent must be >= 2");
  if (opts.angles.size() != net.num_classes()) {
    throw ShapeError("profile: angle table does not match the network's classes");
  }
  std::vector<int> probe = opts.probe;
  if (probe.empty()) {
    for (std::size_t c = 0; c < opts.angles.size(); ++c) probe.push_back(static_cast<int>(c));
  }
  for (int c : probe) {
    if (c < 0 || static_cast<std::size_t>(c) >= opts.angles.size()) {
      throw ValueError("profile: probe class outside the angle table");
    }
  }
  const std::size_t trials = opts.trials ? opts.trials : probe.size();

  ProbProfile out{axis, std::vector<double>(l, 0.0)};
  auto work = [&](std::size_t begin, std::size_t end) {
    Tape tape = Tape::inference();
    for (std::size_t idx = begin; idx < end; ++idx) {
      const long nb = std::clamp(static_cast<long>(idx) + opts.sigma_offset, 0L,
                                 static_cast<long>(l) - 1);
      const Slice2D ref = slice_at(vol, axis, idx);
      const Slice2D nbr = slice_at(vol, axis, static_cast<std::size_t>(nb));
      RotBatch batch;
      batch.axis = axis;
      for (std::size_t t = 0; t < trials; ++t) {
        const int c = probe[t % probe.size()];
        auto [a, r] = make_rotation_pair(ref, nbr, opts.angles[static_cast<std::size_t>(c)]);
        batch.reference.push_back(std::move(a));
        batch.rotated.push_back(std::move(r));
        batch.labels.push_back(c);
      }
      const Tensor logits = net.forward_batch(tape, batch);
      const auto p = softmax_rows(logits);
      double acc = 0.0;
      for (std::size_t t = 0; t < trials; ++t) {
        acc += p[t * net.num_classes() + static_cast<std::size_t>(batch.labels[t])];
      }
      out.values[idx] = acc / static_cast<double>(trials);
    }
  };
  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, l));
  if (threads <= 1) {
    work(0, l);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (l + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(l, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0 || window % 2 == 0) throw ValueError("moving_average: window must be odd");
  const std::size_t half = window / 2, n = values.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0, hi = std::min(n, i + half + 1);
    double acc = 0.0;
    for (std::size_t j = lo; j < hi; ++j) acc += values[j];
    out[i] = acc / static_cast<double>(hi - lo);
  }
  return out;
}

Interval longest_run_at_least(std::span<const double> values, double tau) {
  Interval best{0, 0};
  std::size_t start = 0;
  bool in_run = false;
  for (std::size_t i = 0; i <= values.size(); ++i) {
    const bool above = i < values.size() && values[i] >= tau;
    if (above && !in_run) {
      start = i;
      in_run = true;
    } else if (!above && in_run) {
      if (i - start > best.length()) best = {start, i};
      in_run = false;
    }
  }
  return best;
}

BBox3D bbox_from_profiles(const std::array<ProbProfile, 3>& profiles, double tau,
                          std::size_t smooth_window) {
  if (!(tau > 0.0 && tau < 1.0)) throw ValueError("bbox_from_profiles: tau must lie in (0,1)");
  BBox3D box;
  for (std::size_t i = 0; i < 3; ++i) {
    const ProbProfile& p = profiles[i];
    if (p.axis < 0 || p.axis > 2) throw ValueError("bbox_from_profiles: bad profile axis");
    const auto smooth = moving_average(p.values, smooth_window);
    const Interval run = longest_run_at_least(smooth, tau);
    if (run.length() == 0) {
      throw NoObjectError("no slice on axis " + std::to_string(p.axis) +
                          " reaches certainty " + std::to_string(tau));
    }
    box.axes[static_cast<std::size_t>(p.axis)] = run;
  }
  return box;
}

// ---- end-to-end pipelines ---------------------------------------------------------

ClusterLocalization localize_by_clustering(const SortNet& net, const Volume3D& vol,
                                           const ClusterOptions& opts) {
  ClusterLocalization r;
  r.embeddings = standardize(collect_embeddings(net, vol, opts.axis, 0, opts.slice_step));
  r.clusters = dbscan(r.embeddings.vectors, r.embeddings.dim,
                      opts.eps * std::sqrt(static_cast<double>(r.embeddings.dim)), opts.min_pts);
  r.labels = label_background(r.clusters, opts.dense_fraction);
  if (r.labels.degenerate) {
    throw NoObjectError("no cluster holds " + std::to_string(opts.dense_fraction) +
                        " of the superpixels; background cannot be told apart");
  }
  r.classifier = train_linear_classifier(r.embeddings, r.labels.object, opts.classifier);
  r.scores = predict(r.classifier, r.embeddings);
  std::vector<int> object(r.scores.size());
  for (std::size_t i = 0; i < object.size(); ++i) object[i] = r.scores[i] > 0.0 ? 1 : 0;
  r.box = bbox_from_superpixels(r.embeddings, object, vol.shape());
  return r;
}

UncertaintyLocalization localize_by_uncertainty(const RotNet& net, const Volume3D& vol,
                                                const ProfileOptions& opts, double tau,
                                                std::size_t smooth_window) {
  UncertaintyLocalization r;
  for (int a = 0; a < 3; ++a) {
    r.profiles[static_cast<std::size_t>(a)] = rotation_certainty_profile(net, vol, a, opts);
  }
  r.box = bbox_from_profiles(r.profiles, tau, smooth_window);
  return r;
}

// ---- file formats ----------------------------------------------------------------

std::string bbox_to_json(const BBox3D& box) {
  nlohmann::json j;
  j["axes"] = nlohmann::json::array();
  for (const auto& iv : box.axes) j["axes"].push_back({iv.lo, iv.hi});
  return j.dump();
}

BBox3D bbox_from_json(const std::string& text) {
  BBox3D box;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& axes = j.at("axes");
    if (!axes.is_array() || axes.size() != 3) throw FormatError("bbox: 'axes' must list 3 intervals");
    for (std::size_t a = 0; a < 3; ++a) {
      const auto iv = axes[a].get<std::vector<long long>>();
      if (iv.size() != 2 || iv[0] < 0 || iv[1] <= iv[0]) {
        throw FormatError("bbox: axis " + std::to_string(a) + " is not a nonempty [lo,hi) pair");
      }
      box.axes[a] = {static_cast<std::size_t>(iv[0]), static_cast<std::size_t>(iv[1])};
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bbox: malformed JSON: ") + e.what());
  }
  return box;
}

void save_bbox(const BBox3D& box, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << bbox_to_json(box) << '\n';
}

BBox3D load_bbox(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return bbox_from_json(ss.str());
}

void write_profile_csv(const ProbProfile& profile, std::ostream& out) {
  out << "axis,index,prob\n" << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < profile.values.size(); ++i) {
    out << profile.axis << ',' << i << ',' << profile.values[i] << '\n';
  }
}

void save_profile_csv(const ProbProfile& profile, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_profile_csv(profile, out);
}

ProbProfile load_profile_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "axis,index,prob") {
    throw FormatError("profile: missing 'axis,index,prob' header");
  }
  ProbProfile p;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int axis = 0;
    std::size_t index = 0;
    double prob = 0.0;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    if (!(row >> axis >> c1 >> index >> c2 >> prob) || c1 != ',' || c2 != ',' ||
        index != expected) {
      throw FormatError("profile: bad row '" + line + "'");
    }
    p.axis = axis;
    p.values.push_back(prob);
    ++expected;
  }
  return p;
}

}  // namespace volssl
