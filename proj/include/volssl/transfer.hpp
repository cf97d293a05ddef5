#pragma once

// Zero-label localization from pretext-trained networks:
//  - clustering route: superpixel embeddings -> DBSCAN -> dense clusters are
//    background -> (optional) linear classifier -> box;
//  - certainty route: per-slice probability of the applied rotation class on
//    each axis -> thresholded runs -> box.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "volssl/models.hpp"
#include "volssl/volume.hpp"

namespace volssl {

// ---- embeddings ---------------------------------------------------------------

struct SuperpixelRef {
  std::size_t volume = 0;
  int axis = 0;
  std::size_t slice = 0;
  std::size_t row = 0;
  std::size_t col = 0;
};

struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<float> vectors;  // [size(), dim]
  std::vector<SuperpixelRef> provenance;

  std::size_t size() const { return provenance.size(); }
  std::span<const float> at(std::size_t i) const {
    return std::span<const float>(vectors).subspan(i * dim, dim);
  }
  void append(const EmbeddingGrid& grid, std::size_t volume, int axis, std::size_t slice);
  void append(const EmbeddingSet& other);
};

// Embeds every `slice_step`-th slice of `vol` along `axis`.
EmbeddingSet collect_embeddings(const SortNet& net, const Volume3D& vol, int axis,
                                std::size_t volume_id = 0, std::size_t slice_step = 1);

// Per-dimension zero mean, unit variance (variance floored at 1e-8).
EmbeddingSet standardize(const EmbeddingSet& set);

// Applies the mean/std of `reference` to `set`.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const EmbeddingSet& reference);
  EmbeddingSet apply(const EmbeddingSet& set) const;
};

// ---- clustering ---------------------------------------------------------------

inline constexpr int kNoise = -1;
using ClusterLabels = std::vector<int>;

// Euclidean DBSCAN. Core points have >= min_pts neighbors within eps (self
// included); border points join the first cluster that reaches them.
ClusterLabels dbscan(std::span<const float> points, std::size_t dim, double eps,
                     std::size_t min_pts);

struct BackgroundLabels {
  std::vector<int> object;  // 1 = object, 0 = background
  bool degenerate = false;  // no cluster was dense enough to be background
};

// Clusters holding >= dense_fraction * N points are background; everything
// else, noise included, is object. Throws NoObjectError if nothing is object.
BackgroundLabels label_background(const ClusterLabels& labels, double dense_fraction);

// ---- linear classifier --------------------------------------------------------

struct LinearClassifier {
  std::vector<double> weight;
  double bias = 0.0;
};

struct LogisticOptions {
  double tolerance = 1e-5;  // gradient norm
  std::size_t max_iterations = 10000;
  double l2 = 1e-3;
};

// Logistic regression by full-batch gradient descent with a 1/L step.
LinearClassifier train_linear_classifier(const EmbeddingSet& set, std::span<const int> labels,
                                         const LogisticOptions& opts = {});
// Pre-sigmoid margins w.x + b.
std::vector<double> predict(const LinearClassifier& clf, const EmbeddingSet& set);

// ---- boxes ----------------------------------------------------------------------

// Tight box over the voxel footprints of the object superpixels (16x16
// in-plane patch, one slice thick).
BBox3D bbox_from_superpixels(const EmbeddingSet& set, std::span<const int> object_labels,
                             const Volume3D::Extents& shape);

double iou3d(const BBox3D& a, const BBox3D& b);

struct BoxError {
  std::array<double, 3> per_axis{};  // mean |d lo|, |d hi| per axis
  double mean = 0.0;                 // mean over all six endpoints
  double percent_of_extent = 0.0;    // mean / mean truth extent * 100
};
BoxError bbox_abs_error(const BBox3D& pred, const BBox3D& truth);

// ---- certainty profiles ---------------------------------------------------------

struct ProbProfile {
  int axis = 0;
  std::vector<double> values;  // one per slice index
};

struct ProfileOptions {
  std::vector<double> angles{-90, -60, -30, 0, 30, 60, 90};  // the network's label table
  std::vector<int> probe;  // class indices to apply; empty = all
  int sigma_offset = 1;    // neighbor = clamp(index + sigma_offset)
  std::size_t trials = 0;  // pairs per slice; 0 = one per probe angle
  unsigned threads = 0;    // 0 = hardware concurrency
};

ProbProfile rotation_certainty_profile(const RotNet& net, const Volume3D& vol, int axis,
                                       const ProfileOptions& opts);

std::vector<double> moving_average(std::span<const double> values, std::size_t window);
// Longest run of values >= tau; the earliest wins ties. Length 0 when none.
Interval longest_run_at_least(std::span<const double> values, double tau);

BBox3D bbox_from_profiles(const std::array<ProbProfile, 3>& profiles, double tau,
                          std::size_t smooth_window);

// ---- end-to-end pipelines ---------------------------------------------------------

struct ClusterOptions {
  // Radius on the RMS per-dimension distance |x - y| / sqrt(dim) between
  // standardized embeddings, so one setting works across embedding widths.
  double eps = 0.55;
  std::size_t min_pts = 8;
  double dense_fraction = 0.2;
  int axis = 0;
  std::size_t slice_step = 1;
  LogisticOptions classifier;
};

struct ClusterLocalization {
  EmbeddingSet embeddings;  // standardized
  ClusterLabels clusters;
  BackgroundLabels labels;
  LinearClassifier classifier;
  std::vector<double> scores;
  BBox3D box;  // over superpixels the classifier scores as object
};

// Embeddings -> standardize -> DBSCAN -> dense clusters as background ->
// linear classifier on those labels -> box. Throws NoObjectError.
ClusterLocalization localize_by_clustering(const SortNet& net, const Volume3D& vol,
                                           const ClusterOptions& opts = {});

struct UncertaintyLocalization {
  std::array<ProbProfile, 3> profiles;
  BBox3D box;
};

UncertaintyLocalization localize_by_uncertainty(const RotNet& net, const Volume3D& vol,
                                                const ProfileOptions& opts = {}, double tau = 0.5,
                                                std::size_t smooth_window = 5);

// ---- file formats ----------------------------------------------------------------

// {"axes":[[lo,hi],[lo,hi],[lo,hi]]}
std::string bbox_to_json(const BBox3D& box);
BBox3D bbox_from_json(const std::string& text);
void save_bbox(const BBox3D& box, const std::filesystem::path& path);
BBox3D load_bbox(const std::filesystem::path& path);

// "axis,index,prob" with six decimals.
void write_profile_csv(const ProbProfile& profile, std::ostream& out);
void save_profile_csv(const ProbProfile& profile, const std::filesystem::path& path);
ProbProfile load_profile_csv(const std::filesystem::path& path);

}  // namespace volssl
