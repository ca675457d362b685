#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "agile/common.hpp"
#include "agile/geometry.hpp"

namespace agile::perception {

struct EmptyMask : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ObjectOutOfFrame : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateFeatures : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Orthographic top camera: world mm to pixel, y flipped so row 0 is the top
// of the image.
struct Camera {
  int width_px = 224;
  int height_px = 224;
  double px_per_mm = 0.5;
  Vec2 center_mm = Vec2::Zero();  // world point at the image center

  Vec2 world_to_px(const Vec2& p_mm) const {
    return Vec2(0.5 * width_px + (p_mm.x() - center_mm.x()) * px_per_mm,
                0.5 * height_px - (p_mm.y() - center_mm.y()) * px_per_mm);
  }
  Vec2 px_to_world(const Vec2& px) const {
    return Vec2(center_mm.x() + (px.x() - 0.5 * width_px) / px_per_mm,
                center_mm.y() - (px.y() - 0.5 * height_px) / px_per_mm);
  }
};

struct Observation {
  std::vector<std::uint8_t> mask;  // row major, row 0 at the top
  int width_px = 224;
  int height_px = 224;
  long frame_id = 0;
  double capture_ts_s = 0.0;
  Camera camera;

  bool at(int x, int y) const { return mask[static_cast<std::size_t>(y) * width_px + x] != 0; }
  void save_pgm_ascii(const std::string& path) const;
  static Observation load_pgm_ascii(const std::string& path);
};

// What the camera sees: a shape at a planar pose, mirrored when the part
// lies on its face.
struct WorldView {
  const geometry::PlanarShape* shape = nullptr;
  geometry::Se2 pose;
  bool mirrored = false;
};

// Binary silhouette render: pixel centers inside the (posed, possibly
// mirrored) outline. flip_prob flips boundary band pixels with the given
// seeded probability.
Observation render_observation(const WorldView& view, const Camera& camera,
                               std::uint64_t noise_seed = 0, double flip_prob = 0.0);

constexpr int kFeatureDim = 39;

// Channels that move like a rigid body point under planar motion and
// mirroring: normalized centroid, principal axis direction, and the
// chirality-corrected normal. They are components of image-plane vectors, so
// each anchor coordinate reads only the matching components: x from the
// x-components, y from the y-components.
inline constexpr std::array<int, 3> kAnchorChannelsX{0, 3, 5};
inline constexpr std::array<int, 3> kAnchorChannelsY{1, 4, 6};

// Fixed-length silhouette descriptor: centroid, area fraction, oriented
// principal axis plus its chirality-oriented normal, second and third order
// normalized moments, the seven rotation invariants, and a 16 bin radial
// boundary profile.
std::vector<double> extract_features(const Observation& obs);

namespace serial {
std::vector<std::vector<double>> extract_features_batch(const std::vector<Observation>& obs);
}
std::vector<std::vector<double>> extract_features_batch(const std::vector<Observation>& obs);

struct FewShotSample {
  Observation obs;
  Vec2 target_px = Vec2::Zero();
  geometry::AffordanceClass cls = geometry::AffordanceClass::Front;
};

struct FewShotDataset {
  std::vector<FewShotSample> samples;

  // Annotation file: one line per sample, "mask_path target_x_px target_y_px
  // cls", paths relative to the annotation file.
  static FewShotDataset load(const std::string& annotation_path);
  void save(const std::string& annotation_path, const std::string& mask_dir,
            const std::string& stem) const;
};

// Ridge regression heads on standardized features: two for the anchor pixel,
// one linear classifier for the face label.
struct AnchorRegressor {
  Eigen::VectorXd mean;     // feature standardization
  Eigen::VectorXd scale;
  Eigen::VectorXd wx, wy, wc;
  double bx = 0.0, by = 0.0, bc = 0.0;

  void save(const std::string& path) const;
  static AnchorRegressor load(const std::string& path);
};

// Closed form fit; lambda is the ridge strength. lambda = 0 on degenerate
// features throws DegenerateFeatures.
AnchorRegressor fit_anchor_head(const FewShotDataset& data, double lambda = 1e-3);

geometry::AffordanceObservation predict_anchor(const Observation& obs,
                                               const AnchorRegressor& model);

// Mean anchor error in pixels over a dataset.
double pixel_error(const AnchorRegressor& model, const FewShotDataset& data);
namespace serial {
double pixel_error(const AnchorRegressor& model, const FewShotDataset& data);
}

// Fraction of correct face labels.
double class_accuracy(const AnchorRegressor& model, const FewShotDataset& data);

}  // namespace agile::perception
