#include "agile/perception.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "agile/parallel.hpp"
#include "agile/rng.hpp"

namespace agile::perception {
namespace {

namespace fs = std::filesystem;

// Shape frame -> possibly mirrored shape frame -> world -> pixel. Mirroring
// reflects across the vertical centerline of the raster so the part stays in
// the first quadrant.
struct ViewMap {
  const WorldView* view;
  double extent_x;

  Vec2 to_world(const Vec2& p_shape) const {
    Vec2 p = p_shape;
    if (view->mirrored) p.x() = extent_x - p.x();
    return view->pose.apply(p);
  }
  Vec2 to_shape(const Vec2& p_world) const {
    double c = std::cos(view->pose.theta_rad), s = std::sin(view->pose.theta_rad);
    double dx = p_world.x() - view->pose.x_mm, dy = p_world.y() - view->pose.y_mm;
    Vec2 p(c * dx + s * dy, -s * dx + c * dy);
    if (view->mirrored) p.x() = extent_x - p.x();
    return p;
  }
};

bool on_boundary_band(const Observation& obs, int x, int y) {
  bool v = obs.at(x, y);
  if (x == 0 || y == 0 || x == obs.width_px - 1 || y == obs.height_px - 1) return v;
  return v != obs.at(x - 1, y) || v != obs.at(x + 1, y) || v != obs.at(x, y - 1) ||
         v != obs.at(x, y + 1);
}

constexpr int kRadialBins = 16;

double wrap_two_pi(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a;
}

Eigen::VectorXd standardize(const std::vector<double>& f, const AnchorRegressor& model) {
  Eigen::VectorXd z(model.mean.size());
  for (int i = 0; i < z.size(); ++i) z(i) = (f[static_cast<std::size_t>(i)] - model.mean(i)) / model.scale(i);
  return z;
}

std::vector<double> anchor_errors(const AnchorRegressor& model, const FewShotDataset& data,
                                  bool parallel) {
  std::vector<double> err(data.samples.size(), 0.0);
  auto body = [&](std::size_t i) {
    auto obs = predict_anchor(data.samples[i].obs, model);
    err[i] = (obs.anchor - data.samples[i].target_px).norm();
  };
  if (parallel)
    par::for_index(err.size(), body);
  else
    par::serial::for_index(err.size(), body);
  return err;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void write_row(std::ostream& out, const char* key, const Eigen::VectorXd& v) {
  out << key;
  for (int i = 0; i < v.size(); ++i) out << ' ' << format_full(v(i));
  out << '\n';
}

}  // namespace

Observation render_observation(const WorldView& view, const Camera& camera,
                               std::uint64_t noise_seed, double flip_prob) {
  if (view.shape == nullptr || view.shape->polygon().empty())
    throw EmptyMask("render needs a shape with material");
  const auto& shape = *view.shape;
  ViewMap map{&view, shape.width() * shape.cell_mm()};

  for (const Vec2& v : shape.polygon()) {
    Vec2 px = camera.world_to_px(map.to_world(v));
    if (px.x() < 0.0 || px.y() < 0.0 || px.x() > camera.width_px || px.y() > camera.height_px)
      throw ObjectOutOfFrame("outline leaves the image at pixel (" +
                             std::to_string(px.x()) + ", " + std::to_string(px.y()) + ")");
  }

  Observation obs;
  obs.width_px = camera.width_px;
  obs.height_px = camera.height_px;
  obs.camera = camera;
  obs.mask.assign(static_cast<std::size_t>(camera.width_px) * camera.height_px, 0);

  const auto& outer = shape.polygon();
  const auto& holes = shape.holes();
  par::for_index(static_cast<std::size_t>(camera.height_px), [&](std::size_t row) {
    int y = static_cast<int>(row);
    for (int x = 0; x < camera.width_px; ++x) {
      Vec2 world = camera.px_to_world(Vec2(x + 0.5, y + 0.5));
      Vec2 local = map.to_shape(world);
      if (!geometry::point_in_polygon(outer, local)) continue;
      bool in_hole = false;
      for (const auto& h : holes)
        if (geometry::point_in_polygon(h, local)) {
          in_hole = true;
          break;
        }
      if (!in_hole) obs.mask[row * static_cast<std::size_t>(camera.width_px) + x] = 1;
    }
  });

  if (flip_prob > 0.0) {
    // Segmentation edge chatter: only pixels next to the silhouette boundary
    // may flip. One serial row-major pass keeps the draw order fixed.
    Rng rng(noise_seed);
    std::vector<std::size_t> flips;
    for (int y = 0; y < obs.height_px; ++y)
      for (int x = 0; x < obs.width_px; ++x)
        if (on_boundary_band(obs, x, y) && rng.bernoulli(flip_prob))
          flips.push_back(static_cast<std::size_t>(y) * obs.width_px + x);
    for (std::size_t idx : flips) obs.mask[idx] ^= 1;
  }
  return obs;
}

std::vector<double> extract_features(const Observation& obs) {
  double m00 = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < obs.height_px; ++y)
    for (int x = 0; x < obs.width_px; ++x)
      if (obs.at(x, y)) {
        m00 += 1.0;
        sx += x + 0.5;
        sy += y + 0.5;
      }
  if (m00 < 1.0) throw EmptyMask("no set pixels");
  const double cx = sx / m00, cy = sy / m00;

  double mu20 = 0.0, mu11 = 0.0, mu02 = 0.0;
  double mu30 = 0.0, mu21 = 0.0, mu12 = 0.0, mu03 = 0.0;
  for (int y = 0; y < obs.height_px; ++y)
    for (int x = 0; x < obs.width_px; ++x)
      if (obs.at(x, y)) {
        double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        mu20 += dx * dx;
        mu11 += dx * dy;
        mu02 += dy * dy;
        mu30 += dx * dx * dx;
        mu21 += dx * dx * dy;
        mu12 += dx * dy * dy;
        mu03 += dy * dy * dy;
      }

  double theta = 0.5 * std::atan2(2.0 * mu11, mu20 - mu02);
  double ct = std::cos(theta), st = std::sin(theta);
  // The axis angle is only defined up to pi; the sign of the third moment
  // along the axis picks one end. Both transform covariantly under mirror,
  // so the oriented axis of a reflected mask is the reflected axis.
  double skew = mu30 * ct * ct * ct + 3.0 * mu21 * ct * ct * st + 3.0 * mu12 * ct * st * st +
                mu03 * st * st * st;
  if (skew < 0.0) {
    theta += kPi;
    ct = std::cos(theta);
    st = std::sin(theta);
  }

  double a20 = mu20 / m00, a11 = mu11 / m00, a02 = mu02 / m00;
  double tr = a20 + a02, det = a20 * a02 - a11 * a11;
  double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  double lam1 = 0.5 * tr + disc, lam2 = std::max(0.0, 0.5 * tr - disc);
  const double diag = std::hypot(static_cast<double>(obs.width_px),
                                 static_cast<double>(obs.height_px));

  auto eta = [m00](double mu, int order) {
    return mu / std::pow(m00, 1.0 + 0.5 * order);
  };
  double n20 = eta(mu20, 2), n11 = eta(mu11, 2), n02 = eta(mu02, 2);
  double n30 = eta(mu30, 3), n21 = eta(mu21, 3), n12 = eta(mu12, 3), n03 = eta(mu03, 3);

  double h1 = n20 + n02;
  double h2 = (n20 - n02) * (n20 - n02) + 4.0 * n11 * n11;
  double h3 = (n30 - 3.0 * n12) * (n30 - 3.0 * n12) + (3.0 * n21 - n03) * (3.0 * n21 - n03);
  double h4 = (n30 + n12) * (n30 + n12) + (n21 + n03) * (n21 + n03);
  double h5 = (n30 - 3.0 * n12) * (n30 + n12) *
                  ((n30 + n12) * (n30 + n12) - 3.0 * (n21 + n03) * (n21 + n03)) +
              (3.0 * n21 - n03) * (n21 + n03) *
                  (3.0 * (n30 + n12) * (n30 + n12) - (n21 + n03) * (n21 + n03));
  double h6 = (n20 - n02) * ((n30 + n12) * (n30 + n12) - (n21 + n03) * (n21 + n03)) +
              4.0 * n11 * (n30 + n12) * (n21 + n03);
  // Changes sign under reflection; everything else above is blind to it.
  double h7 = (3.0 * n21 - n03) * (n30 + n12) *
                  ((n30 + n12) * (n30 + n12) - 3.0 * (n21 + n03) * (n21 + n03)) -
              (n30 - 3.0 * n12) * (n21 + n03) *
                  (3.0 * (n30 + n12) * (n30 + n12) - (n21 + n03) * (n21 + n03));

  double bins[kRadialBins] = {};
  double r_max = 0.0;
  for (int y = 0; y < obs.height_px; ++y)
    for (int x = 0; x < obs.width_px; ++x) {
      if (!obs.at(x, y) || !on_boundary_band(obs, x, y)) continue;
      double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      double r = std::hypot(dx, dy);
      r_max = std::max(r_max, r);
      double psi = wrap_two_pi(std::atan2(dy, dx) - theta);
      int b = std::min(kRadialBins - 1, static_cast<int>(psi / (2.0 * kPi) * kRadialBins));
      bins[b] = std::max(bins[b], r);
    }

  // Chirality sign: flips under reflection, stable under rotation. Makes the
  // oriented normal below mirror-consistent, so one linear anchor head can
  // serve both faces of the same part.
  double chi = h7 < 0.0 ? -1.0 : 1.0;

  std::vector<double> f;
  f.reserve(kFeatureDim);
  f.push_back(cx / obs.width_px);
  f.push_back(cy / obs.height_px);
  f.push_back(m00 / (static_cast<double>(obs.width_px) * obs.height_px));
  f.push_back(ct);
  f.push_back(st);
  f.push_back(chi * -st);
  f.push_back(chi * ct);
  f.push_back(std::sqrt(lam1) / diag);
  f.push_back(std::sqrt(lam2) / diag);
  for (double v : {n20, n11, n02, n30, n21, n12, n03}) f.push_back(v);
  for (double v : {h1, h2, h3, h4, h5, h6, h7}) f.push_back(v);
  for (double b : bins) f.push_back(r_max > 0.0 ? b / r_max : 0.0);
  return f;
}

std::vector<std::vector<double>> extract_features_batch(const std::vector<Observation>& obs) {
  std::vector<std::vector<double>> out(obs.size());
  par::for_index(obs.size(), [&](std::size_t i) { out[i] = extract_features(obs[i]); });
  return out;
}

namespace serial {
std::vector<std::vector<double>> extract_features_batch(const std::vector<Observation>& obs) {
  std::vector<std::vector<double>> out(obs.size());
  par::serial::for_index(obs.size(), [&](std::size_t i) { out[i] = extract_features(obs[i]); });
  return out;
}
}  // namespace serial

AnchorRegressor fit_anchor_head(const FewShotDataset& data, double lambda) {
  const auto& samples = data.samples;
  if (samples.empty()) throw EmptyMask("empty dataset");
  std::vector<Observation> obs;
  obs.reserve(samples.size());
  for (const auto& s : samples) obs.push_back(s.obs);
  auto feats = extract_features_batch(obs);

  const int n = static_cast<int>(samples.size());
  const int d = kFeatureDim;
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  AnchorRegressor model;
  model.mean = x.colwise().mean().transpose();
  Eigen::MatrixXd centered = x.rowwise() - model.mean.transpose();
  model.scale = (centered.array().square().colwise().sum() / n).sqrt().matrix().transpose();
  for (int j = 0; j < d; ++j)
    if (model.scale(j) < 1e-12) model.scale(j) = 1.0;
  // The anchor channels carry design ranges fixed by construction (centroid in
  // [0, 1], direction components in [-1, 1]). A scale estimated from n
  // annotations carries roughly 1/sqrt(2n) relative noise and can collapse
  // outright on a near-degenerate pair, which blows up held-out z-scores, so
  // it is trusted only above a half-range floor that tightens as annotations
  // accumulate. The diagnostic block keeps its sample scale, which the
  // sign-carrying classifier channels rely on.
  double floor_shrink = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t j = 0; j < kAnchorChannelsX.size(); ++j) {
    double half_range = j == 0 ? 0.5 : 1.0;
    int jx = kAnchorChannelsX[j], jy = kAnchorChannelsY[j];
    model.scale(jx) = std::max(model.scale(jx), half_range * floor_shrink);
    model.scale(jy) = std::max(model.scale(jy), half_range * floor_shrink);
  }
  Eigen::MatrixXd z = centered * model.scale.cwiseInverse().asDiagonal();

  // The anchor is a rigid point of the object, so each of its pixel
  // coordinates is linear in exactly the matching components of the covariant
  // vector channels (centroid, axis, chirality-corrected normal). Regressing
  // on anything more lets a handful of samples be interpolated through raster
  // noise, which destroys generalization; the remaining channels stay in the
  // vector for classification and diagnostics only.
  auto anchor_fit = [&](const std::array<int, 3>& channels, const Eigen::VectorXd& target,
                        double bias) {
    const int ka = static_cast<int>(channels.size());
    Eigen::MatrixXd za(n, ka);
    for (int j = 0; j < ka; ++j) za.col(j) = z.col(channels[static_cast<std::size_t>(j)]);
    Eigen::MatrixXd gram = za.transpose() * za;
    if (lambda <= 0.0) {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
      if (lu.rank() < ka)
        throw DegenerateFeatures("anchor design rank " + std::to_string(lu.rank()) + " < " +
                                 std::to_string(ka) + "; ridge strength required");
    }
    Eigen::MatrixXd a =
        gram + lambda * static_cast<double>(n) * Eigen::MatrixXd::Identity(ka, ka);
    Eigen::VectorXd w =
        Eigen::LDLT<Eigen::MatrixXd>(a).solve(za.transpose() * (target.array() - bias).matrix());
    Eigen::VectorXd full = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < ka; ++j) full(channels[static_cast<std::size_t>(j)]) = w(j);
    return full;
  };

  Eigen::VectorXd tx(n), ty(n), tc(n);
  for (int i = 0; i < n; ++i) {
    tx(i) = samples[static_cast<std::size_t>(i)].target_px.x();
    ty(i) = samples[static_cast<std::size_t>(i)].target_px.y();
    tc(i) = samples[static_cast<std::size_t>(i)].cls == geometry::AffordanceClass::Back ? 1.0 : -1.0;
  }
  model.bx = tx.mean();
  model.by = ty.mean();
  model.bc = tc.mean();
  model.wx = anchor_fit(kAnchorChannelsX, tx, model.bx);
  model.wy = anchor_fit(kAnchorChannelsY, ty, model.by);
  Eigen::MatrixXd a = z.transpose() * z +
                      lambda * static_cast<double>(n) * Eigen::MatrixXd::Identity(d, d);
  model.wc = Eigen::LDLT<Eigen::MatrixXd>(a).solve(z.transpose() * (tc.array() - model.bc).matrix());
  return model;
}

geometry::AffordanceObservation predict_anchor(const Observation& obs,
                                               const AnchorRegressor& model) {
  auto f = extract_features(obs);
  Eigen::VectorXd z = standardize(f, model);
  geometry::AffordanceObservation out;
  out.anchor = Vec2(model.wx.dot(z) + model.bx, model.wy.dot(z) + model.by);
  out.anchor.x() = std::clamp(out.anchor.x(), 0.0, static_cast<double>(obs.width_px));
  out.anchor.y() = std::clamp(out.anchor.y(), 0.0, static_cast<double>(obs.height_px));
  out.unit = geometry::LengthUnit::Pixels;
  out.cls = model.wc.dot(z) + model.bc > 0.0 ? geometry::AffordanceClass::Back
                                             : geometry::AffordanceClass::Front;
  out.timestamp_s = obs.capture_ts_s;
  return out;
}

double pixel_error(const AnchorRegressor& model, const FewShotDataset& data) {
  return mean_of(anchor_errors(model, data, true));
}

namespace serial {
double pixel_error(const AnchorRegressor& model, const FewShotDataset& data) {
  return mean_of(anchor_errors(model, data, false));
}
}  // namespace serial

double class_accuracy(const AnchorRegressor& model, const FewShotDataset& data) {
  if (data.samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : data.samples) {
    auto obs = predict_anchor(s.obs, model);
    if (obs.cls == s.cls) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.samples.size());
}

void Observation::save_pgm_ascii(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mask: " + path);
  out << "P2\n" << width_px << ' ' << height_px << "\n255\n";
  for (int y = 0; y < height_px; ++y) {
    for (int x = 0; x < width_px; ++x) {
      if (x) out << ' ';
      out << (at(x, y) ? 255 : 0);
    }
    out << '\n';
  }
}

Observation Observation::load_pgm_ascii(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read mask: " + path);
  auto next_token = [&in, &path]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw std::runtime_error("truncated mask file: " + path);
  };
  if (next_token() != "P2") throw std::runtime_error("not an ascii pgm: " + path);
  Observation obs;
  obs.width_px = std::stoi(next_token());
  obs.height_px = std::stoi(next_token());
  int maxval = std::stoi(next_token());
  if (obs.width_px <= 0 || obs.height_px <= 0 || maxval <= 0)
    throw std::runtime_error("bad pgm header: " + path);
  std::size_t total = static_cast<std::size_t>(obs.width_px) * obs.height_px;
  obs.mask.resize(total);
  for (std::size_t i = 0; i < total; ++i)
    obs.mask[i] = std::stoi(next_token()) * 2 > maxval ? 1 : 0;
  return obs;
}

FewShotDataset FewShotDataset::load(const std::string& annotation_path) {
  std::ifstream in(annotation_path);
  if (!in) throw std::runtime_error("cannot read annotations: " + annotation_path);
  fs::path base = fs::path(annotation_path).parent_path();
  FewShotDataset data;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string mask_path, cls;
    FewShotSample s;
    if (!(ls >> mask_path >> s.target_px.x() >> s.target_px.y() >> cls))
      throw std::runtime_error("malformed annotation line: " + line);
    s.cls = geometry::AffordanceClass::Front;
    if (cls == "Back")
      s.cls = geometry::AffordanceClass::Back;
    else if (cls != "Front")
      throw std::runtime_error("unknown class label: " + cls);
    s.obs = Observation::load_pgm_ascii((base / mask_path).string());
    data.samples.push_back(std::move(s));
  }
  return data;
}

void FewShotDataset::save(const std::string& annotation_path, const std::string& mask_dir,
                          const std::string& stem) const {
  fs::create_directories(mask_dir);
  fs::path base = fs::path(annotation_path).parent_path();
  std::ofstream out(annotation_path);
  if (!out) throw std::runtime_error("cannot write annotations: " + annotation_path);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::ostringstream name;
    name << stem << '_' << i << ".pgm";
    fs::path mask_file = fs::path(mask_dir) / name.str();
    samples[i].obs.save_pgm_ascii(mask_file.string());
    fs::path rel = fs::relative(mask_file, base.empty() ? fs::path(".") : base);
    out << rel.generic_string() << ' ' << format_full(samples[i].target_px.x()) << ' '
        << format_full(samples[i].target_px.y()) << ' '
        << (samples[i].cls == geometry::AffordanceClass::Back ? "Back" : "Front") << '\n';
  }
}

void AnchorRegressor::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model: " + path);
  out << "dim " << mean.size() << '\n';
  write_row(out, "mean", mean);
  write_row(out, "scale", scale);
  write_row(out, "wx", wx);
  write_row(out, "wy", wy);
  write_row(out, "wc", wc);
  out << "b " << format_full(bx) << ' ' << format_full(by) << ' ' << format_full(bc) << '\n';
}

AnchorRegressor AnchorRegressor::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read model: " + path);
  std::string key;
  int dim = 0;
  if (!(in >> key >> dim) || key != "dim" || dim <= 0)
    throw std::runtime_error("bad model header: " + path);
  AnchorRegressor model;
  auto read_row = [&](const char* want, Eigen::VectorXd& v) {
    std::string k;
    in >> k;
    if (k != want) throw std::runtime_error("expected row " + std::string(want) + ": " + path);
    v.resize(dim);
    for (int i = 0; i < dim; ++i)
      if (!(in >> v(i))) throw std::runtime_error("truncated row " + std::string(want));
  };
  read_row("mean", model.mean);
  read_row("scale", model.scale);
  read_row("wx", model.wx);
  read_row("wy", model.wy);
  read_row("wc", model.wc);
  in >> key;
  if (key != "b" || !(in >> model.bx >> model.by >> model.bc))
    throw std::runtime_error("bad model bias row: " + path);
  return model;
}

}  // namespace agile::perception
