#include "vsm/arm_world.hpp"

#include "vsm/image_io.hpp"
#include "vsm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vsm {

namespace {

constexpr double kDegree = kJointLimit / 90.0;

struct Vec2 {
  double x, y;
};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Scene coordinates of a pixel center; y grows upward, row 0 is the top.
Vec2 pixel_center(Eigen::Index r, Eigen::Index c, Eigen::Index h, Eigen::Index w) {
  return {(static_cast<double>(c) + 0.5) / static_cast<double>(w),
          (static_cast<double>(h) - static_cast<double>(r) - 0.5) / static_cast<double>(h)};
}

// Distance parameters of point p against segment a-b: squared distance and
// the clamped projection parameter t in [0,1].
void segment_distance(const Vec2& p, const Vec2& a, const Vec2& b, double& dist_sq, double& t) {
  const double abx = b.x - a.x, aby = b.y - a.y;
  const double len_sq = abx * abx + aby * aby;
  t = len_sq > 0 ? std::min(1.0, std::max(0.0, ((p.x - a.x) * abx + (p.y - a.y) * aby) / len_sq))
                 : 0.0;
  const double dx = p.x - (a.x + t * abx), dy = p.y - (a.y + t * aby);
  dist_sq = dx * dx + dy * dy;
}

struct PixelBox {
  Eigen::Index r_lo, r_hi, c_lo, c_hi;
  bool empty() const { return r_lo > r_hi || c_lo > c_hi; }
};

// Pixel bounding box of a scene-space rectangle, clipped to the frame.
PixelBox scene_box(double x_lo, double x_hi, double y_lo, double y_hi, Eigen::Index h,
                   Eigen::Index w) {
  PixelBox box;
  box.c_lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(x_lo * w - 1.0)));
  box.c_hi = std::min<Eigen::Index>(w - 1, static_cast<Eigen::Index>(std::ceil(x_hi * w + 1.0)));
  box.r_lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor((1.0 - y_hi) * h - 1.0)));
  box.r_hi = std::min<Eigen::Index>(h - 1, static_cast<Eigen::Index>(std::ceil((1.0 - y_lo) * h + 1.0)));
  return box;
}

struct Capsule {
  Vec2 a, b;
  double radius;
};

std::array<Capsule, 4> link_capsules(const ArmModel& model, const JointPositions& joints) {
  std::array<Capsule, 4> capsules;
  for (int k = 0; k < 4; ++k)
    capsules[k] = {{joints(k, 0), joints(k, 1)},
                   {joints(k + 1, 0), joints(k + 1, 1)},
                   model.link_widths[k] / 2.0};
  return capsules;
}

// Reusable silhouette raster with a dirty bounding box, so the pose fitter
// can score thousands of candidates without reallocating.
struct Raster {
  Mask mask;
  Eigen::Index r_lo = 0, r_hi = -1, c_lo = 0, c_hi = -1;
  std::int64_t count = 0;
};

void rasterize_silhouette(const ArmModel& model, const Pose& pose, Eigen::Index h, Eigen::Index w,
                          Raster& out) {
  if (out.mask.rows() != h || out.mask.cols() != w) {
    out.mask = Mask::Zero(h, w);
  } else if (out.r_hi >= out.r_lo) {
    out.mask.block(out.r_lo, out.c_lo, out.r_hi - out.r_lo + 1, out.c_hi - out.c_lo + 1).setZero();
  }
  out.count = 0;
  out.r_lo = h;
  out.r_hi = -1;
  out.c_lo = w;
  out.c_hi = -1;

  const JointPositions joints = forward_kinematics(model, pose);
  for (const Capsule& cap : link_capsules(model, joints)) {
    const PixelBox box =
        scene_box(std::min(cap.a.x, cap.b.x) - cap.radius, std::max(cap.a.x, cap.b.x) + cap.radius,
                  std::min(cap.a.y, cap.b.y) - cap.radius, std::max(cap.a.y, cap.b.y) + cap.radius,
                  h, w);
    if (box.empty()) continue;
    const double rad_sq = cap.radius * cap.radius;
    for (Eigen::Index r = box.r_lo; r <= box.r_hi; ++r) {
      for (Eigen::Index c = box.c_lo; c <= box.c_hi; ++c) {
        if (out.mask(r, c)) continue;
        double dist_sq, t;
        segment_distance(pixel_center(r, c, h, w), cap.a, cap.b, dist_sq, t);
        if (dist_sq <= rad_sq) {
          out.mask(r, c) = 1;
          ++out.count;
          out.r_lo = std::min(out.r_lo, r);
          out.r_hi = std::max(out.r_hi, r);
          out.c_lo = std::min(out.c_lo, c);
          out.c_hi = std::max(out.c_hi, c);
        }
      }
    }
  }
}

// Fused rasterize-and-score: IoU of the candidate silhouette against the
// observed mask, counting overlap while pixels are set.
double silhouette_iou(const ArmModel& model, const Pose& pose, const Mask& observed,
                      std::int64_t observed_count, Raster& scratch) {
  const Eigen::Index h = observed.rows(), w = observed.cols();
  if (scratch.mask.rows() != h || scratch.mask.cols() != w) {
    scratch.mask = Mask::Zero(h, w);
  } else if (scratch.r_hi >= scratch.r_lo) {
    scratch.mask
        .block(scratch.r_lo, scratch.c_lo, scratch.r_hi - scratch.r_lo + 1,
               scratch.c_hi - scratch.c_lo + 1)
        .setZero();
  }
  scratch.count = 0;
  scratch.r_lo = h;
  scratch.r_hi = -1;
  scratch.c_lo = w;
  scratch.c_hi = -1;

  std::int64_t tp = 0;
  const JointPositions joints = forward_kinematics(model, pose);
  for (const Capsule& cap : link_capsules(model, joints)) {
    const PixelBox box =
        scene_box(std::min(cap.a.x, cap.b.x) - cap.radius, std::max(cap.a.x, cap.b.x) + cap.radius,
                  std::min(cap.a.y, cap.b.y) - cap.radius, std::max(cap.a.y, cap.b.y) + cap.radius,
                  h, w);
    if (box.empty()) continue;
    const double rad_sq = cap.radius * cap.radius;
    for (Eigen::Index r = box.r_lo; r <= box.r_hi; ++r) {
      for (Eigen::Index c = box.c_lo; c <= box.c_hi; ++c) {
        if (scratch.mask(r, c)) continue;
        double dist_sq, t;
        segment_distance(pixel_center(r, c, h, w), cap.a, cap.b, dist_sq, t);
        if (dist_sq <= rad_sq) {
          scratch.mask(r, c) = 1;
          ++scratch.count;
          tp += observed(r, c) != 0;
          scratch.r_lo = std::min(scratch.r_lo, r);
          scratch.r_hi = std::max(scratch.r_hi, r);
          scratch.c_lo = std::min(scratch.c_lo, c);
          scratch.c_hi = std::max(scratch.c_hi, c);
        }
      }
    }
  }
  if (scratch.count == 0) return 0.0;
  const std::int64_t uni = scratch.count + observed_count - tp;
  return uni > 0 ? static_cast<double>(tp) / static_cast<double>(uni) : 1.0;
}

// --- backdrop shapes ---------------------------------------------------------

void fill_disk(Image& img, double cx, double cy, double radius, const std::array<double, 3>& rgb) {
  const Eigen::Index h = img.height(), w = img.width();
  const PixelBox box = scene_box(cx - radius, cx + radius, cy - radius, cy + radius, h, w);
  if (box.empty()) return;
  const double rad_sq = radius * radius;
  for (Eigen::Index r = box.r_lo; r <= box.r_hi; ++r)
    for (Eigen::Index c = box.c_lo; c <= box.c_hi; ++c) {
      const Vec2 p = pixel_center(r, c, h, w);
      const double dx = p.x - cx, dy = p.y - cy;
      if (dx * dx + dy * dy <= rad_sq)
        for (int ch = 0; ch < 3; ++ch) img.planes[ch](r, c) = rgb[ch];
    }
}

void fill_ellipse(Image& img, double cx, double cy, double semi_a, double semi_b, double angle,
                  const std::array<double, 3>& rgb) {
  const Eigen::Index h = img.height(), w = img.width();
  const double reach = std::max(semi_a, semi_b);
  const PixelBox box = scene_box(cx - reach, cx + reach, cy - reach, cy + reach, h, w);
  if (box.empty()) return;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (Eigen::Index r = box.r_lo; r <= box.r_hi; ++r)
    for (Eigen::Index c = box.c_lo; c <= box.c_hi; ++c) {
      const Vec2 p = pixel_center(r, c, h, w);
      const double dx = p.x - cx, dy = p.y - cy;
      const double u = (ca * dx + sa * dy) / semi_a;
      const double v = (-sa * dx + ca * dy) / semi_b;
      if (u * u + v * v <= 1.0)
        for (int ch = 0; ch < 3; ++ch) img.planes[ch](r, c) = rgb[ch];
    }
}

void fill_rect(Image& img, double cx, double cy, double half_w, double half_h,
               const std::array<double, 3>& rgb) {
  const Eigen::Index h = img.height(), w = img.width();
  const PixelBox box = scene_box(cx - half_w, cx + half_w, cy - half_h, cy + half_h, h, w);
  if (box.empty()) return;
  for (Eigen::Index r = box.r_lo; r <= box.r_hi; ++r)
    for (Eigen::Index c = box.c_lo; c <= box.c_hi; ++c) {
      const Vec2 p = pixel_center(r, c, h, w);
      if (std::abs(p.x - cx) <= half_w && std::abs(p.y - cy) <= half_h)
        for (int ch = 0; ch < 3; ++ch) img.planes[ch](r, c) = rgb[ch];
    }
}

// Backdrop colors stay in [0.2, 0.9]: comfortably darker than the white base
// disk and lighter than the near-black links.
std::array<double, 3> jitter_color(Rng& rng, const std::array<double, 3>& base, double amount) {
  std::array<double, 3> out;
  for (int i = 0; i < 3; ++i)
    out[i] = std::min(0.9, std::max(0.2, base[i] + rng.uniform(-amount, amount)));
  return out;
}

void fill_flat(Image& img, const std::array<double, 3>& rgb) {
  for (int ch = 0; ch < 3; ++ch) img.planes[ch].setConstant(rgb[ch]);
}

void draw_pigeon(Image& img, Rng& rng, double shade) {
  const double cx = rng.uniform(0.15, 0.85);
  const double cy = rng.uniform(0.62, 0.85);
  const double tilt = rng.uniform(-0.3, 0.3);
  const std::array<double, 3> body{shade, shade, shade + 0.02};
  fill_ellipse(img, cx, cy, 0.085, 0.05, tilt, body);
  const double hx = cx + 0.085 * std::cos(tilt), hy = cy + 0.05 + 0.02;
  const std::array<double, 3> head{shade - 0.03, shade - 0.03, shade - 0.01};
  fill_disk(img, hx, hy, 0.03, head);
}

}  // namespace

void ArmModel::validate() const {
  for (double v : link_lengths)
    if (!(v > 0)) throw std::invalid_argument("arm model: link lengths must be > 0");
  for (double v : link_widths)
    if (!(v > 0)) throw std::invalid_argument("arm model: link widths must be > 0");
  if (!(base_radius > 0)) throw std::invalid_argument("arm model: base radius must be > 0");
  if (base.x() - base_radius < 0 || base.x() + base_radius > 1 || base.y() - base_radius < 0 ||
      base.y() + base_radius > 1)
    throw std::invalid_argument("arm model: base disk exits the unit scene");
  double reach = base.y();
  for (double v : link_lengths) reach += v;
  if (reach + link_widths[3] / 2.0 > 1.0)
    throw std::invalid_argument("arm model: vertically extended arm exits the unit scene");
}

void Pose::validate() const {
  for (int i = 0; i < 4; ++i)
    if (!(std::abs(angles(i)) <= kJointLimit + 1e-12))
      throw std::invalid_argument("pose: joint angle outside +-90 degrees");
}

std::string Background::name() const {
  switch (kind) {
    case BackgroundKind::White: return "white";
    case BackgroundKind::Leaves: return "leaves";
    case BackgroundKind::PigeonsGray: return "pigeons_gray";
    case BackgroundKind::PigeonsBlack: return "pigeons_black";
    case BackgroundKind::LabClutter: return "lab_clutter";
    case BackgroundKind::Procedural: return "procedural";
  }
  return "?";
}

Background Background::parse(const std::string& name, std::uint64_t seed) {
  Background bg;
  bg.seed = seed;
  if (name == "white")
    bg.kind = BackgroundKind::White;
  else if (name == "leaves")
    bg.kind = BackgroundKind::Leaves;
  else if (name == "pigeons_gray")
    bg.kind = BackgroundKind::PigeonsGray;
  else if (name == "pigeons_black")
    bg.kind = BackgroundKind::PigeonsBlack;
  else if (name == "lab_clutter")
    bg.kind = BackgroundKind::LabClutter;
  else if (name == "procedural")
    bg.kind = BackgroundKind::Procedural;
  else
    throw std::invalid_argument("background: unknown kind '" + name + "'");
  return bg;
}

JointPositions forward_kinematics(const ArmModel& model, const Pose& pose) {
  JointPositions joints;
  joints.row(0) = model.base.transpose();
  double cumulative = 0.0;
  for (int k = 0; k < 4; ++k) {
    cumulative += pose.angles(k);
    joints(k + 1, 0) = joints(k, 0) + model.link_lengths[k] * std::sin(cumulative);
    joints(k + 1, 1) = joints(k, 1) + model.link_lengths[k] * std::cos(cumulative);
  }
  return joints;
}

bool pose_in_frame(const ArmModel& model, const Pose& pose) {
  const JointPositions joints = forward_kinematics(model, pose);
  for (int k = 0; k < 4; ++k) {
    const double rad = model.link_widths[k] / 2.0;
    for (int e = 0; e < 2; ++e) {
      const double x = joints(k + e, 0), y = joints(k + e, 1);
      if (x < rad || x > 1 - rad || y < rad || y > 1 - rad) return false;
    }
  }
  return true;
}

Image render_background(const Background& bg, int width, int height) {
  if (width < 8 || height < 8) throw std::invalid_argument("background: size too small");
  Image img(height, width, 3, 1.0);
  Rng rng(bg.seed);
  switch (bg.kind) {
    case BackgroundKind::White:
      break;
    case BackgroundKind::Leaves: {
      fill_flat(img, {0.62, 0.66, 0.52});
      const std::array<std::array<double, 3>, 6> palette{{{0.22, 0.50, 0.24},
                                                          {0.30, 0.60, 0.28},
                                                          {0.45, 0.62, 0.25},
                                                          {0.62, 0.58, 0.22},
                                                          {0.55, 0.40, 0.22},
                                                          {0.70, 0.65, 0.30}}};
      for (int i = 0; i < 130; ++i) {
        const double cx = rng.uniform(), cy = rng.uniform();
        const double a = rng.uniform(0.03, 0.12), b = rng.uniform(0.015, 0.06);
        const double angle = rng.uniform(0.0, 3.14159265358979323846);
        fill_ellipse(img, cx, cy, a, b, angle,
                     jitter_color(rng, palette[rng.uniform_index(palette.size())], 0.06));
      }
      break;
    }
    case BackgroundKind::PigeonsGray:
    case BackgroundKind::PigeonsBlack: {
      fill_flat(img, {0.74, 0.76, 0.78});
      fill_rect(img, 0.5, 0.54, 0.5, 0.04, {0.32, 0.30, 0.28});  // roof line
      const double shade = bg.kind == BackgroundKind::PigeonsGray ? 0.44 : 0.24;
      draw_pigeon(img, rng, shade + rng.uniform(-0.02, 0.02));
      draw_pigeon(img, rng, shade + rng.uniform(-0.02, 0.02));
      break;
    }
    case BackgroundKind::LabClutter: {
      fill_flat(img, {0.80, 0.79, 0.76});
      const std::array<std::array<double, 3>, 8> palette{{{0.25, 0.25, 0.27},
                                                          {0.35, 0.35, 0.35},
                                                          {0.50, 0.50, 0.52},
                                                          {0.65, 0.63, 0.60},
                                                          {0.55, 0.30, 0.22},
                                                          {0.25, 0.35, 0.55},
                                                          {0.60, 0.55, 0.30},
                                                          {0.30, 0.45, 0.35}}};
      for (int i = 0; i < 14; ++i) {
        const double cx = rng.uniform(), cy = rng.uniform();
        fill_rect(img, cx, cy, rng.uniform(0.03, 0.16), rng.uniform(0.03, 0.16),
                  jitter_color(rng, palette[rng.uniform_index(palette.size())], 0.05));
      }
      break;
    }
    case BackgroundKind::Procedural: {
      fill_flat(img, {0.70, 0.72, 0.74});
      const std::array<std::array<double, 3>, 6> palette{{{0.25, 0.40, 0.55},
                                                          {0.55, 0.35, 0.30},
                                                          {0.35, 0.55, 0.35},
                                                          {0.60, 0.60, 0.35},
                                                          {0.45, 0.30, 0.50},
                                                          {0.40, 0.40, 0.42}}};
      for (int i = 0; i < 40; ++i)
        fill_ellipse(img, rng.uniform(), rng.uniform(), rng.uniform(0.02, 0.10),
                     rng.uniform(0.015, 0.06), rng.uniform(0.0, 3.14159265358979323846),
                     jitter_color(rng, palette[rng.uniform_index(palette.size())], 0.06));
      for (int i = 0; i < 8; ++i)
        fill_rect(img, rng.uniform(), rng.uniform(), rng.uniform(0.02, 0.12),
                  rng.uniform(0.02, 0.12),
                  jitter_color(rng, palette[rng.uniform_index(palette.size())], 0.06));
      break;
    }
  }
  return img;
}

RenderResult render(const ArmModel& model, const Pose& pose, const Image& background) {
  model.validate();
  pose.validate();
  if (background.channels() != 3)
    throw std::invalid_argument("render: background must be an RGB image");
  if (!pose_in_frame(model, pose)) throw std::invalid_argument("render: arm exits frame");

  const Eigen::Index h = background.height(), w = background.width();
  RenderResult out;
  out.image = background;

  fill_disk(out.image, model.base.x(), model.base.y(), model.base_radius, {0.97, 0.97, 0.97});

  const JointPositions joints = forward_kinematics(model, pose);
  const auto capsules = link_capsules(model, joints);
  out.mask = Mask::Zero(h, w);
  for (int k = 0; k < 4; ++k) {
    const Capsule& cap = capsules[k];
    const double shade = 0.05 + 0.035 * k;  // slight per-link shading, all near-black
    const PixelBox box =
        scene_box(std::min(cap.a.x, cap.b.x) - cap.radius, std::max(cap.a.x, cap.b.x) + cap.radius,
                  std::min(cap.a.y, cap.b.y) - cap.radius, std::max(cap.a.y, cap.b.y) + cap.radius,
                  h, w);
    if (box.empty()) continue;
    const double rad_sq = cap.radius * cap.radius;
    for (Eigen::Index r = box.r_lo; r <= box.r_hi; ++r)
      for (Eigen::Index c = box.c_lo; c <= box.c_hi; ++c) {
        double dist_sq, t;
        segment_distance(pixel_center(r, c, h, w), cap.a, cap.b, dist_sq, t);
        if (dist_sq <= rad_sq) {
          out.mask(r, c) = 1;
          const double v = clamp01(shade + 0.02 * t);
          for (int ch = 0; ch < 3; ++ch) out.image.planes[ch](r, c) = v;
        }
      }
  }
  return out;
}

Mask render_mask(const ArmModel& model, const Pose& pose, int width, int height) {
  Raster raster;
  rasterize_silhouette(model, pose, height, width, raster);
  return raster.mask;
}

int train_count(int n, double train_fraction) {
  return static_cast<int>(std::lround(n * train_fraction));
}

CorpusManifest generate_corpus(const ArmModel& model, int n, double train_fraction,
                               const Background& bg, std::uint64_t seed, int width, int height,
                               const std::string& out_dir) {
  model.validate();
  if (n < 2) throw std::invalid_argument("generate_corpus: n must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("generate_corpus: train fraction must be in (0,1)");
  std::filesystem::create_directories(out_dir);

  const Image backdrop = render_background(bg, width, height);
  CorpusManifest manifest;
  manifest.reserve(n);
  char name[64];
  for (int i = 0; i < n; ++i) {
    const std::uint64_t entry_seed = derive_seed(seed, "pose", static_cast<std::uint64_t>(i));
    Rng rng(entry_seed);
    Pose pose;
    int attempts = 0;
    do {
      for (int j = 0; j < 4; ++j) pose.angles(j) = rng.uniform(-kJointLimit, kJointLimit);
      if (++attempts > 10000)
        throw std::runtime_error("generate_corpus: could not sample an in-frame pose");
    } while (!pose_in_frame(model, pose));

    RenderResult rendered = render(model, pose, backdrop);
    CorpusEntry entry;
    entry.index = i;
    entry.pose = pose;
    std::snprintf(name, sizeof name, "image_%05d.ppm", i);
    entry.image_path = name;
    std::snprintf(name, sizeof name, "mask_%05d.pgm", i);
    entry.mask_path = name;
    entry.bg_kind = bg.name();
    entry.seed = entry_seed;
    save_image(rendered.image, out_dir + "/" + entry.image_path);
    save_mask(rendered.mask, out_dir + "/" + entry.mask_path);
    manifest.push_back(std::move(entry));
  }
  save_manifest(manifest, out_dir + "/manifest.csv");
  return manifest;
}

void save_manifest(const CorpusManifest& manifest, const std::string& csv_path) {
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw std::runtime_error(csv_path + ": cannot open for writing");
  out << "index,theta1,theta2,theta3,theta4,image_path,mask_path,bg_kind,seed\n";
  char buf[256];
  for (const auto& e : manifest) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%s,%s,%s,%llu\n", e.index,
                  e.pose.angles(0), e.pose.angles(1), e.pose.angles(2), e.pose.angles(3),
                  e.image_path.c_str(), e.mask_path.c_str(), e.bg_kind.c_str(),
                  static_cast<unsigned long long>(e.seed));
    out << buf;
  }
  if (!out) throw std::runtime_error(csv_path + ": write failed");
}

CorpusManifest load_manifest(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error(csv_path + ": cannot open for reading");
  std::string line;
  if (!std::getline(in, line) || line.rfind("index,", 0) != 0)
    throw std::runtime_error(csv_path + ": not a corpus manifest");
  CorpusManifest manifest;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    CorpusEntry e;
    auto next = [&]() {
      if (!std::getline(ss, field, ',')) throw std::runtime_error(csv_path + ": short row");
      return field;
    };
    e.index = std::stoi(next());
    for (int j = 0; j < 4; ++j) e.pose.angles(j) = std::stod(next());
    e.image_path = next();
    e.mask_path = next();
    e.bg_kind = next();
    e.seed = std::stoull(next());
    manifest.push_back(std::move(e));
  }
  return manifest;
}

PoseFit fit_arm_pose(const Mask& observed, const ArmModel& model) {
  model.validate();
  const std::int64_t observed_count = (observed != 0).count();
  if (observed_count == 0) throw std::invalid_argument("fit_arm_pose: empty mask");
  const Eigen::Index h = observed.rows(), w = observed.cols();

  Raster scratch;
  Pose pose;
  double best = -1.0;

  auto score = [&](const Pose& candidate) {
    return silhouette_iou(model, candidate, observed, observed_count, scratch);
  };

  // Coarse 15-degree stage. Joint angles are cumulative along the chain, so
  // adjacent joints couple strongly; sweep exhaustive pair grids down the
  // chain. The proximal pair dominates the silhouette but can be ambiguous on
  // folded poses, so its best few grid cells each seed a full coarse chain and
  // the strongest finished candidate wins.
  struct Seed {
    double score;
    int first, second;  // degrees
  };
  std::array<Seed, 4> seeds;
  seeds.fill({-1.0, 0, 0});
  {
    Pose candidate;
    for (int d1 = -90; d1 <= 90; d1 += 15) {
      candidate.angles(0) = d1 * kDegree;
      for (int d2 = -90; d2 <= 90; d2 += 15) {
        candidate.angles(1) = d2 * kDegree;
        const double s = score(candidate);
        for (std::size_t k = 0; k < seeds.size(); ++k) {
          if (s > seeds[k].score) {
            for (std::size_t m = seeds.size() - 1; m > k; --m) seeds[m] = seeds[m - 1];
            seeds[k] = {s, d1, d2};
            break;
          }
        }
      }
    }
  }

  auto coarse_chain = [&](const Seed& seed, double& chain_score) {
    Pose chain;
    chain.angles(0) = seed.first * kDegree;
    chain.angles(1) = seed.second * kDegree;
    chain_score = -1.0;
    auto pair_grid = [&](int a, int b) {
      Pose candidate = chain;
      double best_a = chain.angles(a), best_b = chain.angles(b);
      for (int da = -90; da <= 90; da += 15) {
        candidate.angles(a) = da * kDegree;
        for (int db = -90; db <= 90; db += 15) {
          candidate.angles(b) = db * kDegree;
          const double s = score(candidate);
          if (s > chain_score) {
            chain_score = s;
            best_a = candidate.angles(a);
            best_b = candidate.angles(b);
          }
        }
      }
      chain.angles(a) = best_a;
      chain.angles(b) = best_b;
    };
    pair_grid(1, 2);
    pair_grid(2, 3);
    pair_grid(0, 1);
    return chain;
  };

  for (const Seed& seed : seeds) {
    if (seed.score < 0.0) continue;
    double chain_score = -1.0;
    const Pose chain = coarse_chain(seed, chain_score);
    if (chain_score > best) {
      best = chain_score;
      pose = chain;
    }
  }

  // Local refinement: exhaustive small grids over each adjacent joint pair
  // around the incumbent (single-joint and counter-rotated moves are special
  // cases). The rasterized-IoU landscape is a staircase, so only moves that
  // strictly improve are taken, iterating to a fixed point.
  auto refine = [&](double step_deg, int range) {
    const double step = step_deg * kDegree;
    for (int pass = 0; pass < 12; ++pass) {
      bool changed = false;
      for (int j = 0; j < 3; ++j) {
        const Pose incumbent = pose;
        for (int m1 = -range; m1 <= range; ++m1) {
          const double a = incumbent.angles(j) + m1 * step;
          if (std::abs(a) > kJointLimit) continue;
          for (int m2 = -range; m2 <= range; ++m2) {
            if (m1 == 0 && m2 == 0) continue;
            const double b = incumbent.angles(j + 1) + m2 * step;
            if (std::abs(b) > kJointLimit) continue;
            Pose candidate = incumbent;
            candidate.angles(j) = a;
            candidate.angles(j + 1) = b;
            const double s = score(candidate);
            if (s > best) {
              best = s;
              pose = candidate;
              changed = true;
            }
          }
        }
      }
      if (!changed) break;
    }
  };
  refine(3.0, 6);
  refine(1.0, 5);

  // Exhaustive box over all four joints; the pairwise walks above can stall
  // on near-equal ridges that only a joint move over every angle escapes.
  auto polish = [&](double step_deg, int range, int passes) {
    const double step = step_deg * kDegree;
    for (int pass = 0; pass < passes; ++pass) {
      const Pose incumbent = pose;
      bool changed = false;
      Pose candidate;
      for (int m0 = -range; m0 <= range; ++m0)
        for (int m1 = -range; m1 <= range; ++m1)
          for (int m2 = -range; m2 <= range; ++m2)
            for (int m3 = -range; m3 <= range; ++m3) {
              candidate.angles << incumbent.angles(0) + m0 * step,
                  incumbent.angles(1) + m1 * step, incumbent.angles(2) + m2 * step,
                  incumbent.angles(3) + m3 * step;
              if ((candidate.angles.array().abs() > kJointLimit).any()) continue;
              const double s = score(candidate);
              if (s > best) {
                best = s;
                pose = candidate;
                changed = true;
              }
            }
      if (!changed) break;
    }
  };

  // Rasterization ties: near an exact match whole angular plateaus render the
  // identical mask. The true pose lies inside the plateau, so each joint is
  // re-centered on its contiguous equal-score run.
  auto center_ties = [&]() {
    const double step = 0.25 * kDegree;
    for (int j = 0; j < 4; ++j) {
      int lo = 0, hi = 0;
      Pose candidate = pose;
      for (int m = 1; m <= 24; ++m) {
        candidate.angles(j) = pose.angles(j) - m * step;
        if (std::abs(candidate.angles(j)) > kJointLimit || score(candidate) < best) break;
        lo = -m;
      }
      candidate = pose;
      for (int m = 1; m <= 24; ++m) {
        candidate.angles(j) = pose.angles(j) + m * step;
        if (std::abs(candidate.angles(j)) > kJointLimit || score(candidate) < best) break;
        hi = m;
      }
      pose.angles(j) += ((lo + hi) / 2) * step;
    }
  };

  // Sub-degree polish. The exact-match IoU cell around a true pose is only a
  // fraction of a degree wide, so the coarse stages alone cannot reach the
  // 1-degree / 0.99-IoU regime on clean masks. Skipped for badly matching
  // masks where that precision is meaningless.
  if (best >= 0.9) {
    refine(0.5, 10);
    refine(0.25, 8);
    polish(1.0, 2, 3);
    polish(0.5, 3, 2);
    polish(0.25, 2, 3);
    // A near-exact match can still sit a degree or two from the true plateau,
    // separated by a shallow dip no coarse walk crosses; wide sub-degree pair
    // grids and a finer polish are worth the cost solely for near-exact fits.
    if (best >= 0.985) {
      refine(0.25, 12);
      refine(0.125, 8);
      polish(0.25, 3, 2);
      polish(0.125, 2, 3);
    }
    center_ties();
  }

  // An exact mask match ties across a whole angular plateau; report the
  // plateau centroid, the minimum-expected-error estimate of the true pose.
  if (best == 1.0) {
    const double step = 0.5 * kDegree;
    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    int ties = 0;
    Pose candidate;
    for (int m0 = -4; m0 <= 4; ++m0)
      for (int m1 = -4; m1 <= 4; ++m1)
        for (int m2 = -4; m2 <= 4; ++m2)
          for (int m3 = -4; m3 <= 4; ++m3) {
            candidate.angles << pose.angles(0) + m0 * step, pose.angles(1) + m1 * step,
                pose.angles(2) + m2 * step, pose.angles(3) + m3 * step;
            if ((candidate.angles.array().abs() > kJointLimit).any()) continue;
            if (score(candidate) == 1.0) {
              acc += candidate.angles;
              ++ties;
            }
          }
    if (ties > 0) pose.angles = acc / ties;
  }

  return {pose, best};
}

}  // namespace vsm
