#pragma once

#include "vsm/image.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vsm {

// Planar 4-link arm in unit scene coordinates (x right, y up, origin at the
// bottom-left). Links render as capsules of radius width/2; the white base
// disk is excluded from ground-truth masks.
struct ArmModel {
  Eigen::Vector2d base{0.5, 0.08};
  std::array<double, 4> link_lengths{0.22, 0.18, 0.14, 0.10};
  std::array<double, 4> link_widths{0.055, 0.045, 0.04, 0.03};
  double base_radius = 0.06;
  void validate() const;  // base disk and the vertically extended arm stay in frame
};

constexpr double kJointLimit = 1.5707963267948966;  // +-90 degrees per joint

struct Pose {
  Eigen::Vector4d angles = Eigen::Vector4d::Zero();  // radians
  void validate() const;
};

enum class BackgroundKind { White, Leaves, PigeonsGray, PigeonsBlack, LabClutter, Procedural };

struct Background {
  BackgroundKind kind = BackgroundKind::Leaves;
  std::uint64_t seed = 0;
  std::string name() const;
  static Background parse(const std::string& name, std::uint64_t seed);
};

// Rows: base plus the four link endpoints. Cumulative joint angles are
// measured from vertical, so the all-zero pose points straight up.
using JointPositions = Eigen::Matrix<double, 5, 2>;

JointPositions forward_kinematics(const ArmModel& model, const Pose& pose);

// True when every link capsule and the base disk lie inside the unit scene.
bool pose_in_frame(const ArmModel& model, const Pose& pose);

// Static scene backdrop, deterministic in (kind, seed).
Image render_background(const Background& bg, int width, int height);

struct RenderResult {
  Image image;
  Mask mask;
};

// Composites the arm over the backdrop. Rejects poses that exit the frame so
// corpus masks stay complete.
RenderResult render(const ArmModel& model, const Pose& pose, const Image& background);

// Silhouette only, clipped at the frame; used by the pose fitter.
Mask render_mask(const ArmModel& model, const Pose& pose, int width, int height);

struct CorpusEntry {
  int index = 0;
  Pose pose;
  std::string image_path;  // relative to the manifest's directory
  std::string mask_path;
  std::string bg_kind;
  std::uint64_t seed = 0;
};

using CorpusManifest = std::vector<CorpusEntry>;

// Samples n in-frame poses (uniform per joint, per-image seed streams), renders
// them over one static backdrop and writes images, masks and manifest.csv.
// The first round(n*train_fraction) entries form the training split.
CorpusManifest generate_corpus(const ArmModel& model, int n, double train_fraction,
                               const Background& bg, std::uint64_t seed, int width, int height,
                               const std::string& out_dir);

CorpusManifest load_manifest(const std::string& csv_path);
void save_manifest(const CorpusManifest& manifest, const std::string& csv_path);

int train_count(int n, double train_fraction);

struct PoseFit {
  Pose pose;
  double iou = 0.0;
};

// Coarse-to-fine silhouette matching: greedy joint-by-joint sweeps on a 15 deg
// grid, then coordinate-descent refinement at 3 deg and 1 deg. Ties prefer the
// smaller angle; deterministic.
PoseFit fit_arm_pose(const Mask& observed, const ArmModel& model);

}  // namespace vsm
