#pragma once

#include "vsm/image.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vsm {

struct EncodingConfig {
  int bands = 6;            // L frequency bands per coordinate
  bool include_rgb = true;  // append the pixel's RGB to the encoding
  int encoded_length() const { return 2 + 4 * bands + (include_rgb ? 3 : 0); }
};

// [x, y, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{L-1} pi x), cos(2^{L-1} pi x),
//  then the same bands for y]; length 2 + 4L.
Eigen::VectorXd positional_encode(double x, double y, int bands);

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 500;
  int minibatch = 1024;        // pixels per step
  int batches_per_epoch = 16;  // per-epoch uniform pixel subsample, in batches
  std::uint64_t seed = 1;
  int hidden = 32;
  double momentum = 0.9;
  void validate() const;
};

// One-hidden-layer (tanh) per-pixel classifier over encoded coordinates.
// Class 0 = background, class 1 = robot.
struct SegModel {
  EncodingConfig encoding;
  Eigen::MatrixXd w1;  // hidden x d_in
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // 2 x hidden
  Eigen::VectorXd b2;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  bool trained() const { return w1.size() > 0; }
};

// Per-pixel logits, one plane per class.
using LogitPair = std::array<Plane, 2>;

// Mean over pixels of -log softmax(logits)[true class], max-subtracted.
double cross_entropy_loss(const LogitPair& logits, const Mask& mask);

struct TrainingPair {
  Image image;
  Mask mask;
};

// Seeded minibatch SGD with momentum; deterministic given the config seed.
SegModel train_segmenter(const std::vector<TrainingPair>& pairs, const EncodingConfig& enc,
                         const TrainConfig& cfg);

LogitPair segment_logits(const SegModel& model, const Image& img);

// Per-pixel argmax; exact ties go to background.
Mask infer_mask(const SegModel& model, const Image& img);

// out = img * mask, broadcast over channels.
Image apply_mask(const Image& img, const Mask& mask);

// Background iff min(R,G,B) >= threshold (near-white); robot otherwise.
Mask color_threshold_baseline(const Image& img, double white_threshold);

void save_seg_model(const SegModel& model, const std::string& path);
SegModel load_seg_model(const std::string& path);

// Feature matrix for a whole image: encoded_length x (H*W), pixels in
// row-major order. Shared by training and inference.
Eigen::MatrixXd encode_image_features(const Image& img, const EncodingConfig& enc);

struct MlpGradients {
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;
};

// Mean cross-entropy over the batch plus analytic parameter gradients;
// exposed so tests can check it against finite differences.
double mlp_loss_and_grad(const SegModel& model, const Eigen::MatrixXd& features,
                         const std::vector<int>& labels, MlpGradients* grad);

}  // namespace vsm
