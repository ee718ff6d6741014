#pragma once

#include "vsm/image.hpp"

#include <cstdint>

namespace vsm {

// Rows are points, columns are coordinates (2-D or 3-D, consistent per set).
using PointSet = Eigen::MatrixXd;

// (1/N) sum ||pred_i - gt_i||^2
double mse_points(const PointSet& pred, const PointSet& gt);

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

ConfusionCounts confusion(const Mask& pred, const Mask& gt);

// tp / (tp+fp+fn); both masks empty counts as a perfect match (1.0).
double iou(const ConfusionCounts& counts);

struct PrecisionRecallF1 {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  // set when the corresponding denominator was zero and the value was forced to 0
  bool precision_degenerate = false, recall_degenerate = false, f1_degenerate = false;
};

PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& counts);

double mse_pixels(const Image& a, const Image& b);

// 10*log10(1/mse) with peak 1.0, capped at 99 dB (identical images hit the cap).
double psnr(const Image& a, const Image& b);

}  // namespace vsm
