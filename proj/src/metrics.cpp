#include "vsm/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace vsm {

double mse_points(const PointSet& pred, const PointSet& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw std::invalid_argument("mse_points: point sets must have equal length and dimension");
  if (pred.rows() < 1) throw std::invalid_argument("mse_points: empty point sets");
  return (pred - gt).rowwise().squaredNorm().mean();
}

ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw std::invalid_argument("confusion: mask dimensions disagree");
  ConfusionCounts counts;
  for (Eigen::Index r = 0; r < pred.rows(); ++r)
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const bool p = pred(r, c) != 0, g = gt(r, c) != 0;
      if (p && g)
        ++counts.tp;
      else if (p && !g)
        ++counts.fp;
      else if (!p && g)
        ++counts.fn;
      else
        ++counts.tn;
    }
  return counts;
}

double iou(const ConfusionCounts& counts) {
  const std::int64_t denom = counts.tp + counts.fp + counts.fn;
  if (denom == 0) return 1.0;  // identical empty masks
  return static_cast<double>(counts.tp) / static_cast<double>(denom);
}

PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& counts) {
  PrecisionRecallF1 out;
  if (counts.tp + counts.fp == 0)
    out.precision_degenerate = true;
  else
    out.precision = static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fp);
  if (counts.tp + counts.fn == 0)
    out.recall_degenerate = true;
  else
    out.recall = static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fn);
  // 2PR/(P+R) = 2tp / (2tp+fp+fn); computed from counts so the F1/IoU identity
  // holds exactly.
  const std::int64_t denom = 2 * counts.tp + counts.fp + counts.fn;
  if (denom == 0)
    out.f1_degenerate = true;
  else
    out.f1 = 2.0 * static_cast<double>(counts.tp) / static_cast<double>(denom);
  return out;
}

double mse_pixels(const Image& a, const Image& b) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width())
    throw std::invalid_argument("mse_pixels: image dimensions disagree");
  double acc = 0.0;
  for (int ch = 0; ch < a.channels(); ++ch)
    acc += (a.planes[ch] - b.planes[ch]).square().sum();
  return acc / (static_cast<double>(a.height()) * a.width() * a.channels());
}

double psnr(const Image& a, const Image& b) {
  const double mse = mse_pixels(a, b);
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

}  // namespace vsm
