#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace vsm {

// H x W single-channel raster. Images hold one plane per channel; intensities
// live in [0,1] once an operation returns (intermediates may exceed the range
// until clip_intensity).
template <typename Scalar>
using PlaneT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Plane = PlaneT<double>;

// Binary raster, values in {0,1}. 1 marks the robot.
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct ImageT {
  std::vector<PlaneT<Scalar>> planes;  // size 1 (gray) or 3 (RGB)

  ImageT() = default;
  ImageT(Eigen::Index height, Eigen::Index width, int channels, Scalar fill = Scalar(0)) {
    if (height < 1 || width < 1) throw std::invalid_argument("image: dimensions must be >= 1");
    if (channels != 1 && channels != 3) throw std::invalid_argument("image: channels must be 1 or 3");
    planes.assign(static_cast<std::size_t>(channels),
                  PlaneT<Scalar>::Constant(height, width, fill));
  }

  int channels() const { return static_cast<int>(planes.size()); }
  Eigen::Index height() const { return planes.empty() ? 0 : planes[0].rows(); }
  Eigen::Index width() const { return planes.empty() ? 0 : planes[0].cols(); }

  Scalar& at(Eigen::Index r, Eigen::Index c, int ch = 0) { return planes[ch](r, c); }
  Scalar at(Eigen::Index r, Eigen::Index c, int ch = 0) const { return planes[ch](r, c); }
};

using Image = ImageT<double>;

template <typename Scalar>
void validate(const ImageT<Scalar>& img) {
  if (img.planes.empty()) throw std::invalid_argument("image: no channels");
  if (img.channels() != 1 && img.channels() != 3)
    throw std::invalid_argument("image: channels must be 1 or 3");
  const Eigen::Index h = img.height(), w = img.width();
  if (h < 1 || w < 1) throw std::invalid_argument("image: dimensions must be >= 1");
  for (const auto& p : img.planes) {
    if (p.rows() != h || p.cols() != w)
      throw std::invalid_argument("image: channel dimensions disagree");
    if (!p.isFinite().all()) throw std::invalid_argument("image: non-finite value");
    if ((p < Scalar(0)).any() || (p > Scalar(1)).any())
      throw std::invalid_argument("image: value outside [0,1]");
  }
}

inline void validate(const Mask& m) {
  if (m.rows() < 1 || m.cols() < 1) throw std::invalid_argument("mask: dimensions must be >= 1");
  if ((m > 1).any()) throw std::invalid_argument("mask: value outside {0,1}");
}

// Rec. 709 luma. Rejects single-channel input so callers notice redundant
// conversions.
template <typename Scalar>
ImageT<Scalar> to_grayscale(const ImageT<Scalar>& img) {
  if (img.channels() == 1) throw std::invalid_argument("to_grayscale: already grayscale");
  if (img.channels() != 3) throw std::invalid_argument("to_grayscale: expected 3 channels");
  ImageT<Scalar> out;
  out.planes.push_back(Scalar(0.2126) * img.planes[0] + Scalar(0.7152) * img.planes[1] +
                       Scalar(0.0722) * img.planes[2]);
  return out;
}

// Luma plane for feature computation; accepts gray or RGB.
template <typename Scalar>
PlaneT<Scalar> luma(const ImageT<Scalar>& img) {
  if (img.channels() == 1) return img.planes[0];
  return Scalar(0.2126) * img.planes[0] + Scalar(0.7152) * img.planes[1] +
         Scalar(0.0722) * img.planes[2];
}

template <typename Scalar>
ImageT<Scalar> clip_intensity(const ImageT<Scalar>& img) {
  ImageT<Scalar> out = img;
  for (auto& p : out.planes) {
    if (p.isNaN().any()) throw std::invalid_argument("clip_intensity: NaN in input");
    p = p.min(Scalar(1)).max(Scalar(0));
  }
  return out;
}

template <typename Scalar>
ImageT<Scalar> mask_to_image(const Mask& m) {
  ImageT<Scalar> out;
  out.planes.push_back(m.cast<Scalar>());
  return out;
}

inline Image mask_to_image(const Mask& m) { return mask_to_image<double>(m); }

// Pixels with grayscale value >= threshold become 1.
template <typename Scalar>
Mask image_to_mask(const ImageT<Scalar>& img, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("image_to_mask: threshold must be in (0,1)");
  PlaneT<Scalar> g = luma(img);
  return (g >= Scalar(threshold)).template cast<std::uint8_t>();
}

}  // namespace vsm
