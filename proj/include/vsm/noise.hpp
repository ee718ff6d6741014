#pragma once

#include "vsm/image.hpp"

#include <cstdint>
#include <string>

namespace vsm {

enum class NoiseKind { Blur, SaltPepper, Gaussian };

std::string to_string(NoiseKind kind);

// One corruption recipe. Parameters are interpreted per kind; sigma_noise is
// on the 0-255 scale and rescaled by 1/255 internally.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::Gaussian;
  double sigma_blur = 2.0;
  int kernel_halfwidth = 6;
  double density = 0.1;
  double sigma_noise = 25.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_string() const;
  // Accepts the string forms "blur:sigma=2,k=6", "sp:p=0.1", "gauss:sigma=25",
  // each optionally with ",seed=N".
  static NoiseSpec parse(const std::string& text);

  static NoiseSpec blur(double sigma, int k, std::uint64_t seed = 0);
  static NoiseSpec salt_pepper(double p, std::uint64_t seed = 0);
  static NoiseSpec gaussian(double sigma, std::uint64_t seed = 0);
};

// Normalized, symmetric, nonnegative convolution kernel on a (2k+1)^2 grid.
struct Kernel {
  int halfwidth = 0;
  Eigen::ArrayXXd weights;  // sums to 1 within 1e-9
};

// exp(-(i^2+j^2)/(2 sigma^2)) on the grid, renormalized to sum exactly 1.
Kernel gaussian_kernel(double sigma, int halfwidth);

// k = ceil(3 sigma): captures >99.7% of the kernel mass.
int default_kernel_halfwidth(double sigma);

// Reflect-101 index fold: ..., 2,1 | 0,1,2,...,n-1 | n-2,n-3, ...
inline Eigen::Index reflect101(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

// Gaussian blur with reflect-101 borders, per channel.
Image apply_blur(const Image& img, const NoiseSpec& spec);

// Impulse noise: one uniform draw per pixel, all channels corrupted together.
// u < p/2 -> 0 (pepper), u < p -> 1 (salt), else unchanged.
Image add_salt_pepper(const Image& img, const NoiseSpec& spec);

// Additive zero-mean Gaussian, i.i.d. per pixel per channel (row-major pixel
// order, channel innermost), clipped back to [0,1].
Image add_gaussian_noise(const Image& img, const NoiseSpec& spec);

Image corrupt(const Image& img, const NoiseSpec& spec);

}  // namespace vsm
