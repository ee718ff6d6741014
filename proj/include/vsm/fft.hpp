#pragma once

#include "vsm/image.hpp"

#include <complex>

namespace vsm {

// Unnormalized forward transform; the inverse carries the 1/(H*W) factor.
// DC bin of a constant image c is c*H*W. Arbitrary sizes are supported.
using Spectrum = Eigen::Array<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic>;

Spectrum fft2(const Plane& img);
Spectrum fft2(const Spectrum& in);
Plane ifft2(const Spectrum& s);

}  // namespace vsm
