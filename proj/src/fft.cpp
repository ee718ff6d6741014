#include "vsm/fft.hpp"

#include <unsupported/Eigen/FFT>

namespace vsm {

namespace {

// Row-column decomposition over a complex matrix, in place.
void fft_all_rows(Eigen::MatrixXcd& m) {
  Eigen::FFT<double> fft;
  Eigen::VectorXcd in(m.cols()), out(m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    in = m.row(r).transpose();
    if (in.size() == 1) {
      continue;  // length-1 transform is the identity
    }
    fft.fwd(out, in);
    m.row(r) = out.transpose();
  }
}

void fft_all_cols(Eigen::MatrixXcd& m) {
  Eigen::FFT<double> fft;
  Eigen::VectorXcd in(m.rows()), out(m.rows());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    in = m.col(c);
    if (in.size() == 1) continue;
    fft.fwd(out, in);
    m.col(c) = out;
  }
}

}  // namespace

Spectrum fft2(const Spectrum& in) {
  Eigen::MatrixXcd m = in.matrix();
  fft_all_rows(m);
  fft_all_cols(m);
  return m.array();
}

Spectrum fft2(const Plane& img) {
  return fft2(Spectrum(img.cast<std::complex<double>>()));
}

Plane ifft2(const Spectrum& s) {
  // ifft(X) = conj(fft(conj(X))) / (H*W); keeps the normalization explicit.
  Spectrum t = fft2(Spectrum(s.conjugate()));
  const double scale = 1.0 / (static_cast<double>(s.rows()) * static_cast<double>(s.cols()));
  return t.conjugate().real() * scale;
}

}  // namespace vsm
