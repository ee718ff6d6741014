#include "vsm/restoration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace vsm {

namespace {

constexpr double kTransferFloor = 1e-12;

// Kernel embedded centered-and-wrapped at the image size; += handles kernels
// larger than the image.
Spectrum transfer_function(const Kernel& kernel, Eigen::Index h, Eigen::Index w) {
  Plane embedded = Plane::Zero(h, w);
  const int k = kernel.halfwidth;
  for (int i = -k; i <= k; ++i)
    for (int j = -k; j <= k; ++j) {
      const Eigen::Index r = ((i % h) + h) % h;
      const Eigen::Index c = ((j % w) + w) % w;
      embedded(r, c) += kernel.weights(i + k, j + k);
    }
  return fft2(embedded);
}

Plane reflect_pad(const Plane& in, int margin) {
  const Eigen::Index h = in.rows(), w = in.cols();
  Plane out(h + 2 * margin, w + 2 * margin);
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      out(r, c) = in(reflect101(r - margin, h), reflect101(c - margin, w));
  return out;
}

// Shared NLM core. bandwidth_sq holds h^2 per pixel. Offset-at-a-time sweep:
// for each window offset an integral image of squared differences yields every
// patch distance in O(1), keeping the whole filter O(window^2 * H * W).
void nlm_accumulate(const Plane& in, const NlmConfig& cfg, const Plane& bandwidth_sq,
                    Plane& numer, Plane& denom) {
  const Eigen::Index h = in.rows(), w = in.cols();
  const int f = cfg.patch_halfwidth;
  const int win = cfg.window_halfwidth;
  const int margin = f + win;
  const Plane pad = reflect_pad(in, margin);
  const double patch_count = (2 * f + 1) * (2 * f + 1);

  const Eigen::Index ih = h + 2 * f, iw = w + 2 * f;  // integral-domain size
  Plane diff_sq(ih, iw), integral(ih + 1, iw + 1);

  numer.setZero(h, w);
  denom.setZero(h, w);

  for (int dr = -win; dr <= win; ++dr) {
    for (int dc = -win; dc <= win; ++dc) {
      // squared difference between the plane and its (dr,dc)-shifted copy,
      // on coordinates covering every patch pixel
      diff_sq = (pad.block(win, win, ih, iw) - pad.block(win + dr, win + dc, ih, iw)).square();

      integral.row(0).setZero();
      integral.col(0).setZero();
      for (Eigen::Index r = 0; r < ih; ++r)
        for (Eigen::Index c = 0; c < iw; ++c)
          integral(r + 1, c + 1) =
              diff_sq(r, c) + integral(r, c + 1) + integral(r + 1, c) - integral(r, c);

      const Eigen::Index r_lo = std::max<Eigen::Index>(0, -dr);
      const Eigen::Index r_hi = std::min<Eigen::Index>(h - 1, h - 1 - dr);
      const Eigen::Index c_lo = std::max<Eigen::Index>(0, -dc);
      const Eigen::Index c_hi = std::min<Eigen::Index>(w - 1, w - 1 - dc);
      const int span = 2 * f + 1;
      for (Eigen::Index r = r_lo; r <= r_hi; ++r) {
        for (Eigen::Index c = c_lo; c <= c_hi; ++c) {
          const double patch_sum = integral(r + span, c + span) - integral(r, c + span) -
                                   integral(r + span, c) + integral(r, c);
          const double msd = patch_sum / patch_count;
          const double weight = std::exp(-msd / bandwidth_sq(r, c));
          numer(r, c) += weight * in(r + dr, c + dc);
          denom(r, c) += weight;
        }
      }
    }
  }
}

// Second pass accumulating normalized weights, for the weight-sum diagnostic.
double nlm_weight_sum_error(const Plane& in, const NlmConfig& cfg, const Plane& bandwidth_sq,
                            const Plane& denom) {
  const Eigen::Index h = in.rows(), w = in.cols();
  const int f = cfg.patch_halfwidth;
  const int win = cfg.window_halfwidth;
  const int margin = f + win;
  const Plane pad = reflect_pad(in, margin);
  const double patch_count = (2 * f + 1) * (2 * f + 1);
  const Eigen::Index ih = h + 2 * f, iw = w + 2 * f;
  Plane diff_sq(ih, iw), integral(ih + 1, iw + 1);
  Plane norm_sum = Plane::Zero(h, w);

  for (int dr = -win; dr <= win; ++dr) {
    for (int dc = -win; dc <= win; ++dc) {
      diff_sq = (pad.block(win, win, ih, iw) - pad.block(win + dr, win + dc, ih, iw)).square();
      integral.row(0).setZero();
      integral.col(0).setZero();
      for (Eigen::Index r = 0; r < ih; ++r)
        for (Eigen::Index c = 0; c < iw; ++c)
          integral(r + 1, c + 1) =
              diff_sq(r, c) + integral(r, c + 1) + integral(r + 1, c) - integral(r, c);
      const Eigen::Index r_lo = std::max<Eigen::Index>(0, -dr);
      const Eigen::Index r_hi = std::min<Eigen::Index>(h - 1, h - 1 - dr);
      const Eigen::Index c_lo = std::max<Eigen::Index>(0, -dc);
      const Eigen::Index c_hi = std::min<Eigen::Index>(w - 1, w - 1 - dc);
      const int span = 2 * f + 1;
      for (Eigen::Index r = r_lo; r <= r_hi; ++r)
        for (Eigen::Index c = c_lo; c <= c_hi; ++c) {
          const double patch_sum = integral(r + span, c + span) - integral(r, c + span) -
                                   integral(r + span, c) + integral(r, c);
          norm_sum(r, c) += std::exp(-(patch_sum / patch_count) / bandwidth_sq(r, c)) / denom(r, c);
        }
    }
  }
  return (norm_sum - 1.0).abs().maxCoeff();
}

Image nlm_run(const Image& img, const NlmConfig& cfg, const Plane& bandwidth_sq, NlmStats* stats) {
  Image out(img.height(), img.width(), img.channels());
  Plane numer, denom;
  for (int ch = 0; ch < img.channels(); ++ch) {
    nlm_accumulate(img.planes[ch], cfg, bandwidth_sq, numer, denom);
    out.planes[ch] = (numer / denom).min(1.0).max(0.0);
    if (stats)
      stats->max_weight_sum_error =
          std::max(stats->max_weight_sum_error,
                   nlm_weight_sum_error(img.planes[ch], cfg, bandwidth_sq, denom));
  }
  return out;
}

}  // namespace

void NlmConfig::validate() const {
  if (!(h > 0)) throw std::invalid_argument("nlm: h must be > 0");
  if (patch_halfwidth < 1) throw std::invalid_argument("nlm: patch halfwidth must be >= 1");
  if (window_halfwidth < patch_halfwidth)
    throw std::invalid_argument("nlm: window halfwidth must be >= patch halfwidth");
}

Image wiener_deblur(const Image& img, const WienerConfig& cfg) {
  if (cfg.nsr < 0) throw std::invalid_argument("wiener: nsr must be >= 0");
  if (std::abs(cfg.kernel.weights.sum() - 1.0) > 1e-6)
    throw std::invalid_argument("wiener: kernel must be normalized");
  const Eigen::Index h = img.height(), w = img.width();
  const Spectrum transfer = transfer_function(cfg.kernel, h, w);
  const Eigen::ArrayXXd power = transfer.abs2();
  if (cfg.nsr == 0.0 && (power < kTransferFloor * kTransferFloor).any())
    throw std::invalid_argument("wiener: nsr = 0 with near-zero transfer function is ill-posed");

  Image out(h, w, img.channels());
  const Spectrum conj = transfer.conjugate();
  const Eigen::ArrayXXd denom = power + cfg.nsr;
  for (int ch = 0; ch < img.channels(); ++ch) {
    const Spectrum restored = conj * fft2(img.planes[ch]) / denom;
    out.planes[ch] = ifft2(restored).min(1.0).max(0.0);
  }
  return out;
}

Image median_filter(const Image& img, int halfwidth) {
  if (halfwidth < 1) throw std::invalid_argument("median_filter: halfwidth must be >= 1");
  const Eigen::Index h = img.height(), w = img.width();
  const int k = halfwidth;
  const int count = (2 * k + 1) * (2 * k + 1);
  std::vector<double> window(count);

  Image out(h, w, img.channels());
  for (int ch = 0; ch < img.channels(); ++ch) {
    const Plane pad = reflect_pad(img.planes[ch], k);
    for (Eigen::Index r = 0; r < h; ++r) {
      for (Eigen::Index c = 0; c < w; ++c) {
        int idx = 0;
        for (int i = -k; i <= k; ++i)
          for (int j = -k; j <= k; ++j) window[idx++] = pad(r + k + i, c + k + j);
        auto mid = window.begin() + count / 2;
        std::nth_element(window.begin(), mid, window.end());
        out.planes[ch](r, c) = *mid;
      }
    }
  }
  return out;
}

Image nlm_denoise(const Image& img, const NlmConfig& cfg, NlmStats* stats) {
  cfg.validate();
  const Plane bandwidth_sq = Plane::Constant(img.height(), img.width(), cfg.h * cfg.h);
  return nlm_run(img, cfg, bandwidth_sq, stats);
}

Image nlm_iftsvm_denoise(const Image& img, const NlmConfig& cfg, const TwinModel& model,
                         const NlmAdaptiveParams& params, NlmStats* stats) {
  cfg.validate();
  if (!model.trained())
    throw std::invalid_argument("nlm_iftsvm_denoise: model is untrained or degenerate");
  if (!(params.alpha_edge > 0) || !(params.alpha_smooth > 0))
    throw std::invalid_argument("nlm_iftsvm_denoise: bandwidth factors must be > 0");

  // Classify patches of a plain-NLM guide, not of the raw input: the patch
  // model is trained on clean renders and residual noise would otherwise make
  // every flat patch look structured.
  const Plane guide_bandwidth = Plane::Constant(img.height(), img.width(), cfg.h * cfg.h);
  const Plane lum = luma(nlm_run(img, cfg, guide_bandwidth, nullptr));
  Plane bandwidth_sq(img.height(), img.width());
  for (Eigen::Index r = 0; r < img.height(); ++r)
    for (Eigen::Index c = 0; c < img.width(); ++c) {
      const PatchFeatures f = patch_features(lum, r, c, cfg.patch_halfwidth);
      const bool structured = classify(model, f.vector()).label == +1;
      const double h_eff = cfg.h * (structured ? params.alpha_edge : params.alpha_smooth);
      bandwidth_sq(r, c) = h_eff * h_eff;
    }
  return nlm_run(img, cfg, bandwidth_sq, stats);
}

}  // namespace vsm
