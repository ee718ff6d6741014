#pragma once

#include "vsm/fft.hpp"
#include "vsm/iftsvm.hpp"
#include "vsm/image.hpp"
#include "vsm/noise.hpp"

#include <string>

namespace vsm {

struct WienerConfig {
  Kernel kernel;
  double nsr = 1e-3;  // scalar noise-to-signal ratio
};

struct NlmConfig {
  double h = 0.04;           // smoothing bandwidth on the [0,1] intensity scale
  int patch_halfwidth = 3;   // 7x7 patches
  int window_halfwidth = 10; // 21x21 search window
  void validate() const;
};

// Per-pixel diagnostics; filled only when requested (second pass over offsets).
struct NlmStats {
  double max_weight_sum_error = 0.0;  // max |sum of normalized weights - 1|
};

// Frequency-domain deconvolution, circular convolution convention with the
// kernel embedded centered-and-wrapped at the image size. Boundary ringing on
// non-circular blurs is expected. nsr = 0 is rejected whenever the transfer
// function has near-zeros.
Image wiener_deblur(const Image& img, const WienerConfig& cfg);

// Exact median over the (2k+1)^2 reflect-101 neighborhood, per channel.
Image median_filter(const Image& img, int halfwidth);

// Patch-similarity weighted average over the search window. Patch distance is
// the mean squared difference so h is resolution-independent; patches reflect
// at borders, candidate windows clamp to the image.
Image nlm_denoise(const Image& img, const NlmConfig& cfg, NlmStats* stats = nullptr);

struct NlmAdaptiveParams {
  double alpha_edge = 0.6;    // bandwidth factor on structured patches
  double alpha_smooth = 1.4;  // bandwidth factor on smooth patches
};

// NLM with a per-pixel bandwidth chosen by the twin-SVM patch classifier:
// structure keeps detail (h*alpha_edge), smooth regions average harder
// (h*alpha_smooth). With both factors at 1 this is exactly nlm_denoise.
Image nlm_iftsvm_denoise(const Image& img, const NlmConfig& cfg, const TwinModel& model,
                         const NlmAdaptiveParams& params = {}, NlmStats* stats = nullptr);

}  // namespace vsm
