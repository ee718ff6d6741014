#include "vsm/restoration.hpp"

#include "vsm/metrics.hpp"
#include "vsm/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace vsm;

namespace {

Image random_image(int h, int w, int channels, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, channels);
  for (auto& plane : img.planes)
    for (Eigen::Index r = 0; r < h; ++r)
      for (Eigen::Index c = 0; c < w; ++c) plane(r, c) = rng.uniform();
  return img;
}

// Literal weighted-average NLM: reflect-101 patches, window clamped to the
// image, mean squared patch distance. Independent of the production
// integral-image path.
Image nlm_oracle(const Image& img, const NlmConfig& cfg) {
  const Eigen::Index h = img.height(), w = img.width();
  const int f = cfg.patch_halfwidth, win = cfg.window_halfwidth;
  Image out(h, w, img.channels());
  for (int ch = 0; ch < img.channels(); ++ch) {
    const Plane& p = img.planes[ch];
    auto at = [&](Eigen::Index r, Eigen::Index c) {
      return p(reflect101(r, h), reflect101(c, w));
    };
    for (Eigen::Index r = 0; r < h; ++r)
      for (Eigen::Index c = 0; c < w; ++c) {
        double numer = 0.0, denom = 0.0;
        for (Eigen::Index rr = std::max<Eigen::Index>(0, r - win);
             rr <= std::min<Eigen::Index>(h - 1, r + win); ++rr)
          for (Eigen::Index cc = std::max<Eigen::Index>(0, c - win);
               cc <= std::min<Eigen::Index>(w - 1, c + win); ++cc) {
            double dist = 0.0;
            for (int u = -f; u <= f; ++u)
              for (int v = -f; v <= f; ++v) {
                const double d = at(r + u, c + v) - at(rr + u, cc + v);
                dist += d * d;
              }
            dist /= (2 * f + 1) * (2 * f + 1);
            const double weight = std::exp(-dist / (cfg.h * cfg.h));
            numer += weight * p(rr, cc);
            denom += weight;
          }
        out.planes[ch](r, c) = numer / denom;
      }
  }
  return out;
}

// Direct space-domain circular convolution with a normalized kernel.
Plane circular_blur(const Plane& in, const Kernel& kernel) {
  const Eigen::Index h = in.rows(), w = in.cols();
  const int k = kernel.halfwidth;
  Plane out(h, w);
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -k; i <= k; ++i)
        for (int j = -k; j <= k; ++j)
          acc += kernel.weights(i + k, j + k) *
                 in(((r - i) % h + h) % h, ((c - j) % w + w) % w);
      out(r, c) = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("wiener_deblur") {
  SUBCASE("huge nsr drives the output to zero") {
    WienerConfig cfg;
    cfg.kernel = gaussian_kernel(1.0, 2);
    cfg.nsr = 1e9;
    const Image out = wiener_deblur(random_image(16, 16, 1, 3), cfg);
    CHECK(out.planes[0].abs().maxCoeff() < 1e-6);
  }
  SUBCASE("constant image with a well-conditioned kernel and nsr=0 is unchanged") {
    WienerConfig cfg;
    cfg.kernel = gaussian_kernel(0.5, 1);
    cfg.nsr = 0.0;
    const Image img(12, 10, 1, 0.37);
    const Image out = wiener_deblur(img, cfg);
    CHECK((out.planes[0] - 0.37).abs().maxCoeff() < 1e-8);
  }
  SUBCASE("all-pass kernel with nsr=0 is the identity") {
    WienerConfig cfg;
    cfg.kernel = gaussian_kernel(1.0, 0);
    cfg.nsr = 0.0;
    const Image img = random_image(9, 14, 3, 8);
    const Image out = wiener_deblur(img, cfg);
    for (int ch = 0; ch < 3; ++ch)
      CHECK((out.planes[ch] - img.planes[ch]).abs().maxCoeff() < 1e-8);
  }
  SUBCASE("nsr=0 with a transfer-function zero is rejected as ill-posed") {
    // [0.25 0.5 0.25] along one axis has an exact zero at the Nyquist column
    WienerConfig cfg;
    cfg.kernel.halfwidth = 1;
    cfg.kernel.weights = Eigen::ArrayXXd::Zero(3, 3);
    cfg.kernel.weights(1, 0) = 0.25;
    cfg.kernel.weights(1, 1) = 0.5;
    cfg.kernel.weights(1, 2) = 0.25;
    cfg.nsr = 0.0;
    CHECK_THROWS_AS(wiener_deblur(random_image(16, 16, 1, 2), cfg), std::invalid_argument);
    cfg.nsr = 1e-3;
    CHECK_NOTHROW(wiener_deblur(random_image(16, 16, 1, 2), cfg));
  }
  SUBCASE("undoes a known circular blur almost entirely") {
    // impulse plus a structured background of blocks
    Image img(64, 64, 1, 0.2);
    Rng rng(61);
    for (int b = 0; b < 8; ++b) {
      const auto r0 = static_cast<Eigen::Index>(rng.uniform_index(52));
      const auto c0 = static_cast<Eigen::Index>(rng.uniform_index(52));
      img.planes[0].block(r0, c0, 4 + rng.uniform_index(8), 4 + rng.uniform_index(8))
          .setConstant(rng.uniform(0.5, 0.95));
    }
    img.planes[0](32, 40) = 1.0;
    const Kernel kernel = gaussian_kernel(2.0, 6);
    Image blurred(64, 64, 1);
    blurred.planes[0] = circular_blur(img.planes[0], kernel);

    // The truncated kernel's transfer function puts half of all bins below
    // ~1e-4, so edge/impulse content keeps an irreducible residual once nsr
    // exceeds |H|^2 there. Noise-free deconvolution warrants a small nsr;
    // 1e-8 restores this fixture to ~5% of the blur damage.
    WienerConfig cfg;
    cfg.kernel = kernel;
    cfg.nsr = 1e-8;
    const Image restored = wiener_deblur(blurred, cfg);
    const double blurred_mse = mse_pixels(blurred, img);
    const double restored_mse = mse_pixels(restored, img);
    CHECK(restored_mse <= 0.10 * blurred_mse);
  }
  SUBCASE("unnormalized kernels are rejected") {
    WienerConfig cfg;
    cfg.kernel = gaussian_kernel(1.0, 2);
    cfg.kernel.weights *= 2.0;
    CHECK_THROWS_AS(wiener_deblur(random_image(8, 8, 1, 1), cfg), std::invalid_argument);
  }
}

TEST_CASE("median_filter") {
  SUBCASE("constant image is unchanged") {
    const Image img(9, 9, 3, 0.31);
    const Image out = median_filter(img, 1);
    for (int ch = 0; ch < 3; ++ch) CHECK((out.planes[ch] == 0.31).all());
  }
  SUBCASE("an isolated outlier in a flat region is replaced by the flat value") {
    Image img(7, 7, 1, 0.5);
    img.planes[0](3, 3) = 1.0;
    const Image out = median_filter(img, 1);
    CHECK(out.planes[0](3, 3) == 0.5);
    CHECK((out.planes[0] == 0.5).all());
  }
  SUBCASE("a vertical step edge survives in place") {
    Image img(8, 8, 1, 0.0);
    img.planes[0].rightCols(4).setConstant(1.0);
    const Image out = median_filter(img, 1);
    CHECK((out.planes[0] == img.planes[0]).all());
  }
  SUBCASE("idempotent on its own fixed points") {
    Image step(8, 8, 1, 0.0);
    step.planes[0].rightCols(4).setConstant(1.0);
    const Image once = median_filter(step, 1);
    const Image twice = median_filter(once, 1);
    CHECK((once.planes[0] == twice.planes[0]).all());
  }
  SUBCASE("output values come from the input range") {
    const Image img = random_image(16, 16, 1, 44);
    const Image out = median_filter(img, 2);
    CHECK((out.planes[0] >= img.planes[0].minCoeff()).all());
    CHECK((out.planes[0] <= img.planes[0].maxCoeff()).all());
  }
  SUBCASE("halfwidth below 1 is rejected") {
    CHECK_THROWS_AS(median_filter(random_image(4, 4, 1, 1), 0), std::invalid_argument);
  }
}

TEST_CASE("nlm_denoise") {
  SUBCASE("constant image is unchanged") {
    NlmConfig cfg;
    cfg.h = 0.05;
    cfg.patch_halfwidth = 2;
    cfg.window_halfwidth = 4;
    const Image img(16, 16, 1, 0.77);
    CHECK((nlm_denoise(img, cfg).planes[0] - 0.77).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("enormous h reduces to the search-window mean") {
    NlmConfig cfg;
    cfg.h = 1e6;
    cfg.patch_halfwidth = 1;
    cfg.window_halfwidth = 2;
    const Image img = random_image(10, 9, 1, 5);
    const Image out = nlm_denoise(img, cfg);
    for (Eigen::Index r = 0; r < 10; ++r)
      for (Eigen::Index c = 0; c < 9; ++c) {
        double acc = 0.0;
        int count = 0;
        for (Eigen::Index rr = std::max<Eigen::Index>(0, r - 2);
             rr <= std::min<Eigen::Index>(9, r + 2); ++rr)
          for (Eigen::Index cc = std::max<Eigen::Index>(0, c - 2);
               cc <= std::min<Eigen::Index>(8, c + 2); ++cc) {
            acc += img.planes[0](rr, cc);
            ++count;
          }
        CHECK(out.planes[0](r, c) == doctest::Approx(acc / count).epsilon(1e-9));
      }
  }
  SUBCASE("hand-evaluated step fixture") {
    // rows identical, columns step 0 -> 0.6 at column 2; patch 3x3, window 3x3
    Image img(5, 5, 1);
    for (Eigen::Index c = 0; c < 5; ++c) img.planes[0].col(c).setConstant(c < 2 ? 0.0 : 0.6);
    NlmConfig cfg;
    cfg.h = 0.3;
    cfg.patch_halfwidth = 1;
    cfg.window_halfwidth = 1;
    const Image out = nlm_denoise(img, cfg);
    // center pixel: offsets dc=+-1 both have mean squared distance 0.12, dc=0
    // zero; the three identical rows each contribute [e^{-4/3}, 1, e^{-4/3}]
    const double e = std::exp(-0.12 / (0.3 * 0.3));
    const double expected = 0.6 * (1.0 + e) / (1.0 + 2.0 * e);
    CHECK(out.planes[0](2, 2) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(out.planes[0](2, 2) == doctest::Approx(0.49643866184483626).epsilon(1e-9));
  }
  SUBCASE("matches the literal oracle on random images") {
    for (const auto [h, w] : {std::pair{6, 6}, {9, 7}, {5, 12}, {1, 8}}) {
      const Image img = random_image(h, w, 1, 900 + h * 13 + w);
      NlmConfig cfg;
      cfg.h = 0.2;
      cfg.patch_halfwidth = 1 + (h % 2);
      cfg.window_halfwidth = cfg.patch_halfwidth + 2;
      const Image fast = nlm_denoise(img, cfg);
      const Image slow = nlm_oracle(img, cfg);
      CHECK((fast.planes[0] - slow.planes[0]).abs().maxCoeff() < 1e-9);
    }
  }
  SUBCASE("output stays inside the search-window hull and weights sum to 1") {
    const Image img = random_image(20, 20, 3, 17);
    NlmConfig cfg;
    cfg.h = 0.15;
    cfg.patch_halfwidth = 2;
    cfg.window_halfwidth = 4;
    NlmStats stats;
    const Image out = nlm_denoise(img, cfg, &stats);
    CHECK(stats.max_weight_sum_error < 1e-6);
    for (int ch = 0; ch < 3; ++ch)
      for (Eigen::Index r = 0; r < 20; ++r)
        for (Eigen::Index c = 0; c < 20; ++c) {
          double lo = 1.0, hi = 0.0;
          for (Eigen::Index rr = std::max<Eigen::Index>(0, r - 4);
               rr <= std::min<Eigen::Index>(19, r + 4); ++rr)
            for (Eigen::Index cc = std::max<Eigen::Index>(0, c - 4);
                 cc <= std::min<Eigen::Index>(19, c + 4); ++cc) {
              lo = std::min(lo, img.planes[ch](rr, cc));
              hi = std::max(hi, img.planes[ch](rr, cc));
            }
          CHECK(out.planes[ch](r, c) >= lo - 1e-12);
          CHECK(out.planes[ch](r, c) <= hi + 1e-12);
        }
  }
  SUBCASE("invalid configs are rejected") {
    NlmConfig cfg;
    cfg.h = 0.0;
    CHECK_THROWS_AS(nlm_denoise(random_image(4, 4, 1, 1), cfg), std::invalid_argument);
    cfg.h = 0.1;
    cfg.window_halfwidth = 0;
    CHECK_THROWS_AS(nlm_denoise(random_image(4, 4, 1, 1), cfg), std::invalid_argument);
  }
}

namespace {

// Structure/smooth patch model trained on a clean edge scene, for the
// adaptive-bandwidth tests.
TwinModel edge_patch_model(const Image& clean, int patch_halfwidth) {
  const Plane lum = luma(clean);
  std::vector<Eigen::VectorXd> features;
  std::vector<int> labels;
  std::vector<double> gradients;
  for (Eigen::Index r = 0; r < lum.rows(); r += 2)
    for (Eigen::Index c = 0; c < lum.cols(); c += 2) {
      const PatchFeatures f = patch_features(lum, r, c, patch_halfwidth);
      features.push_back(f.vector());
      gradients.push_back(f.gradient_mean);
    }
  std::vector<double> sorted = gradients;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted[static_cast<std::size_t>(0.9 * (sorted.size() - 1))];
  for (double g : gradients) labels.push_back(g >= threshold ? +1 : -1);
  return train_iftsvm(assign_fuzzy_degrees(features, labels, 5), 10.0, 10.0);
}

}  // namespace

TEST_CASE("nlm_iftsvm_denoise") {
  Image clean(40, 40, 1, 0.25);
  clean.planes[0].rightCols(20).setConstant(0.75);  // vertical edge down the middle
  const TwinModel model = edge_patch_model(clean, 2);

  NlmConfig cfg;
  cfg.h = 0.06;
  cfg.patch_halfwidth = 2;
  cfg.window_halfwidth = 5;

  SUBCASE("unit bandwidth factors reproduce plain nlm bitwise") {
    const Image noisy = add_gaussian_noise(clean, NoiseSpec::gaussian(15.0, 31));
    NlmAdaptiveParams unit;
    unit.alpha_edge = 1.0;
    unit.alpha_smooth = 1.0;
    const Image adaptive = nlm_iftsvm_denoise(noisy, cfg, model, unit);
    const Image plain = nlm_denoise(noisy, cfg);
    CHECK((adaptive.planes[0] == plain.planes[0]).all());
  }
  SUBCASE("constant image is unchanged regardless of the model") {
    const Image flat(24, 24, 1, 0.5);
    const Image out = nlm_iftsvm_denoise(flat, cfg, model);
    CHECK((out.planes[0] - 0.5).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("edges keep more gradient while flat regions stay as quiet") {
    const Image noisy = add_gaussian_noise(clean, NoiseSpec::gaussian(15.0, 77));
    const Image plain = nlm_denoise(noisy, cfg);
    const Image adaptive = nlm_iftsvm_denoise(noisy, cfg, model);

    // gradient energy across the edge band (columns 17..22)
    auto edge_gradient = [](const Plane& p) {
      double acc = 0.0;
      for (Eigen::Index r = 1; r + 1 < p.rows(); ++r)
        for (Eigen::Index c = 17; c <= 22; ++c) acc += std::abs(p(r, c + 1) - p(r, c - 1)) * 0.5;
      return acc;
    };
    CHECK(edge_gradient(adaptive.planes[0]) >= edge_gradient(plain.planes[0]));

    // residual variance in the flat left block
    auto flat_var = [&](const Plane& p) {
      const Plane block = (p - clean.planes[0]).block(4, 4, 32, 10);
      const double mean = block.mean();
      return (block - mean).square().mean();
    };
    CHECK(flat_var(adaptive.planes[0]) <= 1.1 * flat_var(plain.planes[0]));
  }
  SUBCASE("degenerate model is rejected") {
    TwinModel broken;
    CHECK_THROWS_AS(nlm_iftsvm_denoise(clean, cfg, broken), std::invalid_argument);
  }
}
