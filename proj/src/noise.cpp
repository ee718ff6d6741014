#include "vsm/noise.hpp"

#include "vsm/rng.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace vsm {

namespace {

std::map<std::string, std::string> parse_kv(const std::string& text, const std::string& what) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(what + ": expected key=value, got '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return kv;
}

double to_double(const std::map<std::string, std::string>& kv, const std::string& key,
                 const std::string& what) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::invalid_argument(what + ": missing parameter '" + key + "'");
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(it->second, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument(what + ": bad number for '" + key + "'");
  }
  if (pos != it->second.size())
    throw std::invalid_argument(what + ": bad number for '" + key + "'");
  return v;
}

std::string format_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Blur: return "blur";
    case NoiseKind::SaltPepper: return "sp";
    case NoiseKind::Gaussian: return "gauss";
  }
  return "?";
}

void NoiseSpec::validate() const {
  switch (kind) {
    case NoiseKind::Blur:
      if (!(sigma_blur > 0)) throw std::invalid_argument("noise: blur sigma must be > 0");
      if (kernel_halfwidth < 1) throw std::invalid_argument("noise: blur k must be >= 1");
      break;
    case NoiseKind::SaltPepper:
      if (!(density >= 0.0 && density <= 1.0))
        throw std::invalid_argument("noise: salt-pepper density must be in [0,1]");
      break;
    case NoiseKind::Gaussian:
      if (!(sigma_noise >= 0)) throw std::invalid_argument("noise: gaussian sigma must be >= 0");
      break;
  }
}

std::string NoiseSpec::to_string() const {
  std::string s = vsm::to_string(kind) + ":";
  switch (kind) {
    case NoiseKind::Blur:
      s += "sigma=" + format_num(sigma_blur) + ",k=" + std::to_string(kernel_halfwidth);
      break;
    case NoiseKind::SaltPepper:
      s += "p=" + format_num(density);
      break;
    case NoiseKind::Gaussian:
      s += "sigma=" + format_num(sigma_noise);
      break;
  }
  s += ",seed=" + std::to_string(seed);
  return s;
}

NoiseSpec NoiseSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  const std::string what = "noise spec '" + text + "'";
  auto kv = parse_kv(rest, what);

  NoiseSpec spec;
  if (kind == "blur") {
    spec.kind = NoiseKind::Blur;
    spec.sigma_blur = to_double(kv, "sigma", what);
    spec.kernel_halfwidth = kv.count("k") ? static_cast<int>(to_double(kv, "k", what))
                                          : default_kernel_halfwidth(spec.sigma_blur);
  } else if (kind == "sp") {
    spec.kind = NoiseKind::SaltPepper;
    spec.density = to_double(kv, "p", what);
  } else if (kind == "gauss") {
    spec.kind = NoiseKind::Gaussian;
    spec.sigma_noise = to_double(kv, "sigma", what);
  } else {
    throw std::invalid_argument(what + ": unknown kind (blur|sp|gauss)");
  }
  if (kv.count("seed")) spec.seed = static_cast<std::uint64_t>(to_double(kv, "seed", what));
  spec.validate();
  return spec;
}

NoiseSpec NoiseSpec::blur(double sigma, int k, std::uint64_t seed) {
  NoiseSpec s;
  s.kind = NoiseKind::Blur;
  s.sigma_blur = sigma;
  s.kernel_halfwidth = k;
  s.seed = seed;
  s.validate();
  return s;
}

NoiseSpec NoiseSpec::salt_pepper(double p, std::uint64_t seed) {
  NoiseSpec s;
  s.kind = NoiseKind::SaltPepper;
  s.density = p;
  s.seed = seed;
  s.validate();
  return s;
}

NoiseSpec NoiseSpec::gaussian(double sigma, std::uint64_t seed) {
  NoiseSpec s;
  s.kind = NoiseKind::Gaussian;
  s.sigma_noise = sigma;
  s.seed = seed;
  s.validate();
  return s;
}

int default_kernel_halfwidth(double sigma) {
  return static_cast<int>(std::ceil(3.0 * sigma));
}

Kernel gaussian_kernel(double sigma, int halfwidth) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
  if (halfwidth < 0) throw std::invalid_argument("gaussian_kernel: halfwidth must be >= 0");
  const int n = 2 * halfwidth + 1;
  Kernel kernel;
  kernel.halfwidth = halfwidth;
  kernel.weights.resize(n, n);
  for (int i = -halfwidth; i <= halfwidth; ++i)
    for (int j = -halfwidth; j <= halfwidth; ++j)
      kernel.weights(i + halfwidth, j + halfwidth) =
          std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
  kernel.weights /= kernel.weights.sum();
  return kernel;
}

Image apply_blur(const Image& img, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::Blur) throw std::invalid_argument("apply_blur: spec kind mismatch");
  spec.validate();
  const Kernel kernel = gaussian_kernel(spec.sigma_blur, spec.kernel_halfwidth);
  const int k = kernel.halfwidth;
  const Eigen::Index h = img.height(), w = img.width();

  Image out(h, w, img.channels());
  Plane pad(h + 2 * k, w + 2 * k);
  for (int ch = 0; ch < img.channels(); ++ch) {
    const Plane& in = img.planes[ch];
    for (Eigen::Index r = 0; r < pad.rows(); ++r)
      for (Eigen::Index c = 0; c < pad.cols(); ++c)
        pad(r, c) = in(reflect101(r - k, h), reflect101(c - k, w));
    Plane& dst = out.planes[ch];
    for (Eigen::Index r = 0; r < h; ++r) {
      for (Eigen::Index c = 0; c < w; ++c) {
        double acc = 0.0;
        for (int i = -k; i <= k; ++i)
          for (int j = -k; j <= k; ++j)
            acc += kernel.weights(i + k, j + k) * pad(r - i + k, c - j + k);
        dst(r, c) = std::min(1.0, std::max(0.0, acc));
      }
    }
  }
  return out;
}

Image add_salt_pepper(const Image& img, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::SaltPepper)
    throw std::invalid_argument("add_salt_pepper: spec kind mismatch");
  spec.validate();
  Image out = img;
  Rng rng(spec.seed);
  const double p = spec.density;
  for (Eigen::Index r = 0; r < img.height(); ++r) {
    for (Eigen::Index c = 0; c < img.width(); ++c) {
      const double u = rng.uniform();
      if (u < p / 2.0) {
        for (auto& plane : out.planes) plane(r, c) = 0.0;
      } else if (u < p) {
        for (auto& plane : out.planes) plane(r, c) = 1.0;
      }
    }
  }
  return out;
}

Image add_gaussian_noise(const Image& img, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::Gaussian)
    throw std::invalid_argument("add_gaussian_noise: spec kind mismatch");
  spec.validate();
  Image out = img;
  Rng rng(spec.seed);
  const double sigma = spec.sigma_noise / 255.0;
  for (Eigen::Index r = 0; r < img.height(); ++r)
    for (Eigen::Index c = 0; c < img.width(); ++c)
      for (auto& plane : out.planes) {
        const double v = plane(r, c) + sigma * rng.normal();
        plane(r, c) = std::min(1.0, std::max(0.0, v));
      }
  return out;
}

Image corrupt(const Image& img, const NoiseSpec& spec) {
  switch (spec.kind) {
    case NoiseKind::Blur: return apply_blur(img, spec);
    case NoiseKind::SaltPepper: return add_salt_pepper(img, spec);
    case NoiseKind::Gaussian: return add_gaussian_noise(img, spec);
  }
  throw std::invalid_argument("corrupt: unknown noise kind");
}

}  // namespace vsm
