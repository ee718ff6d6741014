#include "vsm/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace vsm {

namespace {

std::string lower_ext(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
}

// --- PNM -------------------------------------------------------------------

// Reads one whitespace-delimited token, skipping '#' comments.
int pnm_next_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw std::runtime_error(path + ": malformed PNM header");
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > 1 << 24) throw std::runtime_error(path + ": PNM header value out of range");
    c = in.get();
  }
  return static_cast<int>(v);
}

Image load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    if (magic[0] == 'P' && (magic[1] == '2' || magic[1] == '3'))
      throw std::runtime_error(path + ": ASCII PNM unsupported, use binary P5/P6");
    throw std::runtime_error(path + ": not a binary PGM/PPM file");
  }
  const int channels = magic[1] == '5' ? 1 : 3;
  const int w = pnm_next_int(in, path);
  const int h = pnm_next_int(in, path);
  const int maxval = pnm_next_int(in, path);
  if (w < 1 || h < 1) throw std::runtime_error(path + ": invalid PNM dimensions");
  if (maxval != 255) throw std::runtime_error(path + ": unsupported bit depth (maxval must be 255)");
  // pnm_next_int consumed the single whitespace after maxval; pixels follow.
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size())
    throw std::runtime_error(path + ": truncated PNM pixel data");

  Image img(h, w, channels);
  std::size_t idx = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < channels; ++ch) img.planes[ch](r, c) = buf[idx++] / 255.0;
  return img;
}

void save_pnm(const Image& img, const std::string& path) {
  const int channels = img.channels();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << (channels == 1 ? "P5" : "P6") << "\n"
      << img.width() << " " << img.height() << "\n255\n";
  std::vector<std::uint8_t> buf;
  buf.reserve(static_cast<std::size_t>(img.width()) * img.height() * channels);
  for (Eigen::Index r = 0; r < img.height(); ++r)
    for (Eigen::Index c = 0; c < img.width(); ++c)
      for (int ch = 0; ch < channels; ++ch) buf.push_back(quantize(img.planes[ch](r, c)));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

// --- PNG -------------------------------------------------------------------

struct FileCloser {
  std::FILE* f = nullptr;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

Image load_png(const std::string& path) {
  FileCloser fc;
  fc.f = std::fopen(path.c_str(), "rb");
  if (!fc.f) throw std::runtime_error(path + ": cannot open for reading");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng: out of memory");
  }
  std::vector<std::uint8_t> data;
  int w = 0, h = 0, channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path + ": corrupt or invalid PNG");
  }
  png_init_io(png, fc.f);
  png_read_info(png, info);

  const png_byte depth = png_get_bit_depth(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path + ": unsupported bit depth (16-bit PNG)");
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  if (channels == 4) channels = 3;  // alpha stripped above
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path + ": unsupported PNG channel layout");
  }
  data.resize(static_cast<std::size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (int r = 0; r < h; ++r) rows[r] = data.data() + static_cast<std::size_t>(r) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(h, w, channels);
  std::size_t idx = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < channels; ++ch) img.planes[ch](r, c) = data[idx++] / 255.0;
  return img;
}

void save_png(const Image& img, const std::string& path) {
  FileCloser fc;
  fc.f = std::fopen(path.c_str(), "wb");
  if (!fc.f) throw std::runtime_error(path + ": cannot open for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error(path + ": PNG write failed");
  }
  const int w = static_cast<int>(img.width()), h = static_cast<int>(img.height());
  const int channels = img.channels();
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, w, h, 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
  for (int r = 0; r < h; ++r) {
    std::size_t idx = 0;
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < channels; ++ch) row[idx++] = quantize(img.planes[ch](r, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image load_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "png") return load_png(path);
  if (ext == "pgm" || ext == "ppm" || ext == "pnm") return load_pnm(path);
  throw std::runtime_error(path + ": unsupported image format (png/pgm/ppm)");
}

void save_image(const Image& img, const std::string& path) {
  validate(img);
  const std::string ext = lower_ext(path);
  if (ext == "png") return save_png(img, path);
  if (ext == "pgm" || ext == "ppm" || ext == "pnm") {
    if (ext == "pgm" && img.channels() != 1)
      throw std::runtime_error(path + ": PGM holds single-channel images only");
    if (ext == "ppm" && img.channels() != 3)
      throw std::runtime_error(path + ": PPM holds RGB images only");
    return save_pnm(img, path);
  }
  throw std::runtime_error(path + ": unsupported image format (png/pgm/ppm)");
}

Mask load_mask(const std::string& path) {
  Image img = load_image(path);
  if (img.channels() != 1) throw std::runtime_error(path + ": mask must be single-channel");
  Mask m(img.height(), img.width());
  for (Eigen::Index r = 0; r < img.height(); ++r)
    for (Eigen::Index c = 0; c < img.width(); ++c) {
      const double v = img.planes[0](r, c);
      if (v == 0.0)
        m(r, c) = 0;
      else if (v == 1.0)
        m(r, c) = 1;
      else
        throw std::runtime_error(path + ": mask pixel not in {0,255}");
    }
  return m;
}

void save_mask(const Mask& m, const std::string& path) {
  validate(m);
  Image img;
  img.planes.push_back(m.cast<double>());
  save_image(img, path);
}

}  // namespace vsm
