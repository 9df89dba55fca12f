#include "occlab/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace occlab::evalkit {

namespace {

uint8_t quantize(double v) {
  const double clamped = std::min(1.0, std::max(0.0, v));
  return static_cast<uint8_t>(std::lround(clamped * 255.0));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

void write_png(const std::filesystem::path& path, const Eigen::MatrixXd& rgb, int width,
               int height) {
  if (rgb.rows() != static_cast<Eigen::Index>(width) * height || rgb.cols() != 3)
    throw std::invalid_argument("write_png: image shape mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png writer init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(static_cast<size_t>(width) * 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
      row[3 * x + 0] = quantize(rgb(p, 0));
      row[3 * x + 1] = quantize(rgb(p, 1));
      row[3 * x + 2] = quantize(rgb(p, 2));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Eigen::MatrixXd read_png(const std::filesystem::path& path, int& width, int& height) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png reader init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png read failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));

  // Normalize to 8-bit RGB regardless of the stored format.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  std::vector<uint8_t> row(png_get_rowbytes(png, info));
  Eigen::MatrixXd rgb(static_cast<Eigen::Index>(width) * height, 3);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
      rgb(p, 0) = row[3 * x + 0] / 255.0;
      rgb(p, 1) = row[3 * x + 1] / 255.0;
      rgb(p, 2) = row[3 * x + 2] / 255.0;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return rgb;
}

void write_ppm(const std::filesystem::path& path, const Eigen::MatrixXd& rgb, int width,
               int height) {
  if (rgb.rows() != static_cast<Eigen::Index>(width) * height || rgb.cols() != 3)
    throw std::invalid_argument("write_ppm: image shape mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "P3\n" << width << " " << height << "\n255\n";
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
      out << int(quantize(rgb(p, 0))) << ' ' << int(quantize(rgb(p, 1))) << ' '
          << int(quantize(rgb(p, 2)));
      out << (x + 1 == width ? '\n' : ' ');
    }
  }
}

namespace {
constexpr char kDepthMagic[4] = {'O', 'D', 'P', 'T'};
}

void write_depth(const std::filesystem::path& path, const Eigen::VectorXd& depth, int width,
                 int height) {
  if (depth.size() != static_cast<Eigen::Index>(width) * height)
    throw std::invalid_argument("write_depth: size mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(kDepthMagic, 4);
  const int32_t w = width, h = height;
  out.write(reinterpret_cast<const char*>(&w), sizeof(w));
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  for (Eigen::Index i = 0; i < depth.size(); ++i) {
    const float v = static_cast<float>(depth(i));
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
}

Eigen::VectorXd read_depth(const std::filesystem::path& path, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDepthMagic, 4) != 0)
    throw std::runtime_error("not a depth file: " + path.string());
  int32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&w), sizeof(w));
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  width = w;
  height = h;
  Eigen::VectorXd depth(static_cast<Eigen::Index>(w) * h);
  for (Eigen::Index i = 0; i < depth.size(); ++i) {
    float v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("depth file truncated: " + path.string());
    depth(i) = v;
  }
  return depth;
}

}  // namespace occlab::evalkit
