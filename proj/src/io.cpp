#include "monet/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace monet {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::vector<std::uint8_t> read_png(const fs::path& path, std::uint32_t format, int& width,
                                   int& height) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
  image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buf;
}

void write_png(const fs::path& path, const std::vector<std::uint8_t>& pixels, int width,
               int height, std::uint32_t format) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw std::runtime_error("cannot encode PNG " + path.string() + ": " + image.message);
  std::string buf(size, '\0');
  if (!png_image_write_to_memory(&image, buf.data(), &size, 0, pixels.data(), 0, nullptr))
    throw std::runtime_error("cannot encode PNG " + path.string() + ": " + image.message);
  buf.resize(size);
  write_file_atomic(path, buf);
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Tensor read_png_rgb(const fs::path& path) {
  int w = 0, h = 0;
  const auto buf = read_png(path, PNG_FORMAT_RGB, w, h);
  Tensor out({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3});
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i] / 255.0;
  return out;
}

std::vector<std::uint8_t> read_png_gray(const fs::path& path, int& width, int& height) {
  return read_png(path, PNG_FORMAT_GRAY, width, height);
}

void write_png_rgb(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw std::invalid_argument("write_png_rgb: expected [H, W, 3], got " +
                                shape_to_string(image.shape()));
  std::vector<std::uint8_t> px(image.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_byte(image[i]);
  write_png(path, px, static_cast<int>(image.dim(1)), static_cast<int>(image.dim(0)),
            PNG_FORMAT_RGB);
}

void write_png_gray(const fs::path& path, const std::vector<std::uint8_t>& pixels, int width,
                    int height) {
  if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw std::invalid_argument("write_png_gray: pixel count does not match dimensions");
  write_png(path, pixels, width, height, PNG_FORMAT_GRAY);
}

Tensor resize_bilinear(const Tensor& image, int size) {
  if (image.rank() != 3) throw std::invalid_argument("resize_bilinear: expected [H, W, C]");
  const auto h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const auto n = static_cast<std::size_t>(size);
  if (h == n && w == n) return image;
  Tensor out({n, n, c});
  const double sy = static_cast<double>(h) / size;
  const double sx = static_cast<double>(w) / size;
  for (std::size_t y = 0; y < n; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (std::size_t x = 0; x < n; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      for (std::size_t k = 0; k < c; ++k) {
        const double top = image.at(y0, x0, k) * (1 - tx) + image.at(y0, x1, k) * tx;
        const double bot = image.at(y1, x0, k) * (1 - tx) + image.at(y1, x1, k) * tx;
        out.at(y, x, k) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

}  // namespace monet
