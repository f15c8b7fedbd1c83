#include "shapeseg/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <memory>

namespace shapeseg {
NDGRAD_NS_BEGIN

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct PngRead {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngRead() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWrite {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWrite() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

// Decodes to 16-bit samples; channels averaged. Returns raw values and the
// bit depth of the source.
void read_png_raw(const std::string& path, int* height, int* width, int* bit_depth,
                  std::vector<uint32_t>* samples) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open PNG " + path);
  PngRead ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw std::runtime_error("png_create_read_struct failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("failed to decode PNG " + path);

  png_init_io(ctx.png, f.get());
  png_read_info(ctx.png, ctx.info);

  const int w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  const int h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  int depth = png_get_bit_depth(ctx.png, ctx.info);
  const int color = png_get_color_type(ctx.png, ctx.info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  png_set_strip_alpha(ctx.png);
  if (depth == 16) png_set_swap(ctx.png);  // libpng stores 16-bit big-endian
  png_read_update_info(ctx.png, ctx.info);

  depth = png_get_bit_depth(ctx.png, ctx.info);
  const int channels = png_get_channels(ctx.png, ctx.info);
  const size_t rowbytes = png_get_rowbytes(ctx.png, ctx.info);

  std::vector<uint8_t> buf(rowbytes * static_cast<size_t>(h));
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = buf.data() + rowbytes * static_cast<size_t>(y);
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);

  samples->assign(static_cast<size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    const uint8_t* row = rows[static_cast<size_t>(y)];
    for (int x = 0; x < w; ++x) {
      uint32_t acc = 0;
      for (int c = 0; c < channels; ++c) {
        if (depth == 16) {
          const size_t i = (static_cast<size_t>(x) * channels + c) * 2;
          uint16_t v;
          std::memcpy(&v, row + i, 2);
          acc += v;
        } else {
          acc += row[static_cast<size_t>(x) * channels + c];
        }
      }
      (*samples)[static_cast<size_t>(y) * w + x] = acc / static_cast<uint32_t>(channels);
    }
  }
  *height = h;
  *width = w;
  *bit_depth = depth;
}

void write_png_raw(const std::string& path, int height, int width, int bit_depth, int color_type,
                   const std::vector<uint8_t>& bytes) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write PNG " + path);
  PngWrite ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw std::runtime_error("png_create_write_struct failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("failed to encode PNG " + path);

  png_init_io(ctx.png, f.get());
  png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  if (bit_depth == 16) png_set_swap(ctx.png);

  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const size_t rowbytes = static_cast<size_t>(width) * channels * (bit_depth / 8);
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(bytes.data() + rowbytes * static_cast<size_t>(y));
  png_write_image(ctx.png, rows.data());
  png_write_end(ctx.png, nullptr);
}

}  // namespace

GrayImage read_gray_png(const std::string& path) {
  int h, w, depth;
  std::vector<uint32_t> raw;
  read_png_raw(path, &h, &w, &depth, &raw);
  GrayImage img(h, w);
  if (depth == 16) {
    uint32_t mx = 0;
    for (uint32_t v : raw) mx = std::max(mx, v);
    const float scale = mx > 0 ? 1.f / static_cast<float>(mx) : 0.f;
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = static_cast<float>(raw[i]) * scale;
  } else {
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = static_cast<float>(raw[i]) / 255.f;
  }
  return img;
}

LabelImage read_label_png(const std::string& path) {
  int h, w, depth;
  std::vector<uint32_t> raw;
  read_png_raw(path, &h, &w, &depth, &raw);
  LabelImage labels(h, w);
  for (size_t i = 0; i < raw.size(); ++i) labels.data[i] = raw[i];
  return labels;
}

void write_gray_png(const std::string& path, const GrayImage& img) {
  std::vector<uint8_t> bytes(img.size());
  for (size_t i = 0; i < img.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.f, 1.f);
    bytes[i] = static_cast<uint8_t>(v * 255.f + 0.5f);
  }
  write_png_raw(path, img.height, img.width, 8, PNG_COLOR_TYPE_GRAY, bytes);
}

void write_label_png(const std::string& path, const LabelImage& labels) {
  if (labels.max_id() > 0xffff)
    throw std::runtime_error("label PNG supports at most 65535 instances");
  std::vector<uint8_t> bytes(labels.size() * 2);
  for (size_t i = 0; i < labels.size(); ++i) {
    const uint16_t v = static_cast<uint16_t>(labels.data[i]);
    std::memcpy(bytes.data() + 2 * i, &v, 2);
  }
  write_png_raw(path, labels.height, labels.width, 16, PNG_COLOR_TYPE_GRAY, bytes);
}

void write_rgb_png(const std::string& path, int height, int width,
                   const std::vector<uint8_t>& rgb) {
  if (rgb.size() != static_cast<size_t>(height) * width * 3)
    throw std::runtime_error("write_rgb_png: buffer size mismatch");
  write_png_raw(path, height, width, 8, PNG_COLOR_TYPE_RGB, rgb);
}

NDGRAD_NS_END
}  // namespace shapeseg
