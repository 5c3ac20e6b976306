#include "him/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace him {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint8_t to_byte(double v) {
  if (v < 0.0) v = 0.0;
  if (v > 1.0) v = 1.0;
  return static_cast<uint8_t>(std::lround(v * 255.0));
}

void write_png(const std::string& path, const uint8_t* bytes, int h, int w,
               int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> row_ptrs(static_cast<size_t>(h));
  for (int i = 0; i < h; ++i)
    row_ptrs[static_cast<size_t>(i)] =
        const_cast<png_bytep>(bytes + static_cast<int64_t>(i) * w * channels);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// always returns 8-bit, channels as requested (1 or 3)
std::vector<uint8_t> read_png(const std::string& path, int* h, int* w,
                              int want_channels) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png read error: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_expand(png);
  if (want_channels == 3)
    png_set_gray_to_rgb(png);
  else
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  *h = static_cast<int>(png_get_image_height(png, info));
  *w = static_cast<int>(png_get_image_width(png, info));
  const int rowbytes = static_cast<int>(png_get_rowbytes(png, info));
  if (rowbytes != *w * want_channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unexpected channel layout in " + path);
  }
  std::vector<uint8_t> bytes(static_cast<size_t>(*h) * rowbytes);
  std::vector<png_bytep> row_ptrs(static_cast<size_t>(*h));
  for (int i = 0; i < *h; ++i)
    row_ptrs[static_cast<size_t>(i)] = bytes.data() + static_cast<int64_t>(i) * rowbytes;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return bytes;
}

}  // namespace

void write_png_rgb(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw IoError("write_png_rgb: expected (3,H,W), got " + image.shape_str());
  const int h = image.dim(1), w = image.dim(2);
  std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * 3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      bytes[static_cast<size_t>(i * 3 + c)] = to_byte(image[c * plane + i]);
  write_png(path, bytes.data(), h, w, 3);
}

void write_png_gray(const std::string& path, const Tensor& image) {
  if (image.rank() != 2)
    throw IoError("write_png_gray: expected (H,W), got " + image.shape_str());
  const int h = image.dim(0), w = image.dim(1);
  std::vector<uint8_t> bytes(static_cast<size_t>(h) * w);
  for (int64_t i = 0; i < image.numel(); ++i)
    bytes[static_cast<size_t>(i)] = to_byte(image[i]);
  write_png(path, bytes.data(), h, w, 1);
}

Tensor read_png_rgb(const std::string& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> bytes = read_png(path, &h, &w, 3);
  Tensor t = Tensor::zeros({3, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      t[c * plane + i] = bytes[static_cast<size_t>(i * 3 + c)] / 255.0;
  return t;
}

Tensor read_png_gray(const std::string& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> bytes = read_png(path, &h, &w, 1);
  Tensor t = Tensor::zeros({h, w});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = bytes[static_cast<size_t>(i)] / 255.0;
  return t;
}

void write_png_trimap(const std::string& path, const Tensor& trimap) {
  if (trimap.rank() != 2)
    throw IoError("write_png_trimap: expected (H,W), got " + trimap.shape_str());
  const int h = trimap.dim(0), w = trimap.dim(1);
  std::vector<uint8_t> bytes(static_cast<size_t>(h) * w);
  for (int64_t i = 0; i < trimap.numel(); ++i) {
    const int label = static_cast<int>(std::lround(trimap[i]));
    if (label < 0 || label > 2)
      throw IoError("write_png_trimap: label out of {0,1,2}");
    bytes[static_cast<size_t>(i)] =
        label == 0 ? 0 : (label == 1 ? 128 : 255);
  }
  write_png(path, bytes.data(), h, w, 1);
}

Tensor read_png_trimap(const std::string& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> bytes = read_png(path, &h, &w, 1);
  Tensor t = Tensor::zeros({h, w});
  for (int64_t i = 0; i < t.numel(); ++i) {
    const uint8_t b = bytes[static_cast<size_t>(i)];
    if (b == 0) t[i] = 0.0;
    else if (b == 128) t[i] = 1.0;
    else if (b == 255) t[i] = 2.0;
    else throw IoError("trimap byte " + std::to_string(b) + " in " + path);
  }
  return t;
}

}  // namespace him
