#pragma once

#include <string>

#include "him/tensor.hpp"

// 8-bit PNG I/O. Values map linearly: stored byte = round(v*255) after
// clamping to [0,1]; loaded value = byte/255. Failures throw IoError.
namespace him {

void write_png_rgb(const std::string& path, const Tensor& image);    // (3,H,W)
void write_png_gray(const std::string& path, const Tensor& image);   // (H,W)
Tensor read_png_rgb(const std::string& path);                        // (3,H,W)
Tensor read_png_gray(const std::string& path);                       // (H,W)

// Label maps {0=BG,1=UNK,2=FG} stored as bytes {0,128,255}; any other byte in
// the file is rejected.
void write_png_trimap(const std::string& path, const Tensor& trimap);  // (H,W)
Tensor read_png_trimap(const std::string& path);                       // (H,W)

}  // namespace him
