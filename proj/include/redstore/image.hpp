#pragma once

#include <string>
#include <string_view>

#include "redstore/tensor.hpp"

namespace redstore {

// Binary PPM (P6), maxval 255. Images are (3,H,W) tensors in [0,1]; a pixel
// byte k decodes to k/255.0, so values on the 1/255 grid round-trip exactly.
std::string encode_ppm(const Tensor& image);
Tensor decode_ppm(std::string_view bytes);

void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// Snap pixel values to the 1/255 grid (what an 8-bit asset pipeline yields).
Tensor quantize_pixels(const Tensor& image);

}  // namespace redstore
