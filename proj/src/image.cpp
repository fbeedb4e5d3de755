#include "redstore/image.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace redstore {

static void check_image(const Tensor& image) {
  if (image.rank() != 3 || image.shape[0] != 3)
    throw ShapeError("ppm: image must be (3,H,W), got " + shape_str(image.shape));
  const double lo = image.data.minCoeff(), hi = image.data.maxCoeff();
  if (lo < -1e-9 || hi > 1.0 + 1e-9)
    throw DomainError("ppm: pixel values outside [0,1]");
}

std::string encode_ppm(const Tensor& image) {
  check_image(image);
  const std::size_t h = image.shape[1], w = image.shape[2];
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + 3 * h * w);
  const std::size_t plane = h * w;
  const double* px = image.data.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      double v = px[c * plane + i] * 255.0;
      long b = std::lround(v);
      if (b < 0) b = 0;
      if (b > 255) b = 255;
      out.push_back(static_cast<char>(static_cast<unsigned char>(b)));
    }
  return out;
}

namespace {

// skips PPM whitespace and '#' comments, then parses a decimal token
std::size_t parse_number(std::string_view s, std::size_t& pos) {
  while (pos < s.size()) {
    const char c = s[pos];
    if (c == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= s.size() || s[pos] < '0' || s[pos] > '9')
    throw ParseError("ppm: expected a number in header");
  std::size_t value = 0;
  while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
    value = value * 10 + static_cast<std::size_t>(s[pos] - '0');
    ++pos;
  }
  return value;
}

}  // namespace

Tensor decode_ppm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw ParseError("ppm: missing P6 magic");
  std::size_t pos = 2;
  const std::size_t w = parse_number(bytes, pos);
  const std::size_t h = parse_number(bytes, pos);
  const std::size_t maxval = parse_number(bytes, pos);
  if (w == 0 || h == 0) throw ParseError("ppm: zero dimensions");
  if (maxval != 255) throw ParseError("ppm: unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size()) throw ParseError("ppm: truncated header");
  ++pos;  // single whitespace byte after maxval
  if (bytes.size() - pos < 3 * w * h) throw ParseError("ppm: truncated pixel data");
  Tensor image = Tensor::zeros({3, h, w});
  const std::size_t plane = h * w;
  double* px = image.data.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      px[c * plane + i] =
          static_cast<double>(static_cast<unsigned char>(bytes[pos + 3 * i + c])) / 255.0;
  return image;
}

void write_ppm(const std::string& path, const Tensor& image) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const std::string bytes = encode_ppm(image);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return decode_ppm(buf.str());
}

Tensor quantize_pixels(const Tensor& image) {
  Tensor out = image;
  out.node = kNoNode;
  for (Eigen::Index i = 0; i < out.data.size(); ++i) {
    double v = std::round(out.data[i] * 255.0) / 255.0;
    out.data[i] = std::min(1.0, std::max(0.0, v));
  }
  return out;
}

}  // namespace redstore
