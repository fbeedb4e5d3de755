#include "redstore/dct.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace redstore {

namespace {
constexpr double kPi = 3.14159265358979323846;

std::mutex g_basis_mutex;
std::map<std::size_t, RowMat> g_basis_cache;
}  // namespace

const RowMat& dct_basis(std::size_t n) {
  if (n == 0) throw ShapeError("dct_basis: size must be positive");
  std::lock_guard<std::mutex> lock(g_basis_mutex);
  auto it = g_basis_cache.find(n);
  if (it != g_basis_cache.end()) return it->second;
  RowMat b(n, n);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double s = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k)
      b(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
          (j == 0 ? s0 : s) *
          std::cos(kPi * (2.0 * static_cast<double>(k) + 1.0) * static_cast<double>(j) /
                   (2.0 * static_cast<double>(n)));
  return g_basis_cache.emplace(n, std::move(b)).first->second;
}

static Tensor transform2d(const Tensor& t, bool inverse) {
  if (t.rank() != 2)
    throw ShapeError("dct2: needs an (H,W) matrix, got " + shape_str(t.shape));
  const std::size_t h = t.shape[0], w = t.shape[1];
  const RowMat& bh = dct_basis(h);
  const RowMat& bw = dct_basis(w);
  RowMat out;
  if (inverse)
    out = bh.transpose() * t.mat(h, w) * bw;
  else
    out = bh * t.mat(h, w) * bw.transpose();
  return Tensor({h, w}, Eigen::Map<Eigen::VectorXd>(out.data(), out.size()));
}

Tensor dct2(const Tensor& channel) { return transform2d(channel, false); }

Tensor idct2(const Tensor& coeffs) { return transform2d(coeffs, true); }

static Tensor transform_channels(const Tensor& image, bool inverse) {
  if (image.rank() != 3)
    throw ShapeError("dct2_channels: needs (C,H,W), got " + shape_str(image.shape));
  const std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
  Tensor out = Tensor::zeros(image.shape);
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < c; ++i) {
    Tensor ch({h, w}, image.data.segment(static_cast<Eigen::Index>(i * plane),
                                         static_cast<Eigen::Index>(plane)));
    Tensor tc = transform2d(ch, inverse);
    out.data.segment(static_cast<Eigen::Index>(i * plane), static_cast<Eigen::Index>(plane)) =
        tc.data;
  }
  return out;
}

Tensor dct2_channels(const Tensor& image) { return transform_channels(image, false); }

Tensor idct2_channels(const Tensor& coeffs) { return transform_channels(coeffs, true); }

Tensor spectral_gradient(const Tensor& pixel_grad) {
  if (pixel_grad.rank() != 3)
    throw ShapeError("spectral_gradient: needs (C,H,W), got " + shape_str(pixel_grad.shape));
  return dct2_channels(pixel_grad);
}

Tensor reconstruct_delta(const SpectralPerturbation& p) {
  if (p.epsilon < 0.0) throw DomainError("reconstruct_delta: negative epsilon");
  Tensor delta = idct2_channels(p.coefficients);
  delta.data = delta.data.cwiseMax(-p.epsilon).cwiseMin(p.epsilon);
  return delta;
}

}  // namespace redstore
