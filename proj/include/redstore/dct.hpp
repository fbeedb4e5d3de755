#pragma once

#include "redstore/tensor.hpp"

namespace redstore {

// Orthonormal DCT-II basis for size n: row j, column k holds
// s_j * cos(pi * (2k+1) * j / (2n)) with s_0 = sqrt(1/n), s_j = sqrt(2/n).
// The inverse transform (DCT-III) is the transpose.
const RowMat& dct_basis(std::size_t n);

// 2-d orthonormal DCT-II of an (H,W) matrix: B_H * X * B_W^T.
Tensor dct2(const Tensor& channel);

// Exact inverse of dct2: B_H^T * Y * B_W.
Tensor idct2(const Tensor& coeffs);

// Per-channel transforms of a (C,H,W) image.
Tensor dct2_channels(const Tensor& image);
Tensor idct2_channels(const Tensor& coeffs);

// Chain-rule gradient through the linear idct2 map: the per-channel dct2
// of the pixel-space gradient (the adjoint of idct2_channels).
Tensor spectral_gradient(const Tensor& pixel_grad);

// Perturbation held as per-channel DCT coefficient grids plus the
// pixel-space l-infinity budget it must satisfy after reconstruction.
struct SpectralPerturbation {
  Tensor coefficients;  // (C,H,W), same dims as the image
  double epsilon = 16.0 / 255.0;
};

// idct2 of the coefficients followed by projection onto the epsilon ball.
Tensor reconstruct_delta(const SpectralPerturbation& p);

}  // namespace redstore
