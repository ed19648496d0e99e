#pragma once

#include <cstddef>
#include <vector>

#include "patchdrop/tensor.hpp"

namespace patchdrop::ops {

/// Batched matrix product. Supported operand ranks: 2x2, Nx2 (right operand
/// shared across batch elements) and NxN with identical batch extents.
/// Ticks the MAC meter with batch*m*k*n; the backward rules (dA = dC*B^T,
/// dB = A^T*dC) tick it again when they run.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum; the shape of `b` must be a trailing suffix of `a`'s and
/// is broadcast over the leading extents.
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise product of same-shape tensors.
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);

/// GELU, tanh approximation; backward uses the analytic derivative of the
/// same approximation.
Tensor gelu(const Tensor& x);

/// Softmax along `axis` (negative counts from the end); max-subtracted, rows
/// sum to 1 within 1e-12 for finite inputs.
Tensor softmax(const Tensor& x, int axis);

/// Layer normalization over the last extent followed by the affine map
/// gain * xhat + bias. gain and bias have shape [d]; eps must be positive.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);

/// Row selection on axis 1 of a [B, N, d] tensor; `indices` must be unique
/// and in [0, N). Backward scatters into the selected rows, zero elsewhere.
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& indices);

/// Per-sample variant: one index list per batch element, all the same length.
Tensor gather_rows(const Tensor& x,
                   const std::vector<std::vector<std::size_t>>& per_sample);

/// Concatenation along axis 1 of two [B, T, d] tensors.
Tensor concat_rows(const Tensor& a, const Tensor& b);

/// Contiguous slice [offset, offset+length) of the last extent.
Tensor slice_last(const Tensor& x, std::size_t offset, std::size_t length);

/// Axis permutation; out extent i equals in extent perm[i].
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);

Tensor reshape(const Tensor& x, Shape new_shape);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

}  // namespace patchdrop::ops
