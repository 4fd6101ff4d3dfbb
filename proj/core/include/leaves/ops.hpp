#pragma once

#include "leaves/tensor.hpp"

namespace leaves {

// Binary elementwise ops broadcast with trailing-dimension alignment;
// size-1 axes stretch. Gradients sum over stretched axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);  // any zero in b is an error
Tensor neg(const Tensor& a);

inline Tensor add(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
inline Tensor sub(const Tensor& a, double s) { return sub(a, Tensor::scalar(s)); }
inline Tensor mul(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
inline Tensor divide(const Tensor& a, double s) { return divide(a, Tensor::scalar(s)); }

// Unary elementwise maps with analytic derivatives.
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);   // strictly positive input
Tensor sqrt(const Tensor& a);  // non-negative input
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor logistic(const Tensor& a);
Tensor softplus(const Tensor& a);

// Reductions. The axis form removes the axis; the full form yields rank 0.
// max routes its gradient to the first-occurrence argmax.
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor max(const Tensor& a);
Tensor max(const Tensor& a, std::size_t axis);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// 1-D convolution: x (N,C_in,L), w (C_out,C_in,k), zero padding.
/// Output length floor((L + 2*padding - k)/stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding);

/// Linear resampling of `signal` at `locations` in [-1,1]; -1 maps to the
/// first sample and +1 to the last. Out-of-range locations clamp to the
/// boundary (zero gradient in the clamped region). Differentiable in both
/// the signal values and the locations. Leading dims of the two arguments
/// must match; the last dim of `locations` sets the output length.
Tensor interp1d(const Tensor& signal, const Tensor& locations);

struct SortResult {
  Tensor sorted;
  std::vector<std::size_t> perm;  // flat source index per output element
};
/// Ascending stable sort along the last axis. Backward scatters gradients
/// through the fixed forward permutation.
SortResult sort_lastaxis(const Tensor& a);

/// out[..., j] = a[..., idx[j]]. idx is fixed routing, not differentiable;
/// backward scatter-adds into the gathered positions.
Tensor gather_lastaxis(const Tensor& a, const std::vector<std::size_t>& idx);

/// Single element of a rank-1 tensor as a rank-0 tensor.
Tensor select(const Tensor& a, std::size_t index);

}  // namespace leaves
