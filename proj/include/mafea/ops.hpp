#pragma once

#include "mafea/tensor.hpp"

namespace mafea::ops {

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a*x + b with scalar coefficients.
Tensor affine(const Tensor& x, double a, double b);
Tensor log(const Tensor& x);
/// Values pinned to [lo, hi]; gradient passes only where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor leaky_relu(const Tensor& x, double slope = 0.01);
/// Non-negative smooth head activation: max(0, softplus(x) - ln 2).
/// Zero input maps to exactly zero, positive inputs grow like softplus.
Tensor density_rectifier(const Tensor& x);
/// Elementwise max over same-shaped tensors; ties resolve to the earliest
/// input, and backward routes the adjoint to that winner only.
Tensor maximum_of(const std::vector<Tensor>& xs);

// ---- reductions ------------------------------------------------------------

Tensor sum_all(const Tensor& x);   // rank-0 result
Tensor mean_all(const Tensor& x);  // rank-0 result
/// Scalar view of one element by flat index.
Tensor pick(const Tensor& x, Index flat_index);

// ---- shape plumbing (2-D unless noted) -------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose2d(const Tensor& x);
Tensor slice_rows(const Tensor& x, Index begin, Index end);
Tensor slice_cols(const Tensor& x, Index begin, Index end);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor concat_cols(const std::vector<Tensor>& xs);
/// [N,C] token rows -> [C,h,w] feature map, row-major token order.
Tensor tokens_to_map(const Tensor& tokens, Index h, Index w);

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[m,n] + v[n], broadcast down rows (bias add).
Tensor add_rowvec(const Tensor& x, const Tensor& v);

// ---- normalization ---------------------------------------------------------

/// Softmax along `axis` with max-subtraction; slices sum to 1.
Tensor softmax(const Tensor& x, Index axis);
/// Normalization over the last extent: per-slice zero mean / unit variance,
/// then gamma*xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// ---- spatial ---------------------------------------------------------------

/// Cross-correlation of x[Cin,H,W] with kernel[Cout,Cin,k,k]; square odd
/// kernels only. bias[Cout] may be an undefined Tensor for no bias.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Index stride, Index pad);
/// x[C,H,W] -> [C,fH,fW]; sample centers at (i+0.5)/f - 0.5, edge-clamped.
Tensor bilinear_upsample(const Tensor& x, Index factor);
/// Per-channel correlation of map[C,h,w] with prototype[s,s,C], zero pad
/// (s-1)/2, stride 1, no cross-channel mixing. s must be odd.
Tensor depthwise_correlate(const Tensor& map, const Tensor& prototype);
/// x[g,g,C] -> [s,s,C], adaptive window means (window i spans
/// [floor(i*g/s), ceil((i+1)*g/s))); identity when g == s.
Tensor adaptive_avg_pool_grid(const Tensor& x, Index s);
/// image[3,H,W] -> [N, 3*S*S]: row-major patch order, channel-major
/// flattening within each patch.
Tensor patchify(const Tensor& image, Index S);

}  // namespace mafea::ops
