#pragma once

#include "masa/tensor.hpp"

namespace masa {

// 2-d convolution over inputs laid out (in_ch, H, W) with kernels
// (out_ch, in_ch, kh, kw). Dilation value 1 means contiguous taps. Zero
// padding of width `left_pad_w` is prepended on the W (temporal) axis only,
// so with left_pad_w = (kw-1)*dil_w and stride_w = 1 the temporal length is
// preserved and output column t depends only on input columns <= t.
struct Conv2dSpec {
    int stride_h = 1;
    int stride_w = 1;
    int dil_h = 1;
    int dil_w = 1;
    int left_pad_w = 0;
};

// Validates shapes and returns (out_ch, H', W'). Throws DimensionError
// naming the offending axis.
Shape conv2d_output_shape(const Shape& x, const Shape& k, const Conv2dSpec& spec);

void conv2d_forward(const double* x, const Shape& xs,
                    const double* k, const Shape& ks,
                    const Conv2dSpec& spec, double* out);

// Both backward kernels accumulate (+=) into their destination.
void conv2d_backward_input(const double* gout,
                           const double* k, const Shape& ks,
                           const Conv2dSpec& spec, const Shape& xs, double* gx);

void conv2d_backward_kernel(const double* gout,
                            const double* x, const Shape& xs,
                            const Conv2dSpec& spec, const Shape& ks, double* gk);

namespace parallel {
// Kernel-level OpenMP switch. The experiment harness turns it off when folds
// run as parallel workers so the machine is not oversubscribed. Results are
// bitwise identical either way: every output element is owned by exactly one
// thread and its accumulation order is fixed.
bool kernels_enabled();
void set_kernels_enabled(bool on);
}  // namespace parallel

}  // namespace masa
