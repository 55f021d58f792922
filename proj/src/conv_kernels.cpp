#include "masa/conv.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>

namespace masa {

namespace parallel {
namespace {
std::atomic<bool> g_kernels_enabled{true};
}
bool kernels_enabled() { return g_kernels_enabled.load(std::memory_order_relaxed); }
void set_kernels_enabled(bool on) { g_kernels_enabled.store(on, std::memory_order_relaxed); }
}  // namespace parallel

Shape conv2d_output_shape(const Shape& x, const Shape& k, const Conv2dSpec& spec) {
    if (x.size() != 3)
        throw DimensionError("conv2d input must have 3 axes (in_ch, H, W), got " + shape_str(x));
    if (k.size() != 4)
        throw DimensionError("conv2d kernel must have 4 axes (out_ch, in_ch, kh, kw), got " +
                             shape_str(k));
    const int in_ch = x[0], h = x[1], w = x[2];
    const int kin = k[1], kh = k[2], kw = k[3];
    if (kin != in_ch)
        throw DimensionError("conv2d channel axis mismatch: input has " + std::to_string(in_ch) +
                             " channels, kernel expects " + std::to_string(kin));
    const int span_h = (kh - 1) * spec.dil_h + 1;
    if (h < span_h)
        throw DimensionError("conv2d H axis too short: kernel spans " + std::to_string(span_h) +
                             " rows but input has " + std::to_string(h));
    const int wp = w + spec.left_pad_w;
    const int span_w = (kw - 1) * spec.dil_w + 1;
    if (wp < span_w)
        throw DimensionError("conv2d W axis too short: kernel spans " + std::to_string(span_w) +
                             " columns but padded input has " + std::to_string(wp));
    const int oh = (h - span_h) / spec.stride_h + 1;
    const int ow = (wp - span_w) / spec.stride_w + 1;
    return {k[0], oh, ow};
}

namespace {

struct ConvDims {
    int in_ch, h, w;
    int out_ch, kh, kw;
    int oh, ow;
};

ConvDims dims_of(const Shape& xs, const Shape& ks, const Conv2dSpec& spec) {
    Shape os = conv2d_output_shape(xs, ks, spec);
    return {xs[0], xs[1], xs[2], ks[0], ks[2], ks[3], os[1], os[2]};
}

// Dot product over eight independent accumulator lanes. The summation order
// is fixed by this source, so results are deterministic, and the lanes break
// the dependence chain that otherwise blocks SIMD on strict FP semantics.
inline double dot_lanes(const double* a, const double* b, int n) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int t = 0;
    for (; t + 8 <= n; t += 8)
        for (int l = 0; l < 8; ++l) acc[l] += a[t + l] * b[t + l];
    double tail = 0.0;
    for (; t < n; ++t) tail += a[t] * b[t];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

}  // namespace

void conv2d_forward(const double* x, const Shape& xs,
                    const double* k, const Shape& ks,
                    const Conv2dSpec& spec, double* out) {
    const ConvDims d = dims_of(xs, ks, spec);
    const int pad = spec.left_pad_w;
    const std::int64_t out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
    const std::int64_t in_plane = static_cast<std::int64_t>(d.h) * d.w;
    const std::int64_t work = static_cast<std::int64_t>(d.out_ch) * out_plane * d.in_ch * d.kh * d.kw;
    const bool par = parallel::kernels_enabled() && work > (1 << 16);

    if (spec.stride_w == 1 && spec.dil_h == 1) {
        // Hot path: every convolution in the model (stride 1 and contiguous
        // taps along W). Inner loops run contiguously over the time axis.
        // Output channels are processed in blocks so the input plane streams
        // through cache once per block instead of once per channel; the
        // per-element accumulation order (c, r, s ascending) is unchanged,
        // so results are bitwise identical for any block or thread count.
        constexpr int kBlock = 16;
        const int n_blocks = (d.out_ch + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static) if (par)
        for (int blk = 0; blk < n_blocks; ++blk) {
            const int o0 = blk * kBlock;
            const int o1 = std::min(d.out_ch, o0 + kBlock);
            for (int i = 0; i < d.oh; ++i) {
                for (int o = o0; o < o1; ++o)
                    std::memset(out + static_cast<std::int64_t>(o) * out_plane +
                                    static_cast<std::int64_t>(i) * d.ow,
                                0, sizeof(double) * static_cast<std::size_t>(d.ow));
                for (int c = 0; c < d.in_ch; ++c) {
                    for (int r = 0; r < d.kh; ++r) {
                        const double* xrow = x + c * in_plane +
                                             static_cast<std::int64_t>(i * spec.stride_h + r) * d.w;
                        for (int o = o0; o < o1; ++o) {
                            double* orow = out + static_cast<std::int64_t>(o) * out_plane +
                                           static_cast<std::int64_t>(i) * d.ow;
                            const double* krow =
                                k + ((static_cast<std::int64_t>(o) * d.in_ch + c) * d.kh + r) * d.kw;
                            for (int s = 0; s < d.kw; ++s) {
                                const double kv = krow[s];
                                const int shift = s * spec.dil_w - pad;
                                const int t0 = std::max(0, -shift);
                                const double* xp = xrow + shift;
                                for (int t = t0; t < d.ow; ++t) orow[t] += kv * xp[t];
                            }
                        }
                    }
                }
            }
        }
        return;
    }

    // Generic path (strided/dilated along H or strided along W).
#pragma omp parallel for schedule(static) if (par)
    for (int o = 0; o < d.out_ch; ++o) {
        for (int i = 0; i < d.oh; ++i) {
            for (int t = 0; t < d.ow; ++t) {
                double acc = 0.0;
                for (int c = 0; c < d.in_ch; ++c) {
                    for (int r = 0; r < d.kh; ++r) {
                        const int y = i * spec.stride_h + r * spec.dil_h;
                        for (int s = 0; s < d.kw; ++s) {
                            const int xcol = t * spec.stride_w + s * spec.dil_w - pad;
                            if (xcol < 0) continue;
                            acc += k[((static_cast<std::int64_t>(o) * d.in_ch + c) * d.kh + r) * d.kw + s] *
                                   x[c * in_plane + static_cast<std::int64_t>(y) * d.w + xcol];
                        }
                    }
                }
                out[(static_cast<std::int64_t>(o) * d.oh + i) * d.ow + t] = acc;
            }
        }
    }
}

void conv2d_backward_input(const double* gout,
                           const double* k, const Shape& ks,
                           const Conv2dSpec& spec, const Shape& xs, double* gx) {
    const ConvDims d = dims_of(xs, ks, spec);
    const int pad = spec.left_pad_w;
    const std::int64_t in_plane = static_cast<std::int64_t>(d.h) * d.w;
    const std::int64_t out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
    const std::int64_t work = static_cast<std::int64_t>(d.out_ch) * out_plane * d.in_ch * d.kh * d.kw;
    const bool par = parallel::kernels_enabled() && work > (1 << 16);

    if (spec.stride_w == 1 && spec.dil_h == 1) {
#pragma omp parallel for schedule(static) if (par)
        for (int c = 0; c < d.in_ch; ++c) {
            for (int y = 0; y < d.h; ++y) {
                double* grow = gx + c * in_plane + static_cast<std::int64_t>(y) * d.w;
                for (int r = 0; r < d.kh; ++r) {
                    const int num = y - r;
                    if (num < 0 || num % spec.stride_h != 0) continue;
                    const int i = num / spec.stride_h;
                    if (i >= d.oh) continue;
                    for (int o = 0; o < d.out_ch; ++o) {
                        const double* gorow = gout + (static_cast<std::int64_t>(o) * d.oh + i) * d.ow;
                        const double* krow = k + ((static_cast<std::int64_t>(o) * d.in_ch + c) * d.kh + r) * d.kw;
                        for (int s = 0; s < d.kw; ++s) {
                            const double kv = krow[s];
                            // output col = input col + pad - s*dil_w
                            const int shift = pad - s * spec.dil_w;
                            const int x0 = std::max(0, -shift);
                            const int x1 = std::min(d.w, d.ow - shift);
                            const double* gp = gorow + shift;
                            for (int xc = x0; xc < x1; ++xc) grow[xc] += kv * gp[xc];
                        }
                    }
                }
            }
        }
        return;
    }

#pragma omp parallel for schedule(static) if (par)
    for (int c = 0; c < d.in_ch; ++c) {
        for (int o = 0; o < d.out_ch; ++o) {
            for (int i = 0; i < d.oh; ++i) {
                for (int t = 0; t < d.ow; ++t) {
                    const double g = gout[(static_cast<std::int64_t>(o) * d.oh + i) * d.ow + t];
                    for (int r = 0; r < d.kh; ++r) {
                        const int y = i * spec.stride_h + r * spec.dil_h;
                        for (int s = 0; s < d.kw; ++s) {
                            const int xcol = t * spec.stride_w + s * spec.dil_w - pad;
                            if (xcol < 0) continue;
                            gx[c * in_plane + static_cast<std::int64_t>(y) * d.w + xcol] +=
                                g * k[((static_cast<std::int64_t>(o) * d.in_ch + c) * d.kh + r) * d.kw + s];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_kernel(const double* gout,
                            const double* x, const Shape& xs,
                            const Conv2dSpec& spec, const Shape& ks, double* gk) {
    const ConvDims d = dims_of(xs, ks, spec);
    const int pad = spec.left_pad_w;
    const std::int64_t in_plane = static_cast<std::int64_t>(d.h) * d.w;
    const std::int64_t out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
    const std::int64_t work = static_cast<std::int64_t>(d.out_ch) * out_plane * d.in_ch * d.kh * d.kw;
    const bool par = parallel::kernels_enabled() && work > (1 << 16);

    if (spec.stride_w == 1 && spec.dil_h == 1) {
        // Same blocking rationale as the forward pass: the input plane
        // streams once per output-channel block.
        constexpr int kBlock = 16;
        const int n_blocks = (d.out_ch + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static) if (par)
        for (int blk = 0; blk < n_blocks; ++blk) {
            const int o0 = blk * kBlock;
            const int o1 = std::min(d.out_ch, o0 + kBlock);
            for (int c = 0; c < d.in_ch; ++c) {
                for (int r = 0; r < d.kh; ++r) {
                    for (int o = o0; o < o1; ++o) {
                        double* krow =
                            gk + ((static_cast<std::int64_t>(o) * d.in_ch + c) * d.kh + r) * d.kw;
                        for (int s = 0; s < d.kw; ++s) {
                            const int shift = s * spec.dil_w - pad;
                            const int t0 = std::max(0, -shift);
                            double acc = 0.0;
                            for (int i = 0; i < d.oh; ++i) {
                                const double* gorow =
                                    gout + (static_cast<std::int64_t>(o) * d.oh + i) * d.ow;
                                const double* xrow =
                                    x + c * in_plane +
                                    static_cast<std::int64_t>(i * spec.stride_h + r) * d.w + shift;
                                acc += dot_lanes(gorow + t0, xrow + t0, d.ow - t0);
                            }
                            krow[s] += acc;
                        }
                    }
                }
            }
        }
        return;
    }

#pragma omp parallel for schedule(static) if (par)
    for (int o = 0; o < d.out_ch; ++o) {
        for (int c = 0; c < d.in_ch; ++c) {
            for (int r = 0; r < d.kh; ++r) {
                for (int s = 0; s < d.kw; ++s) {
                    double acc = 0.0;
                    for (int i = 0; i < d.oh; ++i) {
                        const int y = i * spec.stride_h + r * spec.dil_h;
                        for (int t = 0; t < d.ow; ++t) {
                            const int xcol = t * spec.stride_w + s * spec.dil_w - pad;
                            if (xcol < 0) continue;
                            acc += gout[(static_cast<std::int64_t>(o) * d.oh + i) * d.ow + t] *
                                   x[c * in_plane + static_cast<std::int64_t>(y) * d.w + xcol];
                        }
                    }
                    gk[((static_cast<std::int64_t>(o) * d.in_ch + c) * d.kh + r) * d.kw + s] += acc;
                }
            }
        }
    }
}

}  // namespace masa
