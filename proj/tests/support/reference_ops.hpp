#pragma once

// Independent reference implementations used as test oracles. Everything here
// is deliberately naive and stays off the library's fast paths.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "masa/conv.hpp"
#include "masa/tensor.hpp"

namespace masa::reference {

// Plain six-deep loop with explicit bounds checks; no fast paths, no OpenMP.
inline Tensor conv2d_naive(const Tensor& x, const Tensor& k, const Conv2dSpec& spec) {
    const int in_ch = x.shape[0], h = x.shape[1], w = x.shape[2];
    const int out_ch = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    const int oh = (h - ((kh - 1) * spec.dil_h + 1)) / spec.stride_h + 1;
    const int ow = (w + spec.left_pad_w - ((kw - 1) * spec.dil_w + 1)) / spec.stride_w + 1;
    Tensor out = Tensor::zeros({out_ch, oh, ow});
    for (int o = 0; o < out_ch; ++o)
        for (int i = 0; i < oh; ++i)
            for (int t = 0; t < ow; ++t) {
                double acc = 0.0;
                for (int c = 0; c < in_ch; ++c)
                    for (int r = 0; r < kh; ++r)
                        for (int s = 0; s < kw; ++s) {
                            const int y = i * spec.stride_h + r * spec.dil_h;
                            const int xc = t * spec.stride_w + s * spec.dil_w - spec.left_pad_w;
                            if (xc < 0 || xc >= w) continue;
                            acc += x.values[(static_cast<std::size_t>(c) * h + y) * w + xc] *
                                   k.values[((static_cast<std::size_t>(o) * in_ch + c) * kh + r) * kw + s];
                        }
                out.values[(static_cast<std::size_t>(o) * oh + i) * ow + t] = acc;
            }
    return out;
}

// Direct O(n^2) DFT power spectrum, the oracle for the library FFT.
inline std::vector<double> dft_power(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> out(n / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ph = -2.0 * std::numbers::pi * static_cast<double>(k) *
                              static_cast<double>(i) / static_cast<double>(n);
            acc += x[i] * std::complex<double>(std::cos(ph), std::sin(ph));
        }
        out[k] = std::norm(acc);
    }
    return out;
}

// Two-pass textbook metric implementations.
inline double rmse_naive(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc / static_cast<double>(a.size()));
}

inline double mean_naive(std::span<const double> a) {
    double acc = 0.0;
    for (double v : a) acc += v;
    return acc / static_cast<double>(a.size());
}

inline double pcc_naive(std::span<const double> a, std::span<const double> b) {
    const double ma = mean_naive(a), mb = mean_naive(b);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / (std::sqrt(da) * std::sqrt(db));
}

inline double ccc_naive(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    const double ma = mean_naive(a), mb = mean_naive(b);
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        cov += (a[i] - ma) * (b[i] - mb);
    }
    va /= n;
    vb /= n;
    cov /= n;
    const double d = ma - mb;
    const double denom = va + vb + d * d;
    return denom == 0.0 ? 1.0 : 2.0 * cov / denom;
}

inline double accuracy_naive(std::span<const int> p, std::span<const int> l) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < p.size(); ++i) ok += p[i] == l[i] ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(p.size());
}

inline double f1_naive(std::span<const int> p, std::span<const int> l, int pos) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == pos && l[i] == pos) tp += 1;
        if (p[i] == pos && l[i] != pos) fp += 1;
        if (p[i] != pos && l[i] == pos) fn += 1;
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    return prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
}

// Central finite-difference gradient check. `eval` must be a pure function of
// the parameter vector; `analytic` is the gradient under test. Returns the
// max relative error over the probed indices, where the relative error is
// |ad - fd| / max(|ad|, |fd|, 1e-6).
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

inline GradCheckResult finite_difference_check(
    std::vector<double>& theta, const std::function<double()>& eval,
    std::span<const double> analytic, std::span<const std::size_t> probe_indices,
    double epsilon = 1e-5) {
    GradCheckResult res;
    for (std::size_t idx : probe_indices) {
        const double saved = theta[idx];
        theta[idx] = saved + epsilon;
        const double up = eval();
        theta[idx] = saved - epsilon;
        const double dn = eval();
        theta[idx] = saved;
        const double fd = (up - dn) / (2.0 * epsilon);
        const double ad = analytic[idx];
        const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-6});
        res.max_rel_err = std::max(res.max_rel_err, rel);
        ++res.checked;
    }
    return res;
}

}  // namespace masa::reference
