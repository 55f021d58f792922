#include "masa/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace masa {

int Tape::push(Tensor t) {
    vals_.push_back(std::move(t));
    grads_.emplace_back();
    nodes_.push_back(Node{nullptr});
    return static_cast<int>(vals_.size()) - 1;
}

int Tape::push_param(const Tensor& t) {
    Tensor copy = t;
    copy.requires_grad = true;
    return push(std::move(copy));
}

void Tape::reset() {
    vals_.clear();
    grads_.clear();
    nodes_.clear();
}

void Tape::backward(int loss) {
    if (numel(val(loss).shape) != 1)
        throw NumericalError("backward requires a scalar loss, got shape " +
                             shape_str(val(loss).shape));
    for (std::size_t i = 0; i < vals_.size(); ++i)
        grads_[i].assign(vals_[i].values.size(), 0.0);
    grads_[static_cast<std::size_t>(loss)][0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back(*this);
    }
}

int Tape::conv2d(int x, int kernels, const Conv2dSpec& spec) {
    const Tensor& xt = val(x);
    const Tensor& kt = val(kernels);
    const Shape xs = xt.shape, ks = kt.shape;
    Tensor out = Tensor::zeros(conv2d_output_shape(xs, ks, spec));
    conv2d_forward(xt.values.data(), xs, kt.values.data(), ks, spec, out.values.data());
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [x, kernels, id, spec, xs, ks](Tape& tp) {
        const double* g = tp.grad(id).data();
        conv2d_backward_input(g, tp.val(kernels).values.data(), ks, spec, xs,
                              tp.gbuf(x).data());
        conv2d_backward_kernel(g, tp.val(x).values.data(), xs, spec, ks,
                               tp.gbuf(kernels).data());
    };
    return id;
}

int Tape::prelu(int x, int alpha) {
    const Tensor& xt = val(x);
    const Tensor& at = val(alpha);
    const std::int64_t n = xt.size();
    const std::int64_t na = at.size();
    if (na != 1 && (xt.shape.empty() || na != xt.shape[0]))
        throw DimensionError("prelu alpha axis: expected 1 or " +
                             std::to_string(xt.shape.empty() ? 1 : xt.shape[0]) + " slopes, got " +
                             std::to_string(na));
    const std::int64_t per = na == 1 ? n : n / na;
    Tensor out = Tensor::zeros(xt.shape);
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = xt.values[static_cast<std::size_t>(i)];
        const double a = at.values[static_cast<std::size_t>(na == 1 ? 0 : i / per)];
        out.values[static_cast<std::size_t>(i)] = v >= 0.0 ? v : a * v;
    }
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [x, alpha, id, n, na, per](Tape& tp) {
        const auto& g = tp.grad(id);
        const auto& xv = tp.val(x).values;
        const auto& av = tp.val(alpha).values;
        auto& gx = tp.gbuf(x);
        auto& ga = tp.gbuf(alpha);
        for (std::int64_t i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const std::size_t ci = static_cast<std::size_t>(na == 1 ? 0 : i / per);
            if (xv[ui] >= 0.0) {
                gx[ui] += g[ui];
            } else {
                gx[ui] += g[ui] * av[ci];
                ga[ci] += g[ui] * xv[ui];
            }
        }
    };
    return id;
}

int Tape::weight_norm(int direction, int gain) {
    const Tensor& vt = val(direction);
    const Tensor& gt = val(gain);
    if (vt.shape.empty() || gt.size() != vt.shape[0])
        throw DimensionError("weight_norm gain axis: expected " +
                             std::to_string(vt.shape.empty() ? 0 : vt.shape[0]) +
                             " gains, got " + std::to_string(gt.size()));
    const int oc = vt.shape[0];
    const std::int64_t per = vt.size() / oc;
    std::vector<double> norms(static_cast<std::size_t>(oc));
    Tensor out = Tensor::zeros(vt.shape);
    for (int o = 0; o < oc; ++o) {
        const double* vs = vt.values.data() + o * per;
        double nn = 0.0;
        for (std::int64_t i = 0; i < per; ++i) nn += vs[i] * vs[i];
        const double norm = std::sqrt(nn);
        if (norm == 0.0)
            throw NumericalError("weight_norm: zero-norm direction for output channel " +
                                 std::to_string(o));
        norms[static_cast<std::size_t>(o)] = norm;
        const double s = gt.values[static_cast<std::size_t>(o)] / norm;
        double* os = out.values.data() + o * per;
        for (std::int64_t i = 0; i < per; ++i) os[i] = s * vs[i];
    }
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [direction, gain, id, oc, per, norms](Tape& tp) {
        const auto& g = tp.grad(id);
        const auto& vv = tp.val(direction).values;
        const auto& gv = tp.val(gain).values;
        auto& gd = tp.gbuf(direction);
        auto& gg = tp.gbuf(gain);
        for (int o = 0; o < oc; ++o) {
            const double* vs = vv.data() + o * per;
            const double* gs = g.data() + o * per;
            const double norm = norms[static_cast<std::size_t>(o)];
            double dot = 0.0;
            for (std::int64_t i = 0; i < per; ++i) dot += gs[i] * vs[i];
            gg[static_cast<std::size_t>(o)] += dot / norm;
            const double a = gv[static_cast<std::size_t>(o)] / norm;
            const double b = a * dot / (norm * norm);
            double* gdp = gd.data() + o * per;
            for (std::int64_t i = 0; i < per; ++i) gdp[i] += a * gs[i] - b * vs[i];
        }
    };
    return id;
}

int Tape::dropout(int x, double rate, bool training, Pcg32 rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const Tensor& xt = val(x);
    const std::int64_t n = xt.size();
    auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor out = Tensor::zeros(xt.shape);
    for (std::int64_t i = 0; i < n; ++i) {
        const double m = rng.next_double() < rate ? 0.0 : keep_scale;
        (*mask)[static_cast<std::size_t>(i)] = m;
        out.values[static_cast<std::size_t>(i)] = m * xt.values[static_cast<std::size_t>(i)];
    }
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [x, id, mask, n](Tape& tp) {
        const auto& g = tp.grad(id);
        auto& gx = tp.gbuf(x);
        for (std::int64_t i = 0; i < n; ++i)
            gx[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)] * (*mask)[static_cast<std::size_t>(i)];
    };
    return id;
}

int Tape::linear(int x, int w, int b) {
    const Tensor& xt = val(x);
    const Tensor& wt = val(w);
    const Tensor& bt = val(b);
    if (wt.shape.size() != 2)
        throw DimensionError("linear weight must be 2-d (d_out, d_in), got " + shape_str(wt.shape));
    const int dout = wt.shape[0], din = wt.shape[1];
    if (xt.shape.empty() || xt.shape.back() != din)
        throw DimensionError("linear inner axis mismatch: input last axis " +
                             std::to_string(xt.shape.empty() ? 0 : xt.shape.back()) +
                             " vs weight d_in " + std::to_string(din));
    if (bt.size() != dout)
        throw DimensionError("linear bias length " + std::to_string(bt.size()) +
                             " vs d_out " + std::to_string(dout));
    const std::int64_t rows = xt.size() / din;
    Shape os = xt.shape;
    os.back() = dout;
    Tensor out = Tensor::zeros(os);
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = xt.values.data() + r * din;
        double* orow = out.values.data() + r * dout;
        for (int j = 0; j < dout; ++j) {
            const double* wr = wt.values.data() + static_cast<std::int64_t>(j) * din;
            double acc = bt.values[static_cast<std::size_t>(j)];
            for (int i = 0; i < din; ++i) acc += xr[i] * wr[i];
            orow[j] = acc;
        }
    }
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [x, w, b, id, rows, din, dout](Tape& tp) {
        const auto& g = tp.grad(id);
        const auto& xv = tp.val(x).values;
        const auto& wv = tp.val(w).values;
        auto& gx = tp.gbuf(x);
        auto& gw = tp.gbuf(w);
        auto& gb = tp.gbuf(b);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * dout;
            const double* xr = xv.data() + r * din;
            double* gxr = gx.data() + r * din;
            for (int j = 0; j < dout; ++j) {
                const double gj = gr[j];
                const double* wr = wv.data() + static_cast<std::int64_t>(j) * din;
                double* gwr = gw.data() + static_cast<std::int64_t>(j) * din;
                for (int i = 0; i < din; ++i) {
                    gxr[i] += gj * wr[i];
                    gwr[i] += gj * xr[i];
                }
                gb[static_cast<std::size_t>(j)] += gj;
            }
        }
    };
    return id;
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
}
}  // namespace

int Tape::add(int a, int b) {
    const Tensor& at = val(a);
    const Tensor& bt = val(b);
    require_same_shape(at, bt, "add");
    Tensor out = Tensor::zeros(at.shape);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = at.values[i] + bt.values[i];
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [a, b, id](Tape& tp) {
        const auto& g = tp.grad(id);
        auto& ga = tp.gbuf(a);
        auto& gb = tp.gbuf(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    };
    return id;
}

int Tape::mul(int a, int b) {
    const Tensor& at = val(a);
    const Tensor& bt = val(b);
    require_same_shape(at, bt, "mul");
    Tensor out = Tensor::zeros(at.shape);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = at.values[i] * bt.values[i];
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [a, b, id](Tape& tp) {
        const auto& g = tp.grad(id);
        const auto& av = tp.val(a).values;
        const auto& bv = tp.val(b).values;
        auto& ga = tp.gbuf(a);
        auto& gb = tp.gbuf(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bv[i];
            gb[i] += g[i] * av[i];
        }
    };
    return id;
}

int Tape::scale(int a, double c) {
    const Tensor& at = val(a);
    Tensor out = Tensor::zeros(at.shape);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = c * at.values[i];
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [a, id, c](Tape& tp) {
        const auto& g = tp.grad(id);
        auto& ga = tp.gbuf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    };
    return id;
}

int Tape::sum(int a) {
    const Tensor& at = val(a);
    double acc = 0.0;
    for (double v : at.values) acc += v;
    int id = push(Tensor::from({1}, {acc}));
    nodes_[static_cast<std::size_t>(id)].back = [a, id](Tape& tp) {
        const double g = tp.grad(id)[0];
        auto& ga = tp.gbuf(a);
        for (double& v : ga) v += g;
    };
    return id;
}

int Tape::mean(int a) {
    const std::int64_t n = val(a).size();
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

int Tape::concat_axis0(const std::vector<int>& parts) {
    if (parts.empty()) throw DimensionError("concat_axis0: no inputs");
    Shape tail = val(parts[0]).shape;
    std::int64_t total0 = 0;
    for (int p : parts) {
        const Shape& s = val(p).shape;
        if (s.size() != tail.size() ||
            !std::equal(s.begin() + 1, s.end(), tail.begin() + 1))
            throw DimensionError("concat_axis0: trailing axes mismatch " + shape_str(s) + " vs " +
                                 shape_str(tail));
        total0 += s[0];
    }
    Shape os = tail;
    os[0] = static_cast<int>(total0);
    Tensor out = Tensor::zeros(os);
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (int p : parts) {
        offsets.push_back(off);
        const auto& v = val(p).values;
        std::copy(v.begin(), v.end(), out.values.begin() + off);
        off += static_cast<std::int64_t>(v.size());
    }
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [parts, offsets, id](Tape& tp) {
        const auto& g = tp.grad(id);
        for (std::size_t k = 0; k < parts.size(); ++k) {
            auto& gp = tp.gbuf(parts[k]);
            const std::int64_t o = offsets[k];
            for (std::size_t i = 0; i < gp.size(); ++i)
                gp[i] += g[static_cast<std::size_t>(o) + i];
        }
    };
    return id;
}

int Tape::mean_of(const std::vector<int>& parts) {
    if (parts.empty()) throw DimensionError("mean_of: no inputs");
    const Tensor& first = val(parts[0]);
    for (int p : parts) require_same_shape(val(p), first, "mean_of");
    const double inv = 1.0 / static_cast<double>(parts.size());
    Tensor out = Tensor::zeros(first.shape);
    for (int p : parts) {
        const auto& v = val(p).values;
        for (std::size_t i = 0; i < v.size(); ++i) out.values[i] += v[i];
    }
    for (double& v : out.values) v *= inv;
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [parts, inv, id](Tape& tp) {
        const auto& g = tp.grad(id);
        for (int p : parts) {
            auto& gp = tp.gbuf(p);
            for (std::size_t i = 0; i < g.size(); ++i) gp[i] += inv * g[i];
        }
    };
    return id;
}

int Tape::reshape(int a, Shape s) {
    const Tensor& at = val(a);
    if (numel(s) != at.size())
        throw DimensionError("reshape: " + shape_str(at.shape) + " has " +
                             std::to_string(at.size()) + " elements, target " + shape_str(s));
    Tensor out;
    out.shape = std::move(s);
    out.values = at.values;
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [a, id](Tape& tp) {
        const auto& g = tp.grad(id);
        auto& ga = tp.gbuf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return id;
}

int Tape::rows_from_channels(int a) {
    const Tensor& at = val(a);
    if (at.shape.size() != 3 || at.shape[1] != 1)
        throw DimensionError("rows_from_channels expects (ch, 1, t), got " + shape_str(at.shape));
    const int ch = at.shape[0], t = at.shape[2];
    Tensor out = Tensor::zeros({t, ch});
    for (int c = 0; c < ch; ++c)
        for (int i = 0; i < t; ++i)
            out.values[static_cast<std::size_t>(i) * ch + c] =
                at.values[static_cast<std::size_t>(c) * t + i];
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [a, id, ch, t](Tape& tp) {
        const auto& g = tp.grad(id);
        auto& ga = tp.gbuf(a);
        for (int c = 0; c < ch; ++c)
            for (int i = 0; i < t; ++i)
                ga[static_cast<std::size_t>(c) * t + i] += g[static_cast<std::size_t>(i) * ch + c];
    };
    return id;
}

int Tape::mean_rows(int a) {
    const Tensor& at = val(a);
    if (at.shape.size() != 2)
        throw DimensionError("mean_rows expects (n, d), got " + shape_str(at.shape));
    const int n = at.shape[0], d = at.shape[1];
    const double inv = 1.0 / static_cast<double>(n);
    Tensor out = Tensor::zeros({d});
    for (int r = 0; r < n; ++r)
        for (int j = 0; j < d; ++j)
            out.values[static_cast<std::size_t>(j)] += at.values[static_cast<std::size_t>(r) * d + j];
    for (double& v : out.values) v *= inv;
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [a, id, n, d, inv](Tape& tp) {
        const auto& g = tp.grad(id);
        auto& ga = tp.gbuf(a);
        for (int r = 0; r < n; ++r)
            for (int j = 0; j < d; ++j)
                ga[static_cast<std::size_t>(r) * d + j] += inv * g[static_cast<std::size_t>(j)];
    };
    return id;
}

int Tape::last_row(int a) {
    const Tensor& at = val(a);
    if (at.shape.size() != 2)
        throw DimensionError("last_row expects (n, d), got " + shape_str(at.shape));
    const int n = at.shape[0], d = at.shape[1];
    Tensor out = Tensor::zeros({d});
    for (int j = 0; j < d; ++j)
        out.values[static_cast<std::size_t>(j)] =
            at.values[static_cast<std::size_t>(n - 1) * d + j];
    int id = push(std::move(out));
    nodes_[static_cast<std::size_t>(id)].back = [a, id, n, d](Tape& tp) {
        const auto& g = tp.grad(id);
        auto& ga = tp.gbuf(a);
        for (int j = 0; j < d; ++j)
            ga[static_cast<std::size_t>(n - 1) * d + j] += g[static_cast<std::size_t>(j)];
    };
    return id;
}

int Tape::flatten(int a) {
    return reshape(a, {static_cast<int>(val(a).size())});
}

int Tape::ccc_loss_vs(int pred, const std::vector<double>& target) {
    const Tensor& pt = val(pred);
    const std::int64_t n = pt.size();
    if (n != static_cast<std::int64_t>(target.size()))
        throw DimensionError("ccc_loss: prediction has " + std::to_string(n) +
                             " elements, target " + std::to_string(target.size()));
    if (n < 2) throw DimensionError("ccc_loss needs at least 2 elements");
    const double invn = 1.0 / static_cast<double>(n);
    double mx = 0.0, my = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        mx += pt.values[static_cast<std::size_t>(i)];
        my += target[static_cast<std::size_t>(i)];
    }
    mx *= invn;
    my *= invn;
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double dx = pt.values[static_cast<std::size_t>(i)] - mx;
        const double dy = target[static_cast<std::size_t>(i)] - my;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
    }
    vx *= invn;
    vy *= invn;
    cov *= invn;
    const double md = mx - my;
    const double denom = vx + vy + md * md;
    const double loss = denom == 0.0 ? 0.0 : 1.0 - 2.0 * cov / denom;
    int id = push(Tensor::from({1}, {loss}));
    auto tgt = std::make_shared<std::vector<double>>(target);
    nodes_[static_cast<std::size_t>(id)].back = [pred, id, tgt, n, invn, mx, my, cov, denom](Tape& tp) {
        if (denom == 0.0) return;
        const double g = tp.grad(id)[0];
        const auto& pv = tp.val(pred).values;
        auto& gp = tp.gbuf(pred);
        const double md = mx - my;
        const double c = 2.0 * invn / (denom * denom);
        for (std::int64_t i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const double dy = (*tgt)[ui] - my;
            const double dx = pv[ui] - mx;
            // d(1-CCC)/dx_i, population moments throughout
            gp[ui] += g * (-c) * (dy * denom - 2.0 * cov * (dx + md));
        }
    };
    return id;
}

int Tape::cross_entropy_smoothed(int logits, int label, double eps) {
    const Tensor& lt = val(logits);
    const int k = static_cast<int>(lt.size());
    if (k < 2) throw ConfigError("cross_entropy_smoothed needs at least 2 classes");
    if (label < 0 || label >= k)
        throw ConfigError("class label " + std::to_string(label) + " outside [0, " +
                          std::to_string(k) + ")");
    if (eps < 0.0 || eps >= 1.0)
        throw ConfigError("label smoothing factor must lie in [0, 1), got " + std::to_string(eps));
    double maxv = lt.values[0];
    for (double v : lt.values) maxv = std::max(maxv, v);
    double lse = 0.0;
    for (double v : lt.values) lse += std::exp(v - maxv);
    lse = maxv + std::log(lse);
    double loss = lse;
    for (int j = 0; j < k; ++j) {
        const double tj = eps / k + (j == label ? 1.0 - eps : 0.0);
        loss -= tj * lt.values[static_cast<std::size_t>(j)];
    }
    int id = push(Tensor::from({1}, {loss}));
    nodes_[static_cast<std::size_t>(id)].back = [logits, id, label, eps, k, lse](Tape& tp) {
        const double g = tp.grad(id)[0];
        const auto& lv = tp.val(logits).values;
        auto& gl = tp.gbuf(logits);
        for (int j = 0; j < k; ++j) {
            const double p = std::exp(lv[static_cast<std::size_t>(j)] - lse);
            const double tj = eps / k + (j == label ? 1.0 - eps : 0.0);
            gl[static_cast<std::size_t>(j)] += g * (p - tj);
        }
    };
    return id;
}

int Tape::mean_scalars(const std::vector<int>& ids) {
    if (ids.empty()) throw DimensionError("mean_scalars: no inputs");
    const double inv = 1.0 / static_cast<double>(ids.size());
    double acc = 0.0;
    for (int i : ids) acc += val(i).values[0];
    int id = push(Tensor::from({1}, {acc * inv}));
    nodes_[static_cast<std::size_t>(id)].back = [ids, inv, id](Tape& tp) {
        const double g = tp.grad(id)[0] * inv;
        for (int i : ids) tp.gbuf(i)[0] += g;
    };
    return id;
}

}  // namespace masa
