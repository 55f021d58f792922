#include "masa/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "masa/errors.hpp"

namespace masa {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* op) {
    if (a != b)
        throw DimensionError(std::string(op) + ": length mismatch " + std::to_string(a) + " vs " +
                             std::to_string(b));
}

struct Moments {
    double mean_x, mean_y, var_x, var_y, cov;
};

Moments moments(std::span<const double> x, std::span<const double> y) {
    const double invn = 1.0 / static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx *= invn;
    my *= invn;
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
    }
    return {mx, my, vx * invn, vy * invn, cov * invn};
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> label) {
    require_same_length(pred.size(), label.size(), "rmse");
    if (pred.empty()) throw DimensionError("rmse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - label[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

double pcc(std::span<const double> pred, std::span<const double> label) {
    require_same_length(pred.size(), label.size(), "pcc");
    if (pred.size() < 2) throw DimensionError("pcc: need at least 2 elements");
    const Moments m = moments(pred, label);
    if (m.var_x == 0.0 || m.var_y == 0.0)
        throw NumericalError("pcc undefined: zero-variance input");
    return m.cov / (std::sqrt(m.var_x) * std::sqrt(m.var_y));
}

double ccc(std::span<const double> pred, std::span<const double> label) {
    require_same_length(pred.size(), label.size(), "ccc");
    if (pred.size() < 2) throw DimensionError("ccc: need at least 2 elements");
    const Moments m = moments(pred, label);
    const double md = m.mean_x - m.mean_y;
    const double denom = m.var_x + m.var_y + md * md;
    if (denom == 0.0) return 1.0;  // identical constants
    return 2.0 * m.cov / denom;
}

double accuracy(std::span<const int> pred, std::span<const int> label) {
    require_same_length(pred.size(), label.size(), "accuracy");
    if (pred.empty()) throw DimensionError("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == label[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double f1_binary(std::span<const int> pred, std::span<const int> label, int positive_class) {
    require_same_length(pred.size(), label.size(), "f1_binary");
    if (pred.empty()) throw DimensionError("f1_binary: empty input");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool pp = pred[i] == positive_class;
        const bool pl = label[i] == positive_class;
        if (pp && pl) ++tp;
        else if (pp && !pl) ++fp;
        else if (!pp && pl) ++fn;
    }
    const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp) + static_cast<double>(fn);
    if (denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(tp) / denom;
}

namespace {

// Stable text form for bitwise-comparable reports.
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::map<std::string, double> MetricsReport::aggregate_mean() const {
    std::map<std::string, double> out;
    for (const std::string& name : metric_names) {
        double acc = 0.0;
        std::size_t n = 0;
        for (const MetricRow& r : rows) {
            auto it = r.values.find(name);
            if (it == r.values.end() || std::isnan(it->second)) continue;
            acc += it->second;
            ++n;
        }
        out[name] = n == 0 ? std::nan("") : acc / static_cast<double>(n);
    }
    return out;
}

std::map<std::string, double> MetricsReport::aggregate_std() const {
    const auto means = aggregate_mean();
    std::map<std::string, double> out;
    for (const std::string& name : metric_names) {
        double acc = 0.0;
        std::size_t n = 0;
        for (const MetricRow& r : rows) {
            auto it = r.values.find(name);
            if (it == r.values.end() || std::isnan(it->second)) continue;
            const double d = it->second - means.at(name);
            acc += d * d;
            ++n;
        }
        out[name] = n == 0 ? std::nan("") : std::sqrt(acc / static_cast<double>(n));
    }
    return out;
}

std::string MetricsReport::to_csv() const {
    std::string out = "unit";
    for (const std::string& name : metric_names) out += "," + name;
    out += "\n";
    for (const MetricRow& r : rows) {
        out += r.unit;
        for (const std::string& name : metric_names) {
            auto it = r.values.find(name);
            out += ",";
            out += it == r.values.end() ? "nan" : fmt(it->second);
        }
        out += "\n";
    }
    const auto means = aggregate_mean();
    const auto stds = aggregate_std();
    out += "mean";
    for (const std::string& name : metric_names) out += "," + fmt(means.at(name));
    out += "\nstd";
    for (const std::string& name : metric_names) out += "," + fmt(stds.at(name));
    out += "\n";
    return out;
}

std::string MetricsReport::to_table() const {
    const auto means = aggregate_mean();
    const auto stds = aggregate_std();
    std::string out = task + " results (" + std::to_string(rows.size()) + " units)\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s", "unit");
    out += buf;
    for (const std::string& name : metric_names) {
        std::snprintf(buf, sizeof(buf), "%12s", name.c_str());
        out += buf;
    }
    out += "\n";
    for (const MetricRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-16s", r.unit.c_str());
        out += buf;
        for (const std::string& name : metric_names) {
            auto it = r.values.find(name);
            std::snprintf(buf, sizeof(buf), "%12.4f", it == r.values.end() ? std::nan("") : it->second);
            out += buf;
        }
        out += "\n";
    }
    std::snprintf(buf, sizeof(buf), "%-16s", "mean +/- std");
    out += buf;
    out += "\n";
    for (const std::string& name : metric_names) {
        std::snprintf(buf, sizeof(buf), "  %s: %.4f +/- %.4f\n", name.c_str(), means.at(name),
                      stds.at(name));
        out += buf;
    }
    return out;
}

}  // namespace masa
