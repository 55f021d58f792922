#include "masa/signal.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "masa/conv.hpp"

namespace masa {

void EegTrial::validate() const {
    if (channels < 1) throw IngestionError("trial " + trial_id + ": needs at least one channel");
    if (fs <= 0.0) throw IngestionError("trial " + trial_id + ": non-positive sampling rate");
    if (static_cast<std::int64_t>(data.size()) != static_cast<std::int64_t>(channels) * samples)
        throw IngestionError("trial " + trial_id + ": data size does not match channels*samples");
    if (label_kind == LabelKind::continuous) {
        const double expected = static_cast<double>(samples) / fs * label_rate;
        const auto got = static_cast<double>(cont_label.size());
        if (std::abs(got - std::round(expected)) > 1.0)
            throw IngestionError("trial " + trial_id + ": label series length " +
                                 std::to_string(cont_label.size()) + " inconsistent with " +
                                 std::to_string(expected) + " expected at " +
                                 std::to_string(label_rate) + " Hz");
    }
}

void BandSet::validate() const {
    if (bands.empty()) throw ConfigError("band set must contain at least one band");
    double prev_high = -1.0;
    for (const Band& b : bands) {
        if (b.low_hz >= b.high_hz)
            throw ConfigError("band (" + std::to_string(b.low_hz) + ", " +
                              std::to_string(b.high_hz) + ") is not increasing");
        if (b.low_hz < prev_high)
            throw ConfigError("band (" + std::to_string(b.low_hz) + ", " +
                              std::to_string(b.high_hz) + ") overlaps its predecessor");
        prev_high = b.high_hz;
    }
}

BandSet BandSet::named(const std::string& name) {
    if (name == "mahnob6")
        return BandSet{{{0.3, 5.0}, {5.0, 8.0}, {8.0, 12.0}, {12.0, 18.0}, {18.0, 30.0}, {30.0, 45.0}}};
    if (name == "deap5")
        return BandSet{{{4.0, 8.0}, {8.0, 12.0}, {12.0, 18.0}, {18.0, 30.0}, {30.0, 45.0}}};
    throw ConfigError("unknown band set '" + name + "' (expected mahnob6 or deap5)");
}

std::string BandSet::describe() const {
    std::string out;
    for (const Band& b : bands) {
        if (!out.empty()) out += " ";
        out += "[" + std::to_string(b.low_hz) + "," + std::to_string(b.high_hz) + ")";
    }
    return out;
}

EegTrial average_reference(EegTrial trial) {
    if (trial.channels < 2)
        throw ConfigError("average_reference needs at least 2 channels, got " +
                          std::to_string(trial.channels));
    const double inv = 1.0 / trial.channels;
    for (std::int64_t t = 0; t < trial.samples; ++t) {
        double mean = 0.0;
        for (int c = 0; c < trial.channels; ++c) mean += trial.row(c)[t];
        mean *= inv;
        for (int c = 0; c < trial.channels; ++c) trial.row(c)[t] -= mean;
    }
    return trial;
}

namespace {

int seconds_to_samples(double seconds, double fs, const char* what) {
    const double exact = seconds * fs;
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-6 || rounded < 1.0)
        throw ConfigError(std::string(what) + " of " + std::to_string(seconds) +
                          " s is not a whole number of samples at " + std::to_string(fs) + " Hz");
    return static_cast<int>(rounded);
}

}  // namespace

Segmentation plan_segments(const EegTrial& trial, double window_s, double step_s) {
    Segmentation seg;
    seg.window_samples = seconds_to_samples(window_s, trial.fs, "window");
    seg.step_samples = seconds_to_samples(step_s, trial.fs, "step");
    if (seg.window_samples > trial.samples)
        throw ConfigError("window of " + std::to_string(seg.window_samples) +
                          " samples exceeds trial length " + std::to_string(trial.samples));
    seg.count = static_cast<int>((trial.samples - seg.window_samples) / seg.step_samples) + 1;
    return seg;
}

std::vector<double> extract_segment(const EegTrial& trial, const Segmentation& seg, int index) {
    std::vector<double> out(static_cast<std::size_t>(trial.channels) * seg.window_samples);
    const std::int64_t start = static_cast<std::int64_t>(index) * seg.step_samples;
    for (int c = 0; c < trial.channels; ++c) {
        const double* src = trial.row(c) + start;
        std::copy(src, src + seg.window_samples,
                  out.begin() + static_cast<std::int64_t>(c) * seg.window_samples);
    }
    return out;
}

namespace {

// Power spectrum |X_k|^2 for k = 0..n/2. Radix-2 when possible, direct DFT
// otherwise; window lengths here are tiny (about one second of samples).
void half_spectrum_power(const std::vector<double>& x, std::vector<double>& out) {
    const std::size_t n = x.size();
    const std::size_t nh = n / 2 + 1;
    out.assign(nh, 0.0);
    const bool pow2 = (n & (n - 1)) == 0;
    if (pow2) {
        std::vector<std::complex<double>> a(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = x[i];
        // Iterative Cooley-Tukey, bit-reversal permutation first.
        for (std::size_t i = 1, j = 0; i < n; ++i) {
            std::size_t bit = n >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            if (i < j) std::swap(a[i], a[j]);
        }
        for (std::size_t len = 2; len <= n; len <<= 1) {
            const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
            const std::complex<double> wl(std::cos(ang), std::sin(ang));
            for (std::size_t i = 0; i < n; i += len) {
                std::complex<double> w(1.0);
                for (std::size_t k = 0; k < len / 2; ++k) {
                    const std::complex<double> u = a[i + k];
                    const std::complex<double> v = a[i + k + len / 2] * w;
                    a[i + k] = u + v;
                    a[i + k + len / 2] = u - v;
                    w *= wl;
                }
            }
        }
        for (std::size_t k = 0; k < nh; ++k) out[k] = std::norm(a[k]);
        return;
    }
    for (std::size_t k = 0; k < nh; ++k) {
        double re = 0.0, im = 0.0;
        const double w = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double ph = w * static_cast<double>(i);
            re += x[i] * std::cos(ph);
            im += x[i] * std::sin(ph);
        }
        out[k] = re * re + im * im;
    }
}

}  // namespace

PsdResult welch_psd(const double* seg, int channels, int n, double fs, const WelchConfig& cfg) {
    if (cfg.overlap < 0.0 || cfg.overlap >= 1.0)
        throw ConfigError("welch overlap fraction must lie in [0, 1)");
    const int win = seconds_to_samples(cfg.window_s, fs, "welch window");
    if (win > n)
        throw ConfigError("welch window of " + std::to_string(win) +
                          " samples exceeds sub-segment length " + std::to_string(n));
    int hop = static_cast<int>(std::round(win * (1.0 - cfg.overlap)));
    if (hop < 1) hop = 1;
    const int n_windows = (n - win) / hop + 1;

    // Periodic Hann and its power for density scaling.
    std::vector<double> hann(static_cast<std::size_t>(win));
    double u = 0.0;
    for (int i = 0; i < win; ++i) {
        hann[static_cast<std::size_t>(i)] =
            0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / win));
        u += hann[static_cast<std::size_t>(i)] * hann[static_cast<std::size_t>(i)];
    }
    const double scale = 1.0 / (fs * u * n_windows);

    PsdResult res;
    res.n_freq = win / 2 + 1;
    res.df = fs / win;
    res.psd.assign(static_cast<std::size_t>(channels) * res.n_freq, 0.0);

    std::vector<double> buf(static_cast<std::size_t>(win));
    std::vector<double> power;
    for (int c = 0; c < channels; ++c) {
        double* dst = res.psd.data() + static_cast<std::int64_t>(c) * res.n_freq;
        const double* src = seg + static_cast<std::int64_t>(c) * n;
        for (int wdx = 0; wdx < n_windows; ++wdx) {
            const double* base = src + static_cast<std::int64_t>(wdx) * hop;
            for (int i = 0; i < win; ++i) buf[static_cast<std::size_t>(i)] = base[i] * hann[static_cast<std::size_t>(i)];
            half_spectrum_power(buf, power);
            for (int k = 0; k < res.n_freq; ++k) {
                const bool interior = k != 0 && k != win / 2;
                dst[k] += power[static_cast<std::size_t>(k)] * scale * (interior ? 2.0 : 1.0);
            }
        }
    }
    return res;
}

std::vector<double> rpsd(const PsdResult& psd, int channels, const BandSet& bands) {
    bands.validate();
    const int f = bands.count();
    // Resolve bin membership once: bin k holds frequency k*df.
    std::vector<std::pair<int, int>> bin_range(static_cast<std::size_t>(f));
    for (int b = 0; b < f; ++b) {
        const Band& band = bands.bands[static_cast<std::size_t>(b)];
        int lo = static_cast<int>(std::ceil(band.low_hz / psd.df - 1e-9));
        int hi = static_cast<int>(std::ceil(band.high_hz / psd.df - 1e-9));  // exclusive
        if (lo < 0) lo = 0;
        if (hi > psd.n_freq) hi = psd.n_freq;
        if (hi <= lo)
            throw ConfigError("band [" + std::to_string(band.low_hz) + ", " +
                              std::to_string(band.high_hz) + ") contains no frequency bins at df=" +
                              std::to_string(psd.df));
        bin_range[static_cast<std::size_t>(b)] = {lo, hi};
    }
    std::vector<double> out(static_cast<std::size_t>(channels) * f);
    for (int c = 0; c < channels; ++c) {
        const double* row = psd.psd.data() + static_cast<std::int64_t>(c) * psd.n_freq;
        double total = 0.0;
        for (int b = 0; b < f; ++b) {
            const auto [lo, hi] = bin_range[static_cast<std::size_t>(b)];
            double acc = 0.0;
            for (int k = lo; k < hi; ++k) acc += row[k];
            const double mean = acc / (hi - lo);
            out[static_cast<std::size_t>(c) * f + b] = mean;
            total += mean;
        }
        if (total > 0.0) {
            for (int b = 0; b < f; ++b) out[static_cast<std::size_t>(c) * f + b] /= total;
        } else {
            // Silent channel: no band dominates.
            for (int b = 0; b < f; ++b) out[static_cast<std::size_t>(c) * f + b] = 1.0 / f;
        }
    }
    return out;
}

std::vector<double> build_feature_vector(const std::vector<double>& rpsd_per_channel,
                                         int channels, int bands) {
    if (rpsd_per_channel.size() != static_cast<std::size_t>(channels) * bands)
        throw DimensionError("feature vector: expected " + std::to_string(channels * bands) +
                             " rPSD values, got " + std::to_string(rpsd_per_channel.size()));
    // rpsd() already produces the channel-major layout of the feature vector;
    // this is the documented (channel, band) -> channel*bands + band map.
    return rpsd_per_channel;
}

TrialFeatures extract_features(const EegTrial& trial, const BandSet& bands, double window_s,
                               double step_s, const WelchConfig& welch) {
    trial.validate();
    const Segmentation seg = plan_segments(trial, window_s, step_s);
    TrialFeatures out;
    out.subject_id = trial.subject_id;
    out.trial_id = trial.trial_id;
    out.channels = trial.channels;
    out.bands = bands.count();
    out.n_vectors = seg.count;
    out.label_kind = trial.label_kind;
    out.label_rate = trial.label_rate;
    out.class_label = trial.class_label;
    const int dim = out.channels * out.bands;
    out.features.assign(static_cast<std::size_t>(seg.count) * dim, 0.0);

    // Exceptions may not unwind out of the parallel region; capture the first
    // one and rethrow after the loop.
    std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(static) if (parallel::kernels_enabled() && seg.count > 8)
    for (int i = 0; i < seg.count; ++i) {
        try {
            const std::vector<double> sub = extract_segment(trial, seg, i);
            const PsdResult psd =
                welch_psd(sub.data(), trial.channels, seg.window_samples, trial.fs, welch);
            const std::vector<double> v = build_feature_vector(rpsd(psd, trial.channels, bands),
                                                               trial.channels, bands.count());
            std::copy(v.begin(), v.end(), out.features.begin() + static_cast<std::int64_t>(i) * dim);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    if (trial.label_kind == LabelKind::continuous) {
        // Labels are synchronized index-for-index with the feature series;
        // the excess tail of the label series is trimmed.
        const auto usable = static_cast<std::size_t>(seg.count);
        if (trial.cont_label.size() < usable)
            throw IngestionError("trial " + trial.trial_id + ": label series (" +
                                 std::to_string(trial.cont_label.size()) +
                                 ") shorter than feature series (" + std::to_string(seg.count) + ")");
        out.labels.assign(trial.cont_label.begin(), trial.cont_label.begin() + seg.count);
        // Feature rate must equal the label rate for continuous tasks.
        const double feature_rate = trial.fs / seg.step_samples;
        if (std::abs(feature_rate - trial.label_rate) > 1e-9)
            throw ConfigError("feature rate " + std::to_string(feature_rate) +
                              " Hz does not match label rate " + std::to_string(trial.label_rate) +
                              " Hz; adjust the segmentation step");
    }
    return out;
}

std::vector<SequenceSample> plan_sequences(const TrialFeatures& f, int seq_len, int seq_step) {
    if (seq_len < 1 || seq_step < 1) throw ConfigError("sequence length and step must be positive");
    std::vector<SequenceSample> out;
    if (f.n_vectors < seq_len) return out;
    const int count = (f.n_vectors - seq_len) / seq_step + 1;
    out.reserve(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) out.push_back({j * seq_step, seq_len});
    return out;
}

}  // namespace masa
