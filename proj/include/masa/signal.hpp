#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "masa/errors.hpp"

namespace masa {

enum class LabelKind { continuous, discrete };

// One recording: channels x samples, with either a continuous label series
// at `label_rate` Hz or a single class id.
struct EegTrial {
    std::string subject_id;
    std::string trial_id;
    double fs = 0.0;
    int channels = 0;
    std::int64_t samples = 0;
    std::vector<double> data;  // channels x samples, channel-major rows

    LabelKind label_kind = LabelKind::continuous;
    double label_rate = 0.0;
    std::vector<double> cont_label;
    int class_label = -1;

    double* row(int c) { return data.data() + static_cast<std::int64_t>(c) * samples; }
    const double* row(int c) const { return data.data() + static_cast<std::int64_t>(c) * samples; }
    void validate() const;
};

struct Band {
    double low_hz = 0.0;
    double high_hz = 0.0;
};

// Ordered, non-overlapping, strictly increasing frequency intervals.
struct BandSet {
    std::vector<Band> bands;
    int count() const { return static_cast<int>(bands.size()); }
    void validate() const;
    static BandSet named(const std::string& name);  // "mahnob6" | "deap5"
    std::string describe() const;
};

struct WelchConfig {
    double window_s = 1.0;
    double overlap = 0.5;  // fraction of the internal window
};

// Per-sample channel mean removed. Requires at least two channels.
EegTrial average_reference(EegTrial trial);

// Sliding sub-segments of `window_s` seconds advancing by `step_s`; the
// trailing remainder is dropped. Each sub-segment is channels x win samples.
struct Segmentation {
    int window_samples = 0;
    int step_samples = 0;
    int count = 0;
};
Segmentation plan_segments(const EegTrial& trial, double window_s, double step_s);
std::vector<double> extract_segment(const EegTrial& trial, const Segmentation& seg, int index);

// Welch PSD: mean of Hann-windowed periodograms over overlapping internal
// segments, one-sided density scaled so that the integral over frequency
// recovers signal power.
struct PsdResult {
    int n_freq = 0;   // bins 0..n_fft/2
    double df = 0.0;  // bin spacing in Hz
    std::vector<double> psd;  // channels x n_freq
};
PsdResult welch_psd(const double* seg, int channels, int n, double fs, const WelchConfig& cfg);

// Relative band power: per channel, mean PSD over each band's bins, then
// normalized so the band values of that channel sum to 1. Bin b belongs to a
// band when low <= b*df < high.
std::vector<double> rpsd(const PsdResult& psd, int channels, const BandSet& bands);

// Eq-style channel-major flattening: [ch0 band0..bandF-1, ch1 band0.., ...].
std::vector<double> build_feature_vector(const std::vector<double>& rpsd_per_channel,
                                         int channels, int bands);

// Full per-trial pipeline: segment -> Welch -> rPSD -> flatten, time-major.
struct TrialFeatures {
    std::string subject_id;
    std::string trial_id;
    int channels = 0;
    int bands = 0;
    int n_vectors = 0;
    std::vector<double> features;  // n_vectors x (channels*bands)
    LabelKind label_kind = LabelKind::continuous;
    double label_rate = 0.0;
    std::vector<double> labels;
    int class_label = -1;

    const double* vec(int i) const {
        return features.data() + static_cast<std::int64_t>(i) * channels * bands;
    }
};
TrialFeatures extract_features(const EegTrial& trial, const BandSet& bands, double window_s,
                               double step_s, const WelchConfig& welch);

// One training sample: a seq_len-long run of consecutive feature vectors
// starting at start_index, with the label slice at identical indices
// (continuous task) or the trial label (discrete task).
struct SequenceSample {
    int start_index = 0;
    int seq_len = 0;
};
std::vector<SequenceSample> plan_sequences(const TrialFeatures& f, int seq_len, int seq_step);

}  // namespace masa
