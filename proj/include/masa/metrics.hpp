#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace masa {

// Regression measures use population (1/N) moments throughout.
double rmse(std::span<const double> pred, std::span<const double> label);

// Throws NumericalError when either input has zero variance; callers report
// the value as missing and exclude it from aggregates.
double pcc(std::span<const double> pred, std::span<const double> label);

// 2*cov / (var_pred + var_label + (mean_pred - mean_label)^2). Equal constant
// inputs are perfectly concordant and yield 1.
double ccc(std::span<const double> pred, std::span<const double> label);

double accuracy(std::span<const int> pred, std::span<const int> label);
double f1_binary(std::span<const int> pred, std::span<const int> label, int positive_class);

// One row per evaluation unit (test subject for LOSO, subject/fold pair for
// trial-wise k-fold) plus aggregates recomputed from the rows. A missing
// value (undefined PCC) is stored as NaN and excluded from its aggregate.
struct MetricRow {
    std::string unit;
    std::map<std::string, double> values;
};

struct MetricsReport {
    std::string task;                      // "CER" or "DEC"
    std::vector<std::string> metric_names; // column order
    std::vector<MetricRow> rows;

    std::map<std::string, double> aggregate_mean() const;
    std::map<std::string, double> aggregate_std() const;  // population std over rows
    std::string to_csv() const;
    std::string to_table() const;
};

}  // namespace masa
