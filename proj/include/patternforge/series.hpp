#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "patternforge/dates.hpp"
#include "patternforge/matrix.hpp"

namespace pf {

// T x D panel of channels over a strictly increasing trading-day calendar.
// Once constructed there are no missing values.
struct MultivariateSeries {
    std::vector<Date> dates;
    Matrix values; // T x D
    std::vector<std::string> channels;

    std::size_t length() const { return dates.size(); }
    std::size_t dim() const { return values.cols(); }

    std::size_t channel_index(const std::string& name) const;

    // Enforces the container invariants; throws std::invalid_argument.
    void validate() const;
};

// Contiguous slice of a parent series, length x D.
struct Segment {
    std::size_t source_start = 0;
    Matrix values;
    bool normalized = false;

    std::size_t length() const { return values.rows(); }
    std::size_t dim() const { return values.cols(); }
};

Segment cut_segment(const MultivariateSeries& series, std::size_t start, std::size_t length);

struct SmoothingConfig {
    double bandwidth = 0.3; // Gaussian, in units of time steps
};

// Nadaraya-Watson smoothing of every channel independently. Weights beyond
// |t-s| > 6h are dropped; the truncated mass is below 1e-7 of the total.
MultivariateSeries kernel_smooth(const MultivariateSeries& series, const SmoothingConfig& cfg);
std::vector<double> kernel_smooth(const std::vector<double>& xs, double bandwidth);

// Per-column map onto [0,1]. Constant columns map to 0.5 so they stay
// mid-range and contribute no DTW preference in either direction.
Matrix minmax_normalize(const Matrix& m);
Segment minmax_normalize(const Segment& s);

// Piecewise-linear resampling to target_len equally spaced positions over
// [0, rows-1]. Endpoints are preserved exactly. Requires rows >= 2 and
// target_len >= 2.
Matrix resample_linear(const Matrix& m, std::size_t target_len);
Segment resample_linear(const Segment& s, std::size_t target_len);
std::vector<double> resample_linear(const std::vector<double>& xs, std::size_t target_len);

struct RsiResult {
    std::vector<double> values; // same length as input, in [0,100]
    std::size_t warmup;         // entries [0, warmup) are placeholders, not model input
};

// Wilder-smoothed RSI. The first `period` entries are warm-up and must be
// excluded from any model window (ingestion drops those rows).
RsiResult compute_rsi(const std::vector<double>& close, int period);

struct SplitResult {
    MultivariateSeries train;
    MultivariateSeries valid;
    MultivariateSeries test;
};

// Rows are routed by date into three inclusive intervals. Intervals must be
// ordered and non-overlapping; rows outside every interval are dropped.
SplitResult split_by_dates(const MultivariateSeries& series, const std::array<DateRange, 3>& ranges);

} // namespace pf
