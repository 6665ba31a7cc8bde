#include "patternforge/series.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "patternforge/log.hpp"

namespace pf {

std::size_t MultivariateSeries::channel_index(const std::string& name) const {
    for (std::size_t i = 0; i < channels.size(); ++i)
        if (channels[i] == name) return i;
    throw std::invalid_argument("series has no channel named '" + name + "'");
}

void MultivariateSeries::validate() const {
    if (dates.size() != values.rows())
        throw std::invalid_argument("series: date count does not match row count");
    if (values.rows() > 0 && values.cols() == 0)
        throw std::invalid_argument("series: zero channels");
    if (channels.size() != values.cols())
        throw std::invalid_argument("series: channel names do not match column count");
    for (std::size_t i = 1; i < dates.size(); ++i)
        if (!(dates[i - 1] < dates[i]))
            throw std::invalid_argument("series: dates not strictly increasing at row " +
                                        std::to_string(i));
    for (double v : values.data())
        if (!std::isfinite(v)) throw std::invalid_argument("series: non-finite value");
}

Segment cut_segment(const MultivariateSeries& series, std::size_t start, std::size_t length) {
    if (start + length > series.length())
        throw std::invalid_argument("cut_segment: slice out of range");
    Segment s;
    s.source_start = start;
    s.values = series.values.slice_rows(start, length);
    s.normalized = false;
    return s;
}

std::vector<double> kernel_smooth(const std::vector<double>& xs, double bandwidth) {
    if (xs.empty()) throw std::invalid_argument("kernel_smooth: empty series");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("kernel_smooth: bandwidth must be > 0");

    const std::size_t n = xs.size();
    // Beyond 6 bandwidths the Gaussian weight is < 1e-7 of the peak.
    const std::size_t radius = static_cast<std::size_t>(std::ceil(6.0 * bandwidth));
    std::vector<double> weights(radius + 1);
    for (std::size_t r = 0; r <= radius; ++r) {
        double u = static_cast<double>(r) / bandwidth;
        weights[r] = std::exp(-0.5 * u * u);
    }

    std::vector<double> out(n);
    for (std::size_t t = 0; t < n; ++t) {
        double num = 0.0, den = 0.0;
        std::size_t lo = t > radius ? t - radius : 0;
        std::size_t hi = std::min(n - 1, t + radius);
        for (std::size_t s = lo; s <= hi; ++s) {
            double w = weights[s > t ? s - t : t - s];
            num += w * xs[s];
            den += w;
        }
        out[t] = num / den;
    }
    return out;
}

MultivariateSeries kernel_smooth(const MultivariateSeries& series, const SmoothingConfig& cfg) {
    if (series.length() == 0) throw std::invalid_argument("kernel_smooth: empty series");
    MultivariateSeries out = series;
    for (std::size_t c = 0; c < series.dim(); ++c)
        out.values.set_col(c, kernel_smooth(series.values.col(c), cfg.bandwidth));
    return out;
}

Matrix minmax_normalize(const Matrix& m) {
    if (m.rows() == 0) throw std::invalid_argument("minmax_normalize: empty matrix");
    Matrix out(m.rows(), m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) {
        double lo = m(0, c), hi = m(0, c);
        for (std::size_t r = 1; r < m.rows(); ++r) {
            lo = std::min(lo, m(r, c));
            hi = std::max(hi, m(r, c));
        }
        if (hi > lo) {
            double inv = 1.0 / (hi - lo);
            for (std::size_t r = 0; r < m.rows(); ++r) out(r, c) = (m(r, c) - lo) * inv;
        } else {
            for (std::size_t r = 0; r < m.rows(); ++r) out(r, c) = 0.5;
        }
    }
    return out;
}

Segment minmax_normalize(const Segment& s) {
    Segment out = s;
    out.values = minmax_normalize(s.values);
    out.normalized = true;
    return out;
}

std::vector<double> resample_linear(const std::vector<double>& xs, std::size_t target_len) {
    Matrix m(xs.size(), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) m(i, 0) = xs[i];
    return resample_linear(m, target_len).col(0);
}

Matrix resample_linear(const Matrix& m, std::size_t target_len) {
    if (m.rows() < 2) throw std::invalid_argument("resample_linear: need at least 2 rows");
    if (target_len < 2) throw std::invalid_argument("resample_linear: target_len must be >= 2");
    Matrix out(target_len, m.cols());
    const double scale = static_cast<double>(m.rows() - 1) / static_cast<double>(target_len - 1);
    for (std::size_t i = 0; i < target_len; ++i) {
        double pos = (i + 1 == target_len) ? static_cast<double>(m.rows() - 1)
                                           : static_cast<double>(i) * scale;
        std::size_t lo = static_cast<std::size_t>(pos);
        double frac = pos - static_cast<double>(lo);
        std::size_t hi = std::min(lo + 1, m.rows() - 1);
        for (std::size_t c = 0; c < m.cols(); ++c)
            out(i, c) = m(lo, c) + frac * (m(hi, c) - m(lo, c));
    }
    return out;
}

Segment resample_linear(const Segment& s, std::size_t target_len) {
    Segment out = s;
    out.values = resample_linear(s.values, target_len);
    return out;
}

RsiResult compute_rsi(const std::vector<double>& close, int period) {
    if (period < 1) throw std::invalid_argument("compute_rsi: period must be >= 1");
    if (close.size() <= static_cast<std::size_t>(period))
        throw std::invalid_argument("compute_rsi: need more than `period` prices");

    const std::size_t n = close.size();
    const std::size_t p = static_cast<std::size_t>(period);
    RsiResult out;
    out.warmup = p;
    out.values.assign(n, 50.0); // placeholder for warm-up rows; never used as model input

    double avg_gain = 0.0, avg_loss = 0.0;
    for (std::size_t i = 1; i <= p; ++i) {
        double d = close[i] - close[i - 1];
        avg_gain += std::max(d, 0.0);
        avg_loss += std::max(-d, 0.0);
    }
    avg_gain /= static_cast<double>(period);
    avg_loss /= static_cast<double>(period);

    auto rsi_of = [](double g, double l) {
        if (l == 0.0 && g == 0.0) return 50.0;
        if (l == 0.0) return 100.0;
        return 100.0 - 100.0 / (1.0 + g / l);
    };

    out.values[p] = rsi_of(avg_gain, avg_loss);
    for (std::size_t i = p + 1; i < n; ++i) {
        double d = close[i] - close[i - 1];
        avg_gain = (avg_gain * (period - 1) + std::max(d, 0.0)) / period;
        avg_loss = (avg_loss * (period - 1) + std::max(-d, 0.0)) / period;
        out.values[i] = rsi_of(avg_gain, avg_loss);
    }
    return out;
}

SplitResult split_by_dates(const MultivariateSeries& series, const std::array<DateRange, 3>& ranges) {
    for (std::size_t i = 0; i < 3; ++i)
        if (ranges[i].end < ranges[i].start)
            throw std::invalid_argument("split_by_dates: range " + std::to_string(i) +
                                        " ends before it starts");
    for (std::size_t i = 0; i + 1 < 3; ++i) {
        if (ranges[i].overlaps(ranges[i + 1]) || ranges[i].overlaps(ranges[2]))
            throw std::invalid_argument("split_by_dates: ranges overlap");
        if (!(ranges[i].end < ranges[i + 1].start))
            throw std::invalid_argument("split_by_dates: ranges out of order");
    }

    SplitResult out;
    MultivariateSeries* parts[3] = {&out.train, &out.valid, &out.test};
    std::vector<std::vector<std::size_t>> rows(3);
    for (std::size_t r = 0; r < series.length(); ++r)
        for (std::size_t i = 0; i < 3; ++i)
            if (ranges[i].contains(series.dates[r])) {
                rows[i].push_back(r);
                break;
            }

    static const char* names[3] = {"train", "valid", "test"};
    for (std::size_t i = 0; i < 3; ++i) {
        parts[i]->channels = series.channels;
        parts[i]->values = Matrix(rows[i].size(), series.dim());
        parts[i]->dates.reserve(rows[i].size());
        for (std::size_t k = 0; k < rows[i].size(); ++k) {
            parts[i]->dates.push_back(series.dates[rows[i][k]]);
            for (std::size_t c = 0; c < series.dim(); ++c)
                parts[i]->values(k, c) = series.values(rows[i][k], c);
        }
        if (rows[i].empty())
            log::warn(std::string("split_by_dates: ") + names[i] + " range contains no rows");
    }
    return out;
}

} // namespace pf
