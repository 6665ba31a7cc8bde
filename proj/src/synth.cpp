#include "patternforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "patternforge/rng.hpp"

namespace pf {

namespace {

// Family shapes are chosen with different extremum counts so time warping
// cannot fold one into another: a single hump, a double hump, and a
// monotone slide with a terminal kick.
double family_shape(int family, double u) {
    switch (family % 3) {
        case 0: return std::sin(std::numbers::pi * u);
        case 1: return std::abs(std::sin(2.0 * std::numbers::pi * u));
        default: return 1.0 - u + 0.25 * std::sin(std::numbers::pi * u * u);
    }
}

std::vector<double> instance_curve(int family, std::size_t len, std::size_t channel) {
    std::vector<double> out(len);
    double amp_factor = 1.0 - 0.1 * static_cast<double>(channel % 3);
    for (std::size_t i = 0; i < len; ++i) {
        double u = static_cast<double>(i) / static_cast<double>(len - 1);
        out[i] = amp_factor * family_shape(family, u);
    }
    return out;
}

} // namespace

MotifSeries synth_motif_series(const MotifSynthConfig& cfg, std::uint64_t seed) {
    if (cfg.T < cfg.motif_len + cfg.gap_max)
        throw std::invalid_argument("synth_motif_series: T too small");
    if (cfg.families < 1) throw std::invalid_argument("synth_motif_series: need >= 1 family");

    Rng rng(seed);
    MotifSeries out;
    out.series.values = Matrix(cfg.T, cfg.D);
    out.series.channels.reserve(cfg.D);
    for (std::size_t d = 0; d < cfg.D; ++d)
        out.series.channels.push_back("ch" + std::to_string(d));
    Date date{2000, 1, 1};
    out.series.dates.reserve(cfg.T);
    for (std::size_t t = 0; t < cfg.T; ++t) {
        out.series.dates.push_back(date);
        date = date.next_day();
    }

    std::vector<double> level(cfg.D, 0.0);
    std::size_t t = 0;
    int next_family = 0;
    while (t < cfg.T) {
        std::size_t gap = cfg.gap_min + rng.index(cfg.gap_max - cfg.gap_min + 1);
        std::size_t walk_end = std::min(cfg.T, t + gap);
        for (; t < walk_end; ++t)
            for (std::size_t d = 0; d < cfg.D; ++d) {
                level[d] += cfg.walk_sigma * rng.normal();
                out.series.values(t, d) = level[d];
            }
        if (t + cfg.motif_len + 2 >= cfg.T) {
            for (; t < cfg.T; ++t)
                for (std::size_t d = 0; d < cfg.D; ++d) {
                    level[d] += cfg.walk_sigma * rng.normal();
                    out.series.values(t, d) = level[d];
                }
            break;
        }

        int family = next_family;
        next_family = (next_family + 1) % cfg.families;
        double amp = 1.0 + cfg.amp_jitter * rng.uniform(-1.0, 1.0);
        double stretch = 1.0 + cfg.warp_jitter * rng.uniform(-1.0, 1.0);
        auto len = static_cast<std::size_t>(
            std::lround(static_cast<double>(cfg.motif_len) * stretch));
        len = std::clamp(len, cfg.motif_len - 2, cfg.motif_len + 2);

        // Shapes span ~2 units so the fixed-sigma noise stays small relative
        // to the window range after per-channel min-max scaling.
        for (std::size_t d = 0; d < cfg.D; ++d) {
            auto curve = instance_curve(family, len, d);
            for (std::size_t i = 0; i < len; ++i)
                out.series.values(t + i, d) =
                    level[d] + 2.0 * amp * curve[i] + cfg.noise_sigma * rng.normal();
        }
        out.planted.push_back({t, len, family});
        t += len;
    }
    return out;
}

double planted_purity(const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& clusters,
                      const std::vector<PlantedInterval>& planted) {
    auto label_of = [&](std::size_t start, std::size_t length) -> int {
        std::size_t best_overlap = 0;
        int best_family = -1;
        for (const auto& p : planted) {
            std::size_t lo = std::max(start, p.start);
            std::size_t hi = std::min(start + length, p.start + p.length);
            std::size_t overlap = hi > lo ? hi - lo : 0;
            if (overlap > best_overlap) {
                best_overlap = overlap;
                best_family = p.family;
            }
        }
        if (best_overlap * 2 < length) return -1;
        return best_family;
    };

    std::size_t total = 0, agree = 0;
    for (const auto& cluster : clusters) {
        if (cluster.empty()) continue;
        std::vector<int> labels;
        labels.reserve(cluster.size());
        for (auto [s, l] : cluster) labels.push_back(label_of(s, l));
        std::vector<int> uniq(labels);
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        std::size_t best = 0;
        for (int f : uniq) {
            auto n = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), f));
            best = std::max(best, n);
        }
        total += cluster.size();
        agree += best;
    }
    return total == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(total);
}

MultivariateSeries synth_ohlcv_series(const OhlcvSynthConfig& cfg, std::uint64_t seed) {
    if (cfg.days < cfg.motif_len * 3)
        throw std::invalid_argument("synth_ohlcv_series: too few days");

    Rng rng(seed);
    std::vector<double> close(cfg.days);
    double log_price = std::log(cfg.start_price);
    std::size_t t = 0;
    int next_family = 0;
    while (t < cfg.days) {
        std::size_t gap = cfg.gap_min + rng.index(cfg.gap_max - cfg.gap_min + 1);
        std::size_t walk_end = std::min(cfg.days, t + gap);
        for (; t < walk_end; ++t) {
            log_price += cfg.daily_sigma * rng.normal();
            close[t] = std::exp(log_price);
        }
        if (t + cfg.motif_len + 2 >= cfg.days) {
            for (; t < cfg.days; ++t) {
                log_price += cfg.daily_sigma * rng.normal();
                close[t] = std::exp(log_price);
            }
            break;
        }
        int family = next_family;
        next_family = (next_family + 1) % cfg.families;
        double amp = cfg.motif_amp * (1.0 + 0.2 * rng.uniform(-1.0, 1.0));
        auto stretch = 1.0 + 0.1 * rng.uniform(-1.0, 1.0);
        auto len = static_cast<std::size_t>(
            std::lround(static_cast<double>(cfg.motif_len) * stretch));
        len = std::clamp(len, cfg.motif_len - 2, cfg.motif_len + 2);
        auto curve = instance_curve(family, len, 0);
        for (std::size_t i = 0; i < len; ++i) {
            double wiggle = amp * curve[i] + 0.25 * cfg.daily_sigma * rng.normal();
            close[t + i] = std::exp(log_price) * (1.0 + wiggle);
        }
        t += len;
    }

    MultivariateSeries out;
    out.channels = {"open", "high", "low", "close", "volume"};
    out.values = Matrix(cfg.days, 5);
    Date date = cfg.start_date;
    out.dates.reserve(cfg.days);
    for (std::size_t i = 0; i < cfg.days; ++i) {
        out.dates.push_back(date);
        date = date.next_day();
        double prev = i == 0 ? cfg.start_price : close[i - 1];
        double open = prev * (1.0 + 0.25 * cfg.daily_sigma * rng.normal());
        double hi = std::max(open, close[i]) * (1.0 + 0.5 * cfg.daily_sigma * std::abs(rng.normal()));
        double lo = std::min(open, close[i]) * (1.0 - 0.5 * cfg.daily_sigma * std::abs(rng.normal()));
        double volume = 1e6 * std::exp(0.3 * rng.normal());
        out.values(i, 0) = open;
        out.values(i, 1) = hi;
        out.values(i, 2) = lo;
        out.values(i, 3) = close[i];
        out.values(i, 4) = volume;
    }
    return out;
}

} // namespace pf
