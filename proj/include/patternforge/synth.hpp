#pragma once

#include <cstdint>
#include <vector>

#include "patternforge/series.hpp"

namespace pf {

struct PlantedInterval {
    std::size_t start = 0;
    std::size_t length = 0;
    int family = -1;
};

struct MotifSeries {
    MultivariateSeries series;
    std::vector<PlantedInterval> planted;
};

struct MotifSynthConfig {
    std::size_t T = 2000;
    std::size_t D = 3;
    int families = 3;
    double amp_jitter = 0.2;    // amplitude scale drawn from 1 +- this
    double warp_jitter = 0.1;   // instance length drawn from 20*(1 +- this)
    double noise_sigma = 0.05;
    std::size_t motif_len = 20;
    std::size_t gap_min = 8;    // background steps between instances
    std::size_t gap_max = 30;
    double walk_sigma = 0.15;   // background random-walk step scale
};

// Random-walk background with non-overlapping instances of fixed family
// shapes written over it; each instance is amplitude-scaled, length-warped
// by resampling, and perturbed with Gaussian noise. Ground-truth intervals
// are returned for purity scoring.
MotifSeries synth_motif_series(const MotifSynthConfig& cfg, std::uint64_t seed);

// Fraction of assigned segments whose cluster's dominant planted family they
// share; an assignment is labeled with the family covering at least half of
// it, else as background.
double planted_purity(const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& clusters,
                      const std::vector<PlantedInterval>& planted);

struct OhlcvSynthConfig {
    std::size_t days = 900;
    double start_price = 100.0;
    double daily_sigma = 0.012;
    int families = 3;
    std::size_t motif_len = 20;
    double motif_amp = 0.06;    // motif excursion as a fraction of price
    std::size_t gap_min = 10;
    std::size_t gap_max = 40;
    Date start_date{2018, 1, 1};
};

// Daily OHLCV bars whose close path is a geometric random walk with the same
// family shapes planted multiplicatively; open/high/low are derived around
// the close, volume is lognormal-ish noise.
MultivariateSeries synth_ohlcv_series(const OhlcvSynthConfig& cfg, std::uint64_t seed);

} // namespace pf
