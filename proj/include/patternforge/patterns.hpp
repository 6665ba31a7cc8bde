#pragma once

#include <array>
#include <string>
#include <vector>

#include "patternforge/matrix.hpp"
#include "patternforge/series.hpp"

namespace pf {

enum class PatternName { HS, IHS, BTOP, BBOT, TTOP, TBOT };

const char* pattern_name_str(PatternName name);
PatternName pattern_name_from(const std::string& text);

struct Extremum {
    std::size_t index = 0;
    bool is_peak = false;
    double value = 0.0; // smoothed price at the refined index
};

struct PatternDetection {
    PatternName name = PatternName::HS;
    std::size_t start = 0;
    std::size_t length = 0;
};

struct PatternPrototype {
    PatternName name = PatternName::HS;
    Matrix values; // ref_len x D, per-column min-max scaled
    std::size_t instance_count = 0;
};

struct PatternGroup {
    PatternName name = PatternName::HS;
    std::vector<Matrix> instances; // each ref_len x D, normalized
};

// Coarse extrema of the h=0.8-smoothed closes, each refined to the best
// h=0.3-smoothed value within +-2 steps, with alternation enforced by
// dropping the weaker of two same-kind neighbors.
std::vector<Extremum> detect_extrema(const std::vector<double>& close);
std::vector<Extremum> detect_extrema(const MultivariateSeries& series);

// Structural rule check on five alternating extrema. Head-and-shoulders
// requires the middle peak highest with troughs and shoulders within
// `tolerance` of the average outer peak; the inverse form mirrors it.
// Broadening patterns need strictly widening highs/lows, triangles strictly
// narrowing ones. All rules are ratio or ordering constraints, so scaling
// every value by a positive constant never changes the outcome.
bool match_pattern(const std::array<Extremum, 5>& extrema, PatternName rule,
                   double tolerance = 0.03);
bool match_pattern(const std::vector<Extremum>& extrema, PatternName rule,
                   double tolerance = 0.03);

// Slides every window length in [min_window, max_window] across the series
// and tests the last five extrema inside each window against all rules of
// the matching parity. Same-pattern detections overlapping by more than half
// keep the earliest start (shortest window on ties).
std::vector<PatternDetection> scan_windows(const std::vector<double>& close,
                                           std::size_t min_window = 15,
                                           std::size_t max_window = 35,
                                           int threads = 1);

// Price prototype is the DBA barycenter of the instances' first columns;
// companion columns are warped onto the barycenter timeline per instance and
// averaged elementwise; the assembled prototype is min-max rescaled.
PatternPrototype build_prototype(PatternName name, const std::vector<Matrix>& instances,
                                 int threads = 1);

// Empty groups are skipped with a warning.
std::vector<PatternPrototype> build_prototypes(const std::vector<PatternGroup>& groups,
                                               int threads = 1);

} // namespace pf
