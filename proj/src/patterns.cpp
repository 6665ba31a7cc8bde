#include "patternforge/patterns.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "patternforge/dtw.hpp"
#include "patternforge/log.hpp"
#include "patternforge/parallel.hpp"

namespace pf {

const char* pattern_name_str(PatternName name) {
    switch (name) {
        case PatternName::HS: return "HS";
        case PatternName::IHS: return "IHS";
        case PatternName::BTOP: return "BTOP";
        case PatternName::BBOT: return "BBOT";
        case PatternName::TTOP: return "TTOP";
        case PatternName::TBOT: return "TBOT";
    }
    throw std::logic_error("pattern_name_str: unknown pattern");
}

PatternName pattern_name_from(const std::string& text) {
    if (text == "HS") return PatternName::HS;
    if (text == "IHS") return PatternName::IHS;
    if (text == "BTOP") return PatternName::BTOP;
    if (text == "BBOT") return PatternName::BBOT;
    if (text == "TTOP") return PatternName::TTOP;
    if (text == "TBOT") return PatternName::TBOT;
    throw std::invalid_argument("unknown pattern name: " + text);
}

namespace {

constexpr double kCoarseBandwidth = 0.8;
constexpr double kFineBandwidth = 0.3;
constexpr std::size_t kRefineRadius = 2;

// Drops the weaker of two same-kind neighbors until kinds alternate. For
// peaks the lower value loses, for troughs the higher one; ties drop the
// later extremum so reruns stay stable.
void enforce_alternation(std::vector<Extremum>& ex) {
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i + 1 < ex.size(); ++i) {
            if (ex[i].is_peak != ex[i + 1].is_peak) continue;
            bool keep_first;
            if (ex[i].is_peak)
                keep_first = ex[i].value >= ex[i + 1].value;
            else
                keep_first = ex[i].value <= ex[i + 1].value;
            ex.erase(ex.begin() + static_cast<std::ptrdiff_t>(keep_first ? i + 1 : i));
            changed = true;
            break;
        }
    }
}

} // namespace

std::vector<Extremum> detect_extrema(const std::vector<double>& close) {
    if (close.size() < 5)
        throw std::invalid_argument("detect_extrema: need at least 5 points");
    const std::size_t n = close.size();
    const std::vector<double> coarse = kernel_smooth(close, kCoarseBandwidth);
    const std::vector<double> fine = kernel_smooth(close, kFineBandwidth);

    std::vector<Extremum> ex;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const bool peak = coarse[i] > coarse[i - 1] && coarse[i] > coarse[i + 1];
        const bool trough = coarse[i] < coarse[i - 1] && coarse[i] < coarse[i + 1];
        if (!peak && !trough) continue;

        // Sharpen the location on the lightly smoothed signal.
        const std::size_t lo = i > kRefineRadius ? i - kRefineRadius : 0;
        const std::size_t hi = std::min(n - 1, i + kRefineRadius);
        std::size_t best = lo;
        for (std::size_t j = lo + 1; j <= hi; ++j) {
            if (peak ? fine[j] > fine[best] : fine[j] < fine[best]) best = j;
        }
        ex.push_back({best, peak, fine[best]});
    }

    std::sort(ex.begin(), ex.end(),
              [](const Extremum& a, const Extremum& b) { return a.index < b.index; });
    // Two coarse extrema can refine onto the same step; the first one wins.
    ex.erase(std::unique(ex.begin(), ex.end(),
                         [](const Extremum& a, const Extremum& b) { return a.index == b.index; }),
             ex.end());
    enforce_alternation(ex);
    return ex;
}

std::vector<Extremum> detect_extrema(const MultivariateSeries& series) {
    const std::size_t col = series.channel_index("close");
    std::vector<double> close(series.length());
    for (std::size_t t = 0; t < close.size(); ++t) close[t] = series.values(t, col);
    return detect_extrema(close);
}

bool match_pattern(const std::array<Extremum, 5>& extrema, PatternName rule, double tolerance) {
    const bool starts_with_peak =
        rule == PatternName::HS || rule == PatternName::BTOP || rule == PatternName::TTOP;
    for (std::size_t i = 0; i < 5; ++i) {
        const bool want_peak = starts_with_peak == (i % 2 == 0);
        if (extrema[i].is_peak != want_peak)
            throw std::invalid_argument("match_pattern: extremum kinds do not fit the rule");
        if (i > 0 && extrema[i].index <= extrema[i - 1].index)
            throw std::invalid_argument("match_pattern: extremum indices must increase");
    }
    const double a = extrema[0].value;
    const double b = extrema[1].value;
    const double c = extrema[2].value;
    const double d = extrema[3].value;
    const double e = extrema[4].value;

    switch (rule) {
        case PatternName::HS: {
            // Middle peak above both shoulders; shoulders and troughs each
            // within the tolerance band of the average outer peak.
            if (!(c > a && c > e)) return false;
            const double band = tolerance * 0.5 * (a + e);
            return std::abs(b - d) <= band && std::abs(a - e) <= band;
        }
        case PatternName::IHS: {
            if (!(c < a && c < e)) return false;
            const double band = tolerance * 0.5 * (a + e);
            return std::abs(b - d) <= band && std::abs(a - e) <= band;
        }
        case PatternName::BTOP:
            return a < c && c < e && b > d;
        case PatternName::BBOT:
            return a > c && c > e && b < d;
        case PatternName::TTOP:
            return a > c && c > e && b < d;
        case PatternName::TBOT:
            return a < c && c < e && b > d;
    }
    throw std::logic_error("match_pattern: unknown rule");
}

bool match_pattern(const std::vector<Extremum>& extrema, PatternName rule, double tolerance) {
    if (extrema.size() != 5)
        throw std::invalid_argument("match_pattern: rule needs exactly 5 extrema, got " +
                                    std::to_string(extrema.size()));
    std::array<Extremum, 5> fixed;
    std::copy(extrema.begin(), extrema.end(), fixed.begin());
    return match_pattern(fixed, rule, tolerance);
}

namespace {

double overlap_fraction(const PatternDetection& a, const PatternDetection& b) {
    const std::size_t lo = std::max(a.start, b.start);
    const std::size_t hi = std::min(a.start + a.length, b.start + b.length);
    if (hi <= lo) return 0.0;
    return static_cast<double>(hi - lo) / static_cast<double>(std::min(a.length, b.length));
}

} // namespace

std::vector<PatternDetection> scan_windows(const std::vector<double>& close,
                                           std::size_t min_window, std::size_t max_window,
                                           int threads) {
    if (min_window < 7 || min_window > max_window)
        throw std::invalid_argument("scan_windows: need 7 <= min_window <= max_window");
    const std::size_t n = close.size();
    if (n < min_window) return {};

    const std::vector<Extremum> extrema = detect_extrema(close);
    std::vector<std::size_t> positions(extrema.size());
    for (std::size_t i = 0; i < extrema.size(); ++i) positions[i] = extrema[i].index;

    static constexpr PatternName kPeakRules[] = {PatternName::HS, PatternName::BTOP,
                                                 PatternName::TTOP};
    static constexpr PatternName kTroughRules[] = {PatternName::IHS, PatternName::BBOT,
                                                   PatternName::TBOT};

    const std::size_t starts = n - min_window + 1;
    std::vector<std::vector<PatternDetection>> found(starts);
    parallel_for(starts, threads, [&](std::size_t t) {
        auto lo = std::lower_bound(positions.begin(), positions.end(), t);
        for (std::size_t w = min_window; w <= max_window && t + w <= n; ++w) {
            auto hi = std::lower_bound(lo, positions.end(), t + w);
            if (hi - lo < 5) continue;
            std::array<Extremum, 5> last;
            const std::size_t end = static_cast<std::size_t>(hi - positions.begin());
            for (std::size_t k = 0; k < 5; ++k) last[k] = extrema[end - 5 + k];
            const auto& rules = last[0].is_peak ? kPeakRules : kTroughRules;
            for (PatternName rule : rules) {
                if (match_pattern(last, rule)) found[t].push_back({rule, t, w});
            }
        }
    });

    std::vector<PatternDetection> all;
    for (auto& per_start : found)
        all.insert(all.end(), per_start.begin(), per_start.end());

    // Earliest start wins among same-pattern detections that overlap by more
    // than half; for one start the shortest window is scanned first and kept.
    std::vector<PatternDetection> kept;
    for (const auto& cand : all) {
        bool duplicate = false;
        for (const auto& k : kept) {
            if (k.name == cand.name && overlap_fraction(k, cand) > 0.5) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) kept.push_back(cand);
    }
    return kept;
}

PatternPrototype build_prototype(PatternName name, const std::vector<Matrix>& instances,
                                 int threads) {
    if (instances.empty()) throw std::invalid_argument("build_prototype: empty instance group");
    const std::size_t rows = instances[0].rows();
    const std::size_t cols = instances[0].cols();
    if (rows < 2 || cols < 1) throw std::invalid_argument("build_prototype: degenerate instances");
    for (const auto& inst : instances)
        if (inst.rows() != rows || inst.cols() != cols)
            throw std::invalid_argument("build_prototype: instances must share one shape");

    std::vector<Segment> price(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        Matrix col(rows, 1);
        col.set_col(0, instances[i].col(0));
        price[i].values = std::move(col);
    }
    const Barycenter bary = dba_barycenter(price, rows, 10, 1e-4, threads);

    Matrix proto(rows, cols, 0.0);
    proto.set_col(0, bary.values.col(0));

    if (cols > 1) {
        std::vector<Matrix> warped(instances.size());
        parallel_for(instances.size(), threads, [&](std::size_t i) {
            const Alignment al = dtw_distance(price[i].values, bary.values);
            Matrix comp(rows, cols - 1);
            for (std::size_t c = 1; c < cols; ++c) comp.set_col(c - 1, instances[i].col(c));
            warped[i] = warp_align_companions(al, comp, rows);
        });
        for (std::size_t c = 1; c < cols; ++c) {
            for (std::size_t r = 0; r < rows; ++r) {
                double sum = 0.0;
                for (const auto& w : warped) sum += w(r, c - 1);
                proto(r, c) = sum / static_cast<double>(instances.size());
            }
        }
    }

    return {name, minmax_normalize(proto), instances.size()};
}

std::vector<PatternPrototype> build_prototypes(const std::vector<PatternGroup>& groups,
                                               int threads) {
    std::vector<PatternPrototype> out;
    for (const auto& g : groups) {
        if (g.instances.empty()) {
            log::warn(std::string("no instances for pattern ") + pattern_name_str(g.name) +
                      ", skipping its prototype");
            continue;
        }
        out.push_back(build_prototype(g.name, g.instances, threads));
    }
    return out;
}

} // namespace pf
