#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "patternforge/matrix.hpp"
#include "patternforge/patterns.hpp"
#include "patternforge/rng.hpp"
#include "patternforge/series.hpp"

using namespace pf;

namespace {

// Piecewise-linear curve through (index, value) anchors, one sample per step.
std::vector<double> polyline(const std::vector<std::pair<std::size_t, double>>& anchors) {
    std::vector<double> out(anchors.back().first + 1, 0.0);
    for (std::size_t a = 0; a + 1 < anchors.size(); ++a) {
        const auto [t0, v0] = anchors[a];
        const auto [t1, v1] = anchors[a + 1];
        for (std::size_t t = t0; t <= t1; ++t) {
            const double u = t1 == t0 ? 0.0 : double(t - t0) / double(t1 - t0);
            out[t] = v0 + u * (v1 - v0);
        }
    }
    return out;
}

Extremum peak(std::size_t idx, double v) { return {idx, true, v}; }
Extremum trough(std::size_t idx, double v) { return {idx, false, v}; }

std::array<Extremum, 5> five(double a, double b, double c, double d, double e,
                             bool starts_with_peak) {
    std::array<Extremum, 5> out;
    const double vals[5] = {a, b, c, d, e};
    for (std::size_t i = 0; i < 5; ++i)
        out[i] = {i * 3, starts_with_peak == (i % 2 == 0), vals[i]};
    return out;
}

// Clean head-and-shoulders price path: five interior extrema and monotone
// tails, so nothing else shows up after smoothing.
std::vector<double> planted_hs(double trough_b = 9.0, double last = 7.0) {
    return polyline({{0, 8.0},
                     {103, 10.0},
                     {107, 9.0},
                     {112, 12.0},
                     {117, trough_b},
                     {121, 10.1},
                     {299, last}});
}

} // namespace

TEST_CASE("pattern names round-trip") {
    for (PatternName p : {PatternName::HS, PatternName::IHS, PatternName::BTOP, PatternName::BBOT,
                          PatternName::TTOP, PatternName::TBOT})
        CHECK(pattern_name_from(pattern_name_str(p)) == p);
    CHECK_THROWS_AS(pattern_name_from("DTOP"), std::invalid_argument);
}

TEST_CASE("monotone series has no extrema") {
    std::vector<double> up(50);
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = 1.0 + 0.2 * double(i);
    CHECK(detect_extrema(up).empty());
    std::vector<double> down(up.rbegin(), up.rend());
    CHECK(detect_extrema(down).empty());
    CHECK_THROWS_AS(detect_extrema(std::vector<double>{1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("triangle wave extrema sit on the vertices") {
    const std::vector<double> tri{0, 1, 2, 1, 0, 1, 2, 1, 0};
    const auto ex = detect_extrema(tri);
    REQUIRE(ex.size() == 3);
    CHECK(ex[0].index == 2);
    CHECK(ex[0].is_peak);
    CHECK(ex[1].index == 4);
    CHECK_FALSE(ex[1].is_peak);
    CHECK(ex[2].index == 6);
    CHECK(ex[2].is_peak);
    // Values are the lightly smoothed prices, frozen from a direct
    // Nadaraya-Watson evaluation of the triangle.
    CHECK(ex[0].value == doctest::Approx(1.992327481518466).epsilon(1e-12));
    CHECK(ex[1].value == doctest::Approx(0.0076725184815341855).epsilon(1e-9));
    CHECK(ex[2].value == doctest::Approx(1.992327481518466).epsilon(1e-12));
}

TEST_CASE("planted five-extrema shape is recovered exactly") {
    const auto ex = detect_extrema(planted_hs());
    REQUIRE(ex.size() == 5);
    const std::size_t want_idx[5] = {103, 107, 112, 117, 121};
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(ex[i].index == want_idx[i]);
        CHECK(ex[i].is_peak == (i % 2 == 0));
    }
    CHECK(match_pattern(ex, PatternName::HS));
}

TEST_CASE("extrema alternate and stay within two steps of a coarse extremum") {
    Rng rng(777);
    std::vector<double> noise(400);
    for (auto& x : noise) x = 10.0 + 0.5 * rng.normal();
    const auto ex = detect_extrema(noise);
    REQUIRE(ex.size() > 10);

    // Independent coarse pass: strict local extrema of the h=0.8 smoothing.
    const auto coarse = kernel_smooth(noise, 0.8);
    std::vector<std::pair<std::size_t, bool>> coarse_ex;
    for (std::size_t i = 1; i + 1 < coarse.size(); ++i) {
        if (coarse[i] > coarse[i - 1] && coarse[i] > coarse[i + 1]) coarse_ex.push_back({i, true});
        if (coarse[i] < coarse[i - 1] && coarse[i] < coarse[i + 1]) coarse_ex.push_back({i, false});
    }

    const auto fine = kernel_smooth(noise, 0.3);
    for (std::size_t i = 0; i < ex.size(); ++i) {
        if (i > 0) {
            CHECK(ex[i].index > ex[i - 1].index);
            CHECK(ex[i].is_peak != ex[i - 1].is_peak);
        }
        CHECK(ex[i].value == fine[ex[i].index]);
        bool near_coarse = false;
        for (auto [ci, cpeak] : coarse_ex) {
            const std::size_t lo = ci > 2 ? ci - 2 : 0;
            if (cpeak == ex[i].is_peak && ex[i].index >= lo && ex[i].index <= ci + 2)
                near_coarse = true;
        }
        CHECK(near_coarse);
    }
}

TEST_CASE("series overload reads the close channel") {
    MultivariateSeries s;
    const std::vector<double> tri{0, 1, 2, 1, 0, 1, 2, 1, 0};
    s.values = Matrix(tri.size(), 2, 5.0);
    s.channels = {"volume", "close"};
    for (std::size_t t = 0; t < tri.size(); ++t) {
        s.dates.push_back(Date::from_days(Date::parse("2020-01-01").to_days() + long(t)));
        s.values(t, 1) = tri[t];
    }
    const auto ex = detect_extrema(s);
    REQUIRE(ex.size() == 3);
    CHECK(ex[0].index == 2);
}

TEST_CASE("head and shoulders rule arithmetic") {
    // |9.0 - 9.05| and |10 - 10.1| are both inside 0.03 * (10 + 10.1) / 2.
    std::array<Extremum, 5> hs{peak(2, 10.0), trough(5, 9.0), peak(9, 12.0), trough(13, 9.05),
                               peak(17, 10.1)};
    CHECK(match_pattern(hs, PatternName::HS));

    SUBCASE("middle peak must be the highest") {
        auto bad = hs;
        bad[2].value = 9.9;
        CHECK_FALSE(match_pattern(bad, PatternName::HS));
    }
    SUBCASE("trough gap just past the band fails, just inside passes") {
        const double band = 0.03 * 0.5 * (10.0 + 10.1);
        auto tight = hs;
        tight[3].value = 9.0 + band - 1e-9;
        CHECK(match_pattern(tight, PatternName::HS));
        tight[3].value = 9.0 + band + 1e-9;
        CHECK_FALSE(match_pattern(tight, PatternName::HS));
    }
    SUBCASE("asymmetric shoulders fail") {
        auto lopsided = hs;
        lopsided[4].value = 11.0; // still below the head, far from the left shoulder
        CHECK_FALSE(match_pattern(lopsided, PatternName::HS));
    }
}

TEST_CASE("inverse head and shoulders mirrors the rule") {
    std::array<Extremum, 5> ihs{trough(2, 10.0), peak(5, 11.0), trough(9, 8.0), peak(13, 10.95),
                                trough(17, 10.1)};
    CHECK(match_pattern(ihs, PatternName::IHS));
    auto bad = ihs;
    bad[2].value = 10.5; // middle trough no longer the lowest
    CHECK_FALSE(match_pattern(bad, PatternName::IHS));
    bad = ihs;
    bad[3].value = 12.0; // peaks drift apart beyond the band
    CHECK_FALSE(match_pattern(bad, PatternName::IHS));
}

TEST_CASE("broadening and triangle rules") {
    // Peaks strictly rising, troughs strictly falling: a textbook broadening top.
    auto widening = five(10.0, 9.5, 10.5, 9.0, 11.0, true);
    CHECK(match_pattern(widening, PatternName::BTOP));
    CHECK_FALSE(match_pattern(widening, PatternName::TTOP));
    CHECK_FALSE(match_pattern(widening, PatternName::HS));

    auto narrowing = five(11.0, 9.0, 10.5, 9.5, 10.0, true);
    CHECK(match_pattern(narrowing, PatternName::TTOP));
    CHECK_FALSE(match_pattern(narrowing, PatternName::BTOP));

    // Monotonicity is strict: a repeated peak kills both readings.
    auto flat_peaks = five(10.0, 9.5, 10.0, 9.0, 10.0, true);
    CHECK_FALSE(match_pattern(flat_peaks, PatternName::BTOP));
    CHECK_FALSE(match_pattern(flat_peaks, PatternName::TTOP));

    auto widening_lows = five(10.0, 10.5, 9.5, 11.0, 9.0, false);
    CHECK(match_pattern(widening_lows, PatternName::BBOT));
    CHECK_FALSE(match_pattern(widening_lows, PatternName::TBOT));

    auto narrowing_lows = five(9.0, 11.0, 9.5, 10.5, 10.0, false);
    CHECK(match_pattern(narrowing_lows, PatternName::TBOT));
    CHECK_FALSE(match_pattern(narrowing_lows, PatternName::BBOT));
}

TEST_CASE("match_pattern is scale invariant") {
    std::array<Extremum, 5> hs{peak(2, 10.0), trough(5, 9.0), peak(9, 12.0), trough(13, 9.05),
                               peak(17, 10.1)};
    std::array<Extremum, 5> hs_fail = hs;
    hs_fail[3].value = 9.8;
    auto btop = five(10.0, 9.5, 10.5, 9.0, 11.0, true);
    for (double c : {0.25, 3.7, 1000.0}) {
        auto scale = [c](std::array<Extremum, 5> xs) {
            for (auto& e : xs) e.value *= c;
            return xs;
        };
        CHECK(match_pattern(scale(hs), PatternName::HS) == match_pattern(hs, PatternName::HS));
        CHECK(match_pattern(scale(hs_fail), PatternName::HS) ==
              match_pattern(hs_fail, PatternName::HS));
        CHECK(match_pattern(scale(btop), PatternName::BTOP) ==
              match_pattern(btop, PatternName::BTOP));
        CHECK(match_pattern(scale(btop), PatternName::TTOP) ==
              match_pattern(btop, PatternName::TTOP));
    }
}

TEST_CASE("match_pattern rejects malformed windows") {
    auto good = five(10.0, 9.5, 10.5, 9.0, 11.0, true);
    std::vector<Extremum> four(good.begin(), good.begin() + 4);
    CHECK_THROWS_AS(match_pattern(four, PatternName::BTOP), std::invalid_argument);

    auto wrong_kind = good;
    wrong_kind[0].is_peak = false;
    CHECK_THROWS_AS(match_pattern(wrong_kind, PatternName::BTOP), std::invalid_argument);
    // A trough-first window cannot be tested against a peak-first rule.
    CHECK_THROWS_AS(match_pattern(five(1, 2, 1, 2, 1, false), PatternName::HS),
                    std::invalid_argument);

    auto unordered = good;
    unordered[2].index = unordered[1].index;
    CHECK_THROWS_AS(match_pattern(unordered, PatternName::BTOP), std::invalid_argument);
}

TEST_CASE("scan finds the planted head and shoulders") {
    const auto close = planted_hs();
    const auto hits = scan_windows(close);
    bool found = false;
    for (const auto& h : hits) {
        if (h.name != PatternName::HS) continue;
        if (h.start < 125 && h.start + h.length > 100) found = true;
    }
    CHECK(found);

    SUBCASE("second trough lifted to five percent of the outer peaks is rejected") {
        // 0.05 * (10 + 10.1) / 2 above the first trough: well outside the 3% band.
        const auto bad = planted_hs(9.0 + 0.05 * 10.05, 7.2);
        for (const auto& h : scan_windows(bad))
            CHECK(h.name != PatternName::HS);
    }
}

TEST_CASE("scan on short input is empty") {
    std::vector<double> tiny{1, 2, 1, 2, 1, 2, 1, 2, 1, 2};
    CHECK(scan_windows(tiny).empty());
    CHECK_THROWS_AS(scan_windows(tiny, 3, 35), std::invalid_argument);
    CHECK_THROWS_AS(scan_windows(tiny, 20, 15), std::invalid_argument);
}

TEST_CASE("scan matches a naive re-scan on white noise") {
    Rng rng(20240915);
    std::vector<double> close(500);
    double level = 50.0;
    for (auto& x : close) {
        level += 0.3 * rng.normal();
        x = level + 1.5 * rng.normal();
    }

    const auto got = scan_windows(close, 15, 35, 4);

    // Naive checker: same extrema, own window bookkeeping, own rule
    // arithmetic, own overlap filter.
    const auto ex = detect_extrema(close);
    struct Det {
        PatternName name;
        std::size_t start, len;
    };
    std::vector<Det> raw;
    for (std::size_t t = 0; t + 15 <= close.size(); ++t) {
        for (std::size_t w = 15; w <= 35 && t + w <= close.size(); ++w) {
            std::vector<Extremum> in;
            for (const auto& e : ex)
                if (e.index >= t && e.index < t + w) in.push_back(e);
            if (in.size() < 5) continue;
            std::vector<Extremum> last(in.end() - 5, in.end());
            const double a = last[0].value, b = last[1].value, c = last[2].value,
                         d = last[3].value, e5 = last[4].value;
            if (last[0].is_peak) {
                const double band = 0.03 * 0.5 * (a + e5);
                if (c > a && c > e5 && std::abs(b - d) <= band && std::abs(a - e5) <= band)
                    raw.push_back({PatternName::HS, t, w});
                if (a < c && c < e5 && b > d) raw.push_back({PatternName::BTOP, t, w});
                if (a > c && c > e5 && b < d) raw.push_back({PatternName::TTOP, t, w});
            } else {
                const double band = 0.03 * 0.5 * (a + e5);
                if (c < a && c < e5 && std::abs(b - d) <= band && std::abs(a - e5) <= band)
                    raw.push_back({PatternName::IHS, t, w});
                if (a > c && c > e5 && b < d) raw.push_back({PatternName::BBOT, t, w});
                if (a < c && c < e5 && b > d) raw.push_back({PatternName::TBOT, t, w});
            }
        }
    }
    std::vector<Det> want;
    for (const auto& cand : raw) {
        bool dup = false;
        for (const auto& k : want) {
            if (k.name != cand.name) continue;
            const std::size_t lo = std::max(k.start, cand.start);
            const std::size_t hi = std::min(k.start + k.len, cand.start + cand.len);
            if (hi > lo &&
                double(hi - lo) / double(std::min(k.len, cand.len)) > 0.5) {
                dup = true;
                break;
            }
        }
        if (!dup) want.push_back(cand);
    }

    REQUIRE(!want.empty());
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(got[i].name == want[i].name);
        CHECK(got[i].start == want[i].start);
        CHECK(got[i].length == want[i].len);
    }

    SUBCASE("thread count does not change the outcome") {
        const auto single = scan_windows(close, 15, 35, 1);
        REQUIRE(single.size() == got.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(single[i].name == got[i].name);
            CHECK(single[i].start == got[i].start);
            CHECK(single[i].length == got[i].length);
        }
    }
}

TEST_CASE("deduplication keeps the earliest start") {
    // Two long stretches of the same alternating shape produce many windows
    // over the same extrema; survivors of one pattern must not overlap > 50%.
    Rng rng(55);
    std::vector<double> close(300);
    double level = 20.0;
    for (auto& x : close) {
        level += 0.2 * rng.normal();
        x = level + 1.0 * rng.normal();
    }
    const auto hits = scan_windows(close);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        for (std::size_t j = i + 1; j < hits.size(); ++j) {
            if (hits[i].name != hits[j].name) continue;
            const std::size_t lo = std::max(hits[i].start, hits[j].start);
            const std::size_t hi =
                std::min(hits[i].start + hits[i].length, hits[j].start + hits[j].length);
            if (hi <= lo) continue;
            const double frac =
                double(hi - lo) / double(std::min(hits[i].length, hits[j].length));
            CHECK(frac <= 0.5);
        }
    }
}

namespace {

Matrix warped_template(std::size_t len, double gamma) {
    // Price is a sine arch, the companion tracks the squared phase; both are
    // sampled on a power-law warped grid and min-max scaled.
    Matrix m(len, 2);
    for (std::size_t i = 0; i < len; ++i) {
        const double u = double(i) / double(len - 1);
        const double w = std::pow(u, gamma);
        m(i, 0) = std::sin(3.14159265358979 * w);
        m(i, 1) = w * w;
    }
    return minmax_normalize(m);
}

} // namespace

TEST_CASE("single-instance prototype is the instance") {
    const Matrix inst = warped_template(20, 1.0);
    const auto proto = build_prototype(PatternName::HS, {inst});
    CHECK(proto.name == PatternName::HS);
    CHECK(proto.instance_count == 1);
    REQUIRE(proto.values.same_shape(inst));
    CHECK(max_abs_diff(proto.values, inst) < 1e-12);
}

TEST_CASE("identical instances collapse to themselves") {
    const Matrix inst = warped_template(20, 1.0);
    const auto proto = build_prototype(PatternName::BTOP, {inst, inst, inst});
    CHECK(proto.instance_count == 3);
    CHECK(max_abs_diff(proto.values, inst) < 1e-12);
}

TEST_CASE("warped copies average back near the template") {
    const Matrix tmpl = warped_template(20, 1.0);
    const std::vector<Matrix> copies{warped_template(20, 0.8), warped_template(20, 1.0),
                                     warped_template(20, 1.25)};
    const auto proto = build_prototype(PatternName::HS, copies, 2);
    CHECK(proto.instance_count == 3);
    CHECK(max_abs_diff(proto.values, tmpl) < 0.1);

    SUBCASE("instance order does not matter") {
        const std::vector<Matrix> reversed{copies[2], copies[1], copies[0]};
        const auto again = build_prototype(PatternName::HS, reversed, 2);
        CHECK(max_abs_diff(again.values, proto.values) <= 1e-12);
        const std::vector<Matrix> rotated{copies[1], copies[2], copies[0]};
        const auto third = build_prototype(PatternName::HS, rotated);
        CHECK(max_abs_diff(third.values, proto.values) <= 1e-12);
    }
}

TEST_CASE("prototype columns are min-max scaled") {
    Rng rng(9);
    std::vector<Matrix> insts;
    for (int k = 0; k < 4; ++k) {
        Matrix m(18, 3);
        for (std::size_t r = 0; r < m.rows(); ++r)
            for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform();
        insts.push_back(minmax_normalize(m));
    }
    const auto proto = build_prototype(PatternName::TBOT, insts);
    for (std::size_t c = 0; c < proto.values.cols(); ++c) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t r = 0; r < proto.values.rows(); ++r) {
            lo = std::min(lo, proto.values(r, c));
            hi = std::max(hi, proto.values(r, c));
        }
        CHECK(lo == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(hi == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("prototype input validation") {
    CHECK_THROWS_AS(build_prototype(PatternName::HS, {}), std::invalid_argument);
    const Matrix a = warped_template(20, 1.0);
    const Matrix b = warped_template(19, 1.0);
    CHECK_THROWS_AS(build_prototype(PatternName::HS, {a, b}), std::invalid_argument);
}

TEST_CASE("group builder skips empty groups") {
    const Matrix inst = warped_template(20, 1.0);
    std::vector<PatternGroup> groups{{PatternName::HS, {inst, inst}},
                                     {PatternName::IHS, {}},
                                     {PatternName::TTOP, {inst}}};
    const auto protos = build_prototypes(groups);
    REQUIRE(protos.size() == 2);
    CHECK(protos[0].name == PatternName::HS);
    CHECK(protos[0].instance_count == 2);
    CHECK(protos[1].name == PatternName::TTOP);
}
