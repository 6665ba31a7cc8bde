#include "patternforge/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "patternforge/parallel.hpp"

namespace pf {

void BacktestConfig::validate() const {
    if (interval == 0) {
        throw std::invalid_argument("backtest interval must be positive");
    }
    if (window == 0) {
        throw std::invalid_argument("backtest window must be positive");
    }
    if (fee < 0.0 || fee >= 1.0) {
        throw std::invalid_argument("backtest fee must lie in [0, 1)");
    }
}

TradeRecord make_trade(std::size_t open_index, TradeDirection direction, double entry_price,
                       double exit_price, const BacktestConfig& cfg, int pattern_label,
                       double p_max) {
    if (!(entry_price > 0.0) || !(exit_price > 0.0)) {
        throw std::invalid_argument("trade prices must be positive");
    }
    TradeRecord t;
    t.open_index = open_index;
    t.direction = direction;
    t.entry_price = entry_price;
    t.exit_price = exit_price;
    const double sign = direction == TradeDirection::Long ? 1.0 : -1.0;
    t.gross_return = sign * (exit_price - entry_price) / entry_price;
    if (cfg.multiplicative_fees) {
        t.net_return = (1.0 + t.gross_return) * (1.0 - cfg.fee) * (1.0 - cfg.fee) - 1.0;
    } else {
        t.net_return = t.gross_return - 2.0 * cfg.fee;
    }
    t.pattern_label = pattern_label;
    t.p_max = p_max;
    return t;
}

TradeDirection infer_direction(const Matrix& centroid, double gamma, std::size_t close_col) {
    if (centroid.rows() < 2 || close_col >= centroid.cols()) {
        throw std::invalid_argument("infer_direction needs a centroid with a close channel");
    }
    if (!(gamma > 0.0) || gamma > 1.0) {
        throw std::invalid_argument("infer_direction gamma must lie in (0, 1]");
    }
    const std::size_t last = centroid.rows() - 1;
    const auto split = std::size_t(std::llround(gamma * double(last)));
    return centroid(last, close_col) > centroid(split, close_col) ? TradeDirection::Long
                                                                  : TradeDirection::Short;
}

TradeDirection truth_direction(double entry_close, double exit_close) {
    return exit_close > entry_close ? TradeDirection::Long : TradeDirection::Short;
}

std::vector<std::size_t> protocol_grid(const MultivariateSeries& test, const BacktestConfig& cfg) {
    cfg.validate();
    std::vector<std::size_t> grid;
    if (test.length() <= cfg.window + cfg.interval) {
        return grid;
    }
    for (std::size_t t = cfg.window - 1; t + cfg.interval < test.length(); t += cfg.interval) {
        grid.push_back(t);
    }
    return grid;
}

std::vector<TradeRecord> run_protocol(const MultivariateSeries& test, const TradeDecider& decide,
                                      const BacktestConfig& cfg, int threads,
                                      std::size_t close_col) {
    if (close_col >= test.dim()) {
        throw std::invalid_argument("run_protocol: close channel out of range");
    }
    const std::vector<std::size_t> grid = protocol_grid(test, cfg);
    std::vector<std::optional<TradeRecord>> slots(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t gi) {
        const std::size_t t = grid[gi];
        const Matrix window = test.values.slice_rows(t + 1 - cfg.window, cfg.window);
        const std::optional<TradeSignal> signal = decide(window, t);
        if (!signal) {
            return;
        }
        TradeRecord trade =
            make_trade(t, signal->direction, test.values(t, close_col),
                       test.values(t + cfg.interval, close_col), cfg, signal->pattern_label,
                       signal->p_max);
        trade.open_date = test.dates[t];
        trade.exit_date = test.dates[t + cfg.interval];
        slots[gi] = trade;
    });
    std::vector<TradeRecord> trades;
    for (const auto& slot : slots) {
        if (slot) {
            trades.push_back(*slot);
        }
    }
    return trades;
}

MetricsReport compute_metrics(const std::vector<TradeRecord>& trades,
                              const std::vector<TradeDirection>& truth) {
    if (trades.size() != truth.size()) {
        throw std::invalid_argument("compute_metrics: trades and truth must align");
    }
    MetricsReport report;
    report.n_trades = trades.size();
    if (trades.empty()) {
        report.no_trades = true;
        return report;
    }

    // Macro F1 over the two directions, on gross (fee-free) outcomes.
    double f1_sum = 0.0;
    for (TradeDirection cls : {TradeDirection::Long, TradeDirection::Short}) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < trades.size(); ++i) {
            const bool predicted = trades[i].direction == cls;
            const bool actual = truth[i] == cls;
            tp += predicted && actual;
            fp += predicted && !actual;
            fn += !predicted && actual;
        }
        const double precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
        const double recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
        f1_sum += precision + recall == 0.0
                      ? 0.0
                      : 2.0 * precision * recall / (precision + recall);
    }
    report.f1 = f1_sum / 2.0;

    std::size_t wins = 0, losses = 0;
    for (const TradeRecord& t : trades) {
        (t.gross_return > 0.0 ? wins : losses) += 1;
        report.ar += t.gross_return / double(trades.size());
        report.trwf += t.net_return;
    }
    if (losses == 0) {
        report.wlr = std::numeric_limits<double>::infinity();
        report.wlr_infinite = true;
    } else {
        report.wlr = double(wins) / double(losses);
    }
    return report;
}

ConfusionMatrix build_confusion(const std::vector<int>& true_labels,
                                const std::vector<int>& predicted_labels) {
    if (true_labels.size() != predicted_labels.size()) {
        throw std::invalid_argument("build_confusion: label vectors must align");
    }
    std::map<int, std::size_t> index;
    for (int l : true_labels) {
        index.emplace(l, 0);
    }
    for (int l : predicted_labels) {
        index.emplace(l, 0);
    }
    index.emplace(-1, 0); // non-pattern column is always part of the universe

    ConfusionMatrix cm;
    for (auto& [label, idx] : index) {
        idx = cm.labels.size();
        cm.labels.push_back(label);
    }
    const std::size_t n = cm.labels.size();
    cm.counts = Matrix(n, n);
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        cm.counts(index.at(true_labels[i]), index.at(predicted_labels[i])) += 1.0;
    }
    cm.normalized = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            total += cm.counts(r, c);
        }
        if (total > 0.0) {
            for (std::size_t r = 0; r < n; ++r) {
                cm.normalized(r, c) = cm.counts(r, c) / total;
            }
        }
    }
    return cm;
}

std::vector<TradeRecord> random_baseline(const MultivariateSeries& test, std::size_t k,
                                         const BacktestConfig& cfg, Rng& rng,
                                         std::size_t close_col) {
    if (close_col >= test.dim()) {
        throw std::invalid_argument("random_baseline: close channel out of range");
    }
    const std::vector<std::size_t> grid = protocol_grid(test, cfg);
    if (k > grid.size()) {
        throw std::domain_error("random_baseline: k exceeds the number of grid points");
    }
    std::vector<std::size_t> picks = rng.sample_without_replacement(grid.size(), k);
    std::sort(picks.begin(), picks.end());
    std::vector<TradeRecord> trades;
    trades.reserve(k);
    for (std::size_t pick : picks) {
        const std::size_t t = grid[pick];
        const TradeDirection dir = rng.coin() ? TradeDirection::Long : TradeDirection::Short;
        TradeRecord trade = make_trade(t, dir, test.values(t, close_col),
                                       test.values(t + cfg.interval, close_col), cfg);
        trade.open_date = test.dates[t];
        trade.exit_date = test.dates[t + cfg.interval];
        trades.push_back(trade);
    }
    return trades;
}

} // namespace pf
