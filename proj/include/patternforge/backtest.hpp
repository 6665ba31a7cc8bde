#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "patternforge/dates.hpp"
#include "patternforge/matrix.hpp"
#include "patternforge/rng.hpp"
#include "patternforge/series.hpp"

namespace pf {

enum class TradeDirection { Long, Short };

inline const char* direction_str(TradeDirection d) {
    return d == TradeDirection::Long ? "long" : "short";
}

struct TradeRecord {
    std::size_t open_index = 0; // row in the test series
    Date open_date;
    Date exit_date;
    TradeDirection direction = TradeDirection::Long;
    double entry_price = 0.0;
    double exit_price = 0.0;
    double gross_return = 0.0; // fee-free
    double net_return = 0.0;   // after both entry and exit fees
    int pattern_label = -1;
    double p_max = 0.0;
};

struct BacktestConfig {
    std::size_t interval = 4; // days between grid points and the hold horizon
    std::size_t window = 16;  // raw days handed to the decider at each point
    double fee = 0.001;       // charged at entry and at exit
    bool multiplicative_fees = false; // net = (1+gross)(1-fee)^2 - 1 when set

    void validate() const;
};

// Positions are unit notional, so the default net return is the additive
// gross - 2*fee.
TradeRecord make_trade(std::size_t open_index, TradeDirection direction, double entry_price,
                       double exit_price, const BacktestConfig& cfg, int pattern_label = -1,
                       double p_max = 0.0);

// Direction implied by a pattern centroid: long when its close channel ends
// above the point where the observed prefix stops, i.e. close[ref_len-1] >
// close[round(gamma*(ref_len-1))]. Equality trades short.
TradeDirection infer_direction(const Matrix& centroid, double gamma, std::size_t close_col = 0);

// Realized 4-day direction used as metric truth; a non-positive change is
// down.
TradeDirection truth_direction(double entry_close, double exit_close);

struct TradeSignal {
    TradeDirection direction = TradeDirection::Long;
    int pattern_label = -1;
    double p_max = 0.0;
};

// Called at every grid point with the trailing `window` raw rows (ending at
// the entry day) and the entry row index; nullopt means no trade.
using TradeDecider =
    std::function<std::optional<TradeSignal>(const Matrix& window, std::size_t entry_index)>;

// Walks the test period on an `interval`-day grid. At each grid point the
// decider sees the prior `window` days; a signal opens a position at that
// day's close which is closed `interval` days later.
std::vector<TradeRecord> run_protocol(const MultivariateSeries& test, const TradeDecider& decide,
                                      const BacktestConfig& cfg, int threads = 1,
                                      std::size_t close_col = 0);

// Grid points eligible for trading under cfg: every `interval`-th row with a
// full trailing window and a full holding horizon.
std::vector<std::size_t> protocol_grid(const MultivariateSeries& test, const BacktestConfig& cfg);

struct MetricsReport {
    double f1 = 0.0;   // macro over {up, down}, fee-free
    double wlr = 0.0;  // wins / losses, zero-gross counts as a loss
    double ar = 0.0;   // mean gross return
    double trwf = 0.0; // sum of net returns
    std::size_t n_trades = 0;
    bool wlr_infinite = false; // no losing trades
    bool no_trades = false;
};

// truth[i] is the realized direction over trade i's holding window.
MetricsReport compute_metrics(const std::vector<TradeRecord>& trades,
                              const std::vector<TradeDirection>& truth);

struct ConfusionMatrix {
    std::vector<int> labels; // ascending, -1 first when present
    Matrix counts;           // row = true label, column = predicted label
    Matrix normalized;       // each nonempty column scaled to sum 1
};

ConfusionMatrix build_confusion(const std::vector<int>& true_labels,
                                const std::vector<int>& predicted_labels);

// Coin-flip directions at k grid points sampled without replacement, with
// the same entry/exit arithmetic as the protocol.
std::vector<TradeRecord> random_baseline(const MultivariateSeries& test, std::size_t k,
                                         const BacktestConfig& cfg, Rng& rng,
                                         std::size_t close_col = 0);

} // namespace pf
