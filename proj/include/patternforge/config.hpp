#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patternforge/backtest.hpp"
#include "patternforge/classifier.hpp"
#include "patternforge/dates.hpp"
#include "patternforge/encoder.hpp"
#include "patternforge/simpc.hpp"

namespace pf {

// Everything the pipeline needs, addressable through flat dotted keys
// (e.g. "simpc.delta"). Defaults follow the reference experimental setup.
struct PipelineConfig {
    std::string data_path = "data/synth_daily.csv";
    std::string out_dir = "artifacts";
    int rsi_period = 14;

    std::uint64_t rng_seed = 42;
    int threads = 1;

    // Defaults cover the bundled synthetic dataset end to end.
    Date train_start{2018, 1, 1};
    Date train_end{2027, 12, 31};
    Date valid_start{2028, 1, 1};
    Date valid_end{2028, 6, 30};
    Date test_start{2028, 7, 1};
    Date test_end{2032, 12, 31};

    double smooth_bandwidth = 0.3;

    SimpcConfig simpc;
    EncoderConfig encoder;
    std::size_t shapelet_g = 10;
    ClassifierConfig classifier;
    double eval_fraction = 0.2; // tail share of training subsequences held
                                // out for the K-S filter
    bool ks_raw_samples = false;

    BacktestConfig backtest;
    double top_x = 100.0; // confidence filter percentage

    std::size_t synth_days = 5400;
    int synth_families = 3;
    std::uint64_t synth_seed = 7;

    void validate() const;
};

// Parses the flat key = value format. Unknown keys, bad values, and bad
// syntax all throw std::invalid_argument naming the key and line.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

// Sets one dotted key on an existing config; same validation as parsing.
void set_config_key(PipelineConfig& cfg, const std::string& key, const std::string& value);

// Canonical text form: every key once, fixed order, shortest round-trip
// number formatting. emit(parse(emit(c))) == emit(c).
std::string emit_config(const PipelineConfig& cfg);

// Hash of the canonical form minus every backtest.* key, so protocol knobs
// can change without invalidating upstream artifacts.
std::string config_hash(const PipelineConfig& cfg);

// All recognized keys in canonical order (for docs and error messages).
std::vector<std::string> config_key_names();

} // namespace pf
