#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "patternforge/config.hpp"
#include "patternforge/matrix.hpp"
#include "patternforge/series.hpp"
#include "patternforge/simpc.hpp"

namespace pf {

// A stage's input artifact is missing, was produced under a different config
// hash or seed, or disagrees with a co-loaded artifact about a shared
// upstream. Rerunning the upstream stages named in the message clears it.
struct StaleInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stage names in execution order. run/--stage accept exactly these.
const std::vector<std::string>& pipeline_stages();

// Direct dependencies of a stage (artifact kinds it loads).
const std::vector<std::string>& stage_dependencies(const std::string& stage);

// out_dir/<stage>.json
std::string stage_artifact_path(const PipelineConfig& cfg, const std::string& stage);

// Executes one stage: loads its dependency artifacts (failing loudly when
// any was produced under a different config hash or seed, or when two loaded
// artifacts disagree about a shared upstream), computes, and writes the
// stage artifact. Unknown stage names throw std::invalid_argument.
void run_stage(const PipelineConfig& cfg, const std::string& stage);

// All stages in order.
void run_pipeline(const PipelineConfig& cfg);

// Reduces an OHLCV panel to the model channels {close, volume, rsi} and
// drops the RSI warm-up rows.
MultivariateSeries ingest_series(const MultivariateSeries& ohlcv, int rsi_period);

// Backtest-side prefix handling: a raw trailing window resampled to
// round(gamma * L) rows and min-max scaled, mirroring the training-side
// prefix transform at the observed fraction of the full pattern span.
Matrix inference_prefix(const Matrix& raw_window, const EncoderConfig& cfg);

// Cluster assignment rule applied to one test window (min-max scaled, then
// nearest centroid when its distance clears the scaled threshold, else -1).
int simpc_truth_label(const Matrix& window, const ClusterSet& clusters, const SimpcConfig& cfg);

// Generates the bundled-style synthetic OHLCV dataset from cfg.synth_*.
void write_synth_dataset(const PipelineConfig& cfg, const std::string& csv_path);

} // namespace pf
