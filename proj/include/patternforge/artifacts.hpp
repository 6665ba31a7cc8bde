#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "patternforge/backtest.hpp"
#include "patternforge/classifier.hpp"
#include "patternforge/encoder.hpp"
#include "patternforge/matrix.hpp"
#include "patternforge/series.hpp"
#include "patternforge/shapelets.hpp"
#include "patternforge/simpc.hpp"

namespace pf {

inline constexpr int kArtifactSchemaVersion = 1;

// Versioned JSON envelope every stage reads and writes. The canonical form
// (hashing, reproducibility comparisons) excludes created_at; everything
// else round-trips byte-exactly.
struct Artifact {
    int schema_version = kArtifactSchemaVersion;
    std::string kind;
    std::string config_hash;
    std::uint64_t rng_seed = 0;
    std::map<std::string, std::string> upstream; // stage name -> artifact digest
    std::string created_at;                      // informational only
    nlohmann::json payload;
};

std::string canonical_dump(const Artifact& artifact);
std::string artifact_digest(const Artifact& artifact);

void save_artifact(const Artifact& artifact, const std::string& path);
Artifact load_artifact(const std::string& path);

// Payload converters. Doubles are emitted in shortest round-trip form, so
// every value survives save/load bit-exactly.
nlohmann::json matrix_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json series_json(const MultivariateSeries& s);
MultivariateSeries series_from_json(const nlohmann::json& j);

nlohmann::json cluster_set_json(const ClusterSet& cs);
ClusterSet cluster_set_from_json(const nlohmann::json& j);

nlohmann::json encoder_params_json(const EncoderParams& p);
EncoderParams encoder_params_from_json(const nlohmann::json& j);

nlohmann::json shapelet_json(const Shapelet& s);
Shapelet shapelet_from_json(const nlohmann::json& j);

nlohmann::json classifier_json(const PatternClassifier& c);
PatternClassifier classifier_from_json(const nlohmann::json& j);

nlohmann::json trade_json(const TradeRecord& t);
TradeRecord trade_from_json(const nlohmann::json& j);

nlohmann::json metrics_json(const MetricsReport& m);
nlohmann::json confusion_json(const ConfusionMatrix& cm);

} // namespace pf
