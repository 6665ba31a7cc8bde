#pragma once

#include <cstdint>
#include <vector>

#include "patternforge/encoder.hpp"
#include "patternforge/matrix.hpp"
#include "patternforge/rng.hpp"

namespace pf {

// One embedded window of the latent cloud, carrying enough provenance to
// recover its raw curve and its parent's cluster label.
struct LatentPoint {
    std::vector<double> embedding;
    Matrix slice; // channel-major D x L_c raw (pre-embedding) values
    std::size_t subsequence = 0;
    std::size_t alpha_index = 0;
    std::size_t window_start = 0;
    int label = -1;
};

struct LatentCloud {
    std::vector<LatentPoint> points;
    std::size_t emb_dim = 0;
};

// Embeds every (subsequence, alpha, window) slice and tags it with the
// parent subsequence's cluster label.
LatentCloud build_latent_cloud(const EncoderParams& params,
                               const std::vector<Segment>& subsequences,
                               const std::vector<int>& labels, const EncoderConfig& cfg);

struct CandidateCluster {
    std::vector<std::size_t> members; // indices into the cloud
    std::vector<double> center;
    std::size_t candidate = 0; // member nearest to the center
};

// Euclidean K-means (k-means++ init, at most max_iter sweeps) over the
// embeddings; assignment ties and center ties go to the lowest index. A
// cluster left empty keeps its center and emits no candidate.
std::vector<CandidateCluster> cluster_candidates(const LatentCloud& cloud, std::size_t g,
                                                 Rng& rng, int max_iter = 50, int threads = 1);

struct Shapelet {
    Matrix values; // channel-major D x L_c, raw curve of the winning window
    std::size_t subsequence = 0;
    std::size_t alpha_index = 0;
    std::size_t window_start = 0;
    std::size_t cluster_size = 0;
    double purity = 0.0;
    double utility = 0.0;
};

// Purity = top label share per cluster; strictly above 1/p_prime survives.
// Utility U_c = |C_c| * sum over other retained curves of the squared
// Euclidean gap, computed after resampling every retained curve to the
// longest retained length (the stored values stay raw). Sorted by utility
// descending.
std::vector<Shapelet> score_and_filter(const LatentCloud& cloud,
                                       const std::vector<CandidateCluster>& clusters,
                                       std::size_t p_prime);

} // namespace pf
