#pragma once

#include <cstdint>
#include <vector>

#include "patternforge/dtw.hpp"
#include "patternforge/matrix.hpp"
#include "patternforge/rng.hpp"
#include "patternforge/series.hpp"

namespace pf {

struct SimpcConfig {
    std::size_t P = 8;              // target cluster count
    std::size_t m = 6;              // fixed prototype seeds
    double delta = 2.3;             // DTW assignment threshold (at D=3)
    std::size_t kappa = 40;         // minimum cluster size
    std::size_t L_min = 18;
    std::size_t L_max = 22;
    int iterations = 5;
    std::size_t ref_len = 20;       // barycenter length
    std::size_t stride_unassigned = 1;
    bool dtw_normalize = false;     // divide DTW cost by path length before
                                    // comparing with delta (experimentation)
    int threads = 1;

    void validate() const;
};

struct ClusterAssignment {
    std::size_t start = 0;
    std::size_t length = 0;
};

struct ClusterSet {
    std::vector<Matrix> centroids;  // ref_len x D, per-column min-max scaled
    std::vector<std::vector<ClusterAssignment>> members;
    std::size_t p_prime = 0;
};

struct SimpcIterationDiag {
    std::vector<std::size_t> cluster_sizes;
    std::size_t dropped = 0;
    std::size_t replenished = 0;
};

struct SimpcDiagnostics {
    std::vector<SimpcIterationDiag> iterations;
    double avg_pairwise_distance = 0.0; // normalized by sqrt(D)
    double min_pairwise_distance = 0.0; // normalized by sqrt(D)
};

struct SimpcResult {
    ClusterSet clusters;
    SimpcDiagnostics diagnostics;
};

// The clustering threshold is quoted for 3-channel inputs; other channel
// counts use the quoted per-dimension values (delta/sqrt(3) for 1,
// delta/sqrt(2) for 2) and a sqrt(D/3) extrapolation above 3. The 2-channel
// entry follows the quoted table even though it does not sit exactly on
// the sqrt(D/3) curve.
double scale_delta(double delta_base, std::size_t dims);

// K-means++-style seeding over normalized length-L_max windows: each
// remaining slot is drawn with probability d_s / sum(d), where d_s is the
// window's min DTW distance to the centroids chosen so far. Seeds are kept
// verbatim and never redrawn; excluded_starts (and already-drawn starts)
// carry zero weight.
std::vector<Matrix> init_centroids(const MultivariateSeries& series_smoothed,
                                   const std::vector<Matrix>& seeds, const SimpcConfig& cfg,
                                   Rng& rng,
                                   const std::vector<std::size_t>& excluded_starts = {});

// One greedy segmentation sweep: at each t the best (length, centroid) pair
// is chosen over L_min..L_max and all centroids; a window within the scaled
// threshold claims [t, t+len) and the scan jumps past it, otherwise the scan
// advances by stride_unassigned.
std::vector<std::vector<ClusterAssignment>> greedy_assign_pass(
    const MultivariateSeries& series_smoothed, const std::vector<Matrix>& centroids,
    const SimpcConfig& cfg);

struct UpdateResult {
    std::vector<Matrix> centroids;
    std::vector<std::vector<ClusterAssignment>> members; // aligned with centroids
    std::size_t dropped = 0;
    std::size_t replenished = 0;
};

// Recompresses clusters holding at least kappa members into min-max scaled
// DBA barycenters and discards the rest; when replenish is set, the lost
// slots are refilled by init_centroids with the survivors as fixed seeds and
// all assigned starts excluded from the draw.
UpdateResult update_centroids(const MultivariateSeries& series_smoothed,
                              const std::vector<std::vector<ClusterAssignment>>& assignments,
                              const SimpcConfig& cfg, Rng& rng, bool replenish);

// Closest-first agglomerative merging of centroids within the scaled
// threshold; merged pairs pool their members and their curves are combined
// via DBA, then rescaled.
ClusterSet merge_centroids(const std::vector<Matrix>& centroids,
                           const std::vector<std::vector<ClusterAssignment>>& members,
                           const SimpcConfig& cfg, std::size_t dims_for_delta);

// Full algorithm: seeding, `iterations` rounds of greedy assignment and
// centroid update (replenishment skipped on the last round so every final
// centroid carries members), then threshold merging.
SimpcResult run_simpc(const MultivariateSeries& series_smoothed, const std::vector<Matrix>& seeds,
                      const SimpcConfig& cfg, Rng& rng);

// Distance used for threshold comparisons; divides out the path length when
// normalize is set.
double assignment_distance(const Matrix& a, const Matrix& b, bool normalize);

} // namespace pf
