#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "patternforge/matrix.hpp"
#include "patternforge/series.hpp"

namespace pf {

// Warping path between two sequences plus the accumulated cost it realizes.
// The path runs from (0,0) to (rows(a)-1, rows(b)-1) with steps in
// {(+1,0), (0,+1), (+1,+1)}.
struct Alignment {
    std::vector<std::pair<std::size_t, std::size_t>> path;
    double cost = 0.0;
};

// Dependent multivariate DTW: the local cost at (i,j) is the Euclidean norm
// of a_i - b_j over all D channels jointly, and the returned cost is the raw
// accumulated sum along the optimal path (no path-length normalization).
// Ties during backtracking prefer diagonal, then vertical (i-1,j), then
// horizontal (i,j-1), so paths are deterministic.
Alignment dtw_distance(const Matrix& a, const Matrix& b);

// Cost-only variant with a rolling DP buffer; equals dtw_distance(a,b).cost.
double dtw_cost(const Matrix& a, const Matrix& b);

struct Barycenter {
    Matrix values;
    double objective = 0.0;
    int iterations_used = 0;
    std::vector<double> objective_trace;
};

// DTW barycenter averaging. Starts from the medoid resampled to ref_len,
// repeatedly aligns every member to the current barycenter and moves each
// barycenter frame toward the mean of the member frames aligned to it,
// keeping the old frame whenever the mean would raise that frame's aligned
// cost (the mean minimizes squared norms, not the plain norms accumulated
// here, so an unconditional update could push the objective up). Stops when
// the relative objective improvement drops below tol or after max_iter
// update rounds. The objective (sum of member DTW costs) never increases.
Barycenter dba_barycenter(const std::vector<Segment>& members, std::size_t ref_len,
                          int max_iter = 10, double tol = 1e-4, int threads = 1);

// Warps a member's companion channels onto the reference timeline of a price
// alignment: output row j is the mean of companion rows i with (i,j) on the
// path, i.e. multiplication by the row-normalized warping matrix.
Matrix warp_align_companions(const Alignment& price_alignment, const Matrix& companions,
                             std::size_t ref_len);

} // namespace pf
