#include "patternforge/simpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "patternforge/log.hpp"
#include "patternforge/parallel.hpp"

namespace pf {

void SimpcConfig::validate() const {
    if (m > P) throw std::invalid_argument("simpc: m must not exceed P");
    if (L_min > L_max) throw std::invalid_argument("simpc: L_min must not exceed L_max");
    if (L_min < 2) throw std::invalid_argument("simpc: L_min must be >= 2");
    if (!(delta > 0.0)) throw std::invalid_argument("simpc: delta must be > 0");
    if (kappa < 1) throw std::invalid_argument("simpc: kappa must be >= 1");
    if (iterations < 1) throw std::invalid_argument("simpc: iterations must be >= 1");
    if (ref_len < 2) throw std::invalid_argument("simpc: ref_len must be >= 2");
    if (stride_unassigned < 1) throw std::invalid_argument("simpc: stride must be >= 1");
    if (P < 1) throw std::invalid_argument("simpc: P must be >= 1");
}

double scale_delta(double delta_base, std::size_t dims) {
    switch (dims) {
        case 0: throw std::invalid_argument("scale_delta: dimension must be >= 1");
        case 1: return delta_base / std::sqrt(3.0);
        case 2: return delta_base / std::sqrt(2.0);
        case 3: return delta_base;
        default: return delta_base * std::sqrt(static_cast<double>(dims) / 3.0);
    }
}

double assignment_distance(const Matrix& a, const Matrix& b, bool normalize) {
    if (!normalize) return dtw_cost(a, b);
    Alignment al = dtw_distance(a, b);
    return al.cost / static_cast<double>(al.path.size());
}

namespace {

Matrix normalized_window(const MultivariateSeries& series, std::size_t start, std::size_t len) {
    return minmax_normalize(series.values.slice_rows(start, len));
}

} // namespace

std::vector<Matrix> init_centroids(const MultivariateSeries& series_smoothed,
                                   const std::vector<Matrix>& seeds, const SimpcConfig& cfg,
                                   Rng& rng, const std::vector<std::size_t>& excluded_starts) {
    const std::size_t T = series_smoothed.length();
    if (T < cfg.L_max) throw std::invalid_argument("init_centroids: series shorter than L_max");
    if (seeds.size() > cfg.P)
        throw std::invalid_argument("init_centroids: more seeds than cluster slots");

    std::vector<Matrix> centroids = seeds;
    if (centroids.size() == cfg.P) return centroids;

    const std::size_t n_starts = T - cfg.L_max + 1;
    std::vector<Matrix> windows(n_starts);
    for (std::size_t s = 0; s < n_starts; ++s)
        windows[s] = normalized_window(series_smoothed, s, cfg.L_max);

    std::vector<bool> excluded(n_starts, false);
    for (std::size_t s : excluded_starts)
        if (s < n_starts) excluded[s] = true;

    // Min distance of each candidate window to the current centroid set,
    // maintained incrementally as draws are appended.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n_starts, inf);
    auto absorb = [&](const Matrix& c) {
        parallel_for(n_starts, cfg.threads, [&](std::size_t s) {
            if (excluded[s]) return;
            dist[s] = std::min(dist[s], dtw_cost(windows[s], c));
        });
    };
    for (const auto& c : centroids) absorb(c);

    while (centroids.size() < cfg.P) {
        std::vector<double> weights(n_starts, 0.0);
        double total = 0.0;
        for (std::size_t s = 0; s < n_starts; ++s) {
            if (excluded[s]) continue;
            double w = centroids.empty() ? 1.0 : dist[s];
            weights[s] = w;
            total += w;
        }

        std::size_t pick;
        if (total > 0.0) {
            pick = rng.weighted_index(weights);
        } else {
            // Every candidate ties at zero; draw uniformly among the
            // non-excluded starts.
            std::vector<std::size_t> open;
            for (std::size_t s = 0; s < n_starts; ++s)
                if (!excluded[s]) open.push_back(s);
            if (open.empty())
                throw std::runtime_error("init_centroids: no candidate starts remain");
            pick = open[rng.index(open.size())];
        }

        excluded[pick] = true;
        centroids.push_back(windows[pick]);
        absorb(centroids.back());
    }
    return centroids;
}

std::vector<std::vector<ClusterAssignment>> greedy_assign_pass(
    const MultivariateSeries& series_smoothed, const std::vector<Matrix>& centroids,
    const SimpcConfig& cfg) {
    if (centroids.empty()) throw std::invalid_argument("greedy_assign_pass: no centroids");
    const std::size_t T = series_smoothed.length();
    const double delta = scale_delta(cfg.delta, series_smoothed.dim());

    std::vector<std::vector<ClusterAssignment>> out(centroids.size());
    std::size_t t = 0;
    while (t + cfg.L_min <= T) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_c = 0, best_len = 0;
        for (std::size_t len = cfg.L_min; len <= cfg.L_max && t + len <= T; ++len) {
            Matrix window = normalized_window(series_smoothed, t, len);
            for (std::size_t c = 0; c < centroids.size(); ++c) {
                double d = assignment_distance(window, centroids[c], cfg.dtw_normalize);
                if (d < best) {
                    best = d;
                    best_c = c;
                    best_len = len;
                }
            }
        }
        if (best <= delta) {
            out[best_c].push_back({t, best_len});
            t += best_len;
        } else {
            t += cfg.stride_unassigned;
        }
    }
    return out;
}

UpdateResult update_centroids(const MultivariateSeries& series_smoothed,
                              const std::vector<std::vector<ClusterAssignment>>& assignments,
                              const SimpcConfig& cfg, Rng& rng, bool replenish) {
    UpdateResult out;
    std::vector<std::size_t> taken_starts;
    for (const auto& cluster : assignments)
        for (const auto& a : cluster) taken_starts.push_back(a.start);

    for (const auto& cluster : assignments) {
        if (cluster.size() < cfg.kappa) {
            ++out.dropped;
            continue;
        }
        std::vector<Segment> members;
        members.reserve(cluster.size());
        for (const auto& a : cluster) {
            Segment s;
            s.source_start = a.start;
            s.values = normalized_window(series_smoothed, a.start, a.length);
            s.normalized = true;
            members.push_back(std::move(s));
        }
        Barycenter bc = dba_barycenter(members, cfg.ref_len, 10, 1e-4, cfg.threads);
        out.centroids.push_back(minmax_normalize(bc.values));
        out.members.push_back(cluster);
    }

    if (replenish && out.centroids.size() < cfg.P) {
        std::size_t before = out.centroids.size();
        std::vector<Matrix> refilled =
            init_centroids(series_smoothed, out.centroids, cfg, rng, taken_starts);
        out.replenished = refilled.size() - before;
        out.centroids = std::move(refilled);
        out.members.resize(out.centroids.size());
    }
    return out;
}

ClusterSet merge_centroids(const std::vector<Matrix>& centroids,
                           const std::vector<std::vector<ClusterAssignment>>& members,
                           const SimpcConfig& cfg, std::size_t dims_for_delta) {
    if (centroids.size() != members.size())
        throw std::invalid_argument("merge_centroids: centroid/member count mismatch");
    const double delta = scale_delta(cfg.delta, dims_for_delta);

    ClusterSet out;
    out.centroids = centroids;
    out.members = members;

    while (out.centroids.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < out.centroids.size(); ++i)
            for (std::size_t j = i + 1; j < out.centroids.size(); ++j) {
                double d = assignment_distance(out.centroids[i], out.centroids[j],
                                               cfg.dtw_normalize);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        if (best > delta) break;

        Segment a, b;
        a.values = out.centroids[bi];
        a.normalized = true;
        b.values = out.centroids[bj];
        b.normalized = true;
        Barycenter bc = dba_barycenter({a, b}, cfg.ref_len, 10, 1e-4, cfg.threads);

        out.centroids[bi] = minmax_normalize(bc.values);
        out.members[bi].insert(out.members[bi].end(), out.members[bj].begin(),
                               out.members[bj].end());
        std::sort(out.members[bi].begin(), out.members[bi].end(),
                  [](const ClusterAssignment& x, const ClusterAssignment& y) {
                      return x.start < y.start;
                  });
        out.centroids.erase(out.centroids.begin() + static_cast<std::ptrdiff_t>(bj));
        out.members.erase(out.members.begin() + static_cast<std::ptrdiff_t>(bj));
    }

    out.p_prime = out.centroids.size();
    return out;
}

SimpcResult run_simpc(const MultivariateSeries& series_smoothed, const std::vector<Matrix>& seeds,
                      const SimpcConfig& cfg, Rng& rng) {
    cfg.validate();
    if (series_smoothed.length() < cfg.L_max)
        throw std::invalid_argument("run_simpc: series shorter than L_max");
    if (seeds.size() != cfg.m)
        throw std::invalid_argument("run_simpc: seed count does not match m");

    SimpcResult result;
    std::vector<Matrix> centroids = init_centroids(series_smoothed, seeds, cfg, rng);
    std::vector<std::vector<ClusterAssignment>> assignments;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        assignments = greedy_assign_pass(series_smoothed, centroids, cfg);

        SimpcIterationDiag diag;
        for (const auto& cluster : assignments) diag.cluster_sizes.push_back(cluster.size());

        bool last = iter + 1 == cfg.iterations;
        UpdateResult upd = update_centroids(series_smoothed, assignments, cfg, rng, !last);
        diag.dropped = upd.dropped;
        diag.replenished = upd.replenished;
        result.diagnostics.iterations.push_back(std::move(diag));

        centroids = std::move(upd.centroids);
        assignments = std::move(upd.members);
        if (centroids.empty()) {
            log::warn("simpc: every cluster fell below kappa; no centroids remain");
            break;
        }
    }

    result.clusters = merge_centroids(centroids, assignments, cfg, series_smoothed.dim());

    const auto& cs = result.clusters.centroids;
    if (cs.size() > 1) {
        double sum = 0.0, mn = std::numeric_limits<double>::infinity();
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < cs.size(); ++i)
            for (std::size_t j = i + 1; j < cs.size(); ++j) {
                double d = dtw_cost(cs[i], cs[j]) / std::sqrt(static_cast<double>(cs[i].cols()));
                sum += d;
                mn = std::min(mn, d);
                ++pairs;
            }
        result.diagnostics.avg_pairwise_distance = sum / static_cast<double>(pairs);
        result.diagnostics.min_pairwise_distance = mn;
    }
    return result;
}

} // namespace pf
