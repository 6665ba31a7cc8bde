#include "patternforge/shapelets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "patternforge/log.hpp"
#include "patternforge/parallel.hpp"
#include "patternforge/series.hpp"

namespace pf {

LatentCloud build_latent_cloud(const EncoderParams& params,
                               const std::vector<Segment>& subsequences,
                               const std::vector<int>& labels, const EncoderConfig& cfg) {
    if (subsequences.size() != labels.size())
        throw std::invalid_argument("build_latent_cloud: one label per subsequence required");
    LatentCloud cloud;
    cloud.emb_dim = params.head_w.rows();
    if (subsequences.empty()) return cloud;

    std::vector<std::vector<LatentPoint>> per_sub(subsequences.size());
    parallel_for(subsequences.size(), cfg.threads, [&](std::size_t si) {
        const Matrix interp = prefix_and_interpolate(subsequences[si], cfg);
        for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
            const auto slices = slice_multiscale(interp, cfg.alphas[ai], cfg.slice_stride);
            for (std::size_t wi = 0; wi < slices.size(); ++wi) {
                LatentPoint p;
                p.embedding = encode_forward(params, slices[wi]);
                p.slice = slices[wi];
                p.subsequence = si;
                p.alpha_index = ai;
                p.window_start = wi * cfg.slice_stride;
                p.label = labels[si];
                per_sub[si].push_back(std::move(p));
            }
        }
    });
    for (auto& chunk : per_sub)
        for (auto& p : chunk) cloud.points.push_back(std::move(p));
    return cloud;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

} // namespace

std::vector<CandidateCluster> cluster_candidates(const LatentCloud& cloud, std::size_t g,
                                                 Rng& rng, int max_iter, int threads) {
    const std::size_t n = cloud.points.size();
    if (g < 1) throw std::invalid_argument("cluster_candidates: g must be >= 1");
    if (n < g) throw std::invalid_argument("cluster_candidates: cloud smaller than g");

    // k-means++ seeding on squared distances to the nearest chosen center.
    std::vector<std::vector<double>> centers;
    std::vector<bool> chosen(n, false);
    {
        const std::size_t first = rng.index(n);
        centers.push_back(cloud.points[first].embedding);
        chosen[first] = true;
        std::vector<double> d2(n);
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = sq_dist(cloud.points[i].embedding, centers[0]);
        while (centers.size() < g) {
            std::vector<double> w = d2;
            for (std::size_t i = 0; i < n; ++i)
                if (chosen[i]) w[i] = 0.0;
            double total = 0.0;
            for (double x : w) total += x;
            std::size_t pick;
            if (total > 0.0) {
                pick = rng.weighted_index(w);
                while (w[pick] <= 0.0) pick = (pick + 1) % n;
            } else {
                pick = 0;
                while (chosen[pick]) ++pick; // duplicates left; take the next fresh point
            }
            chosen[pick] = true;
            centers.push_back(cloud.points[pick].embedding);
            for (std::size_t i = 0; i < n; ++i)
                d2[i] = std::min(d2[i], sq_dist(cloud.points[i].embedding, centers.back()));
        }
    }

    std::vector<std::size_t> assign(n, 0);
    std::vector<std::size_t> prev(n, n + 1);
    for (int iter = 0; iter < max_iter; ++iter) {
        parallel_for(n, threads, [&](std::size_t i) {
            std::size_t best = 0;
            double best_d = sq_dist(cloud.points[i].embedding, centers[0]);
            for (std::size_t c = 1; c < g; ++c) {
                const double d = sq_dist(cloud.points[i].embedding, centers[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
        });
        if (assign == prev) break;
        prev = assign;
        for (std::size_t c = 0; c < g; ++c) {
            std::vector<double> mean(cloud.emb_dim, 0.0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (assign[i] != c) continue;
                for (std::size_t k = 0; k < mean.size(); ++k)
                    mean[k] += cloud.points[i].embedding[k];
                ++count;
            }
            if (count == 0) continue; // empty cluster keeps its center
            for (auto& x : mean) x /= double(count);
            centers[c] = std::move(mean);
        }
    }

    std::vector<CandidateCluster> out(g);
    for (std::size_t c = 0; c < g; ++c) out[c].center = centers[c];
    for (std::size_t i = 0; i < n; ++i) out[assign[i]].members.push_back(i);
    for (auto& cl : out) {
        if (cl.members.empty()) continue;
        std::size_t best = cl.members[0];
        double best_d = sq_dist(cloud.points[best].embedding, cl.center);
        for (std::size_t m : cl.members) {
            const double d = sq_dist(cloud.points[m].embedding, cl.center);
            if (d < best_d) {
                best_d = d;
                best = m;
            }
        }
        cl.candidate = best;
    }
    return out;
}

std::vector<Shapelet> score_and_filter(const LatentCloud& cloud,
                                       const std::vector<CandidateCluster>& clusters,
                                       std::size_t p_prime) {
    if (p_prime < 1) throw std::invalid_argument("score_and_filter: p_prime must be >= 1");
    const double threshold = 1.0 / double(p_prime);

    std::vector<Shapelet> retained;
    for (const auto& cl : clusters) {
        if (cl.members.empty()) continue;
        std::map<int, std::size_t> counts;
        for (std::size_t m : cl.members) ++counts[cloud.points[m].label];
        std::size_t top = 0;
        for (const auto& [label, cnt] : counts) top = std::max(top, cnt);
        const double purity = double(top) / double(cl.members.size());
        if (!(purity > threshold)) continue;

        const LatentPoint& p = cloud.points[cl.candidate];
        Shapelet s;
        s.values = p.slice;
        s.subsequence = p.subsequence;
        s.alpha_index = p.alpha_index;
        s.window_start = p.window_start;
        s.cluster_size = cl.members.size();
        s.purity = purity;
        retained.push_back(std::move(s));
    }
    if (retained.empty())
        throw std::runtime_error("score_and_filter: no shapelet cluster passed the purity bar");

    // Utilities compare curves at a common length: everything is resampled to
    // the longest retained window before flattening.
    std::size_t common = 0;
    for (const auto& s : retained) common = std::max(common, s.values.cols());
    std::vector<std::vector<double>> flat(retained.size());
    for (std::size_t i = 0; i < retained.size(); ++i) {
        const Matrix resampled = retained[i].values.cols() == common
                                     ? retained[i].values
                                     : resample_linear(retained[i].values.transposed(), common)
                                           .transposed();
        flat[i] = resampled.data();
    }
    for (std::size_t i = 0; i < retained.size(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < retained.size(); ++j)
            if (j != i) sum += sq_dist(flat[i], flat[j]);
        retained[i].utility = double(retained[i].cluster_size) * sum;
    }

    std::stable_sort(retained.begin(), retained.end(), [](const Shapelet& a, const Shapelet& b) {
        return a.utility > b.utility;
    });
    return retained;
}

} // namespace pf
