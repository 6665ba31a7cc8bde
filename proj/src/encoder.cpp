#include "patternforge/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "patternforge/dtw.hpp"
#include "patternforge/log.hpp"
#include "patternforge/parallel.hpp"

namespace pf {

namespace {

constexpr double kLeakySlope = 0.01;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

} // namespace

void EncoderConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("encoder config: gamma must be in (0,1)");
    if (L < 2) throw std::invalid_argument("encoder config: L must be >= 2");
    if (alphas.empty()) throw std::invalid_argument("encoder config: alphas must be non-empty");
    for (double a : alphas)
        if (!(a > 0.0 && a < 1.0))
            throw std::invalid_argument("encoder config: every alpha must be in (0,1)");
    if (slice_stride < 1) throw std::invalid_argument("encoder config: slice_stride must be >= 1");
    if (emb_dim < 1 || conv_channels < 1 || kernel_size < 1 || dilations.empty())
        throw std::invalid_argument("encoder config: degenerate architecture");
    if (!(epsilon > 0.0)) throw std::invalid_argument("encoder config: epsilon must be > 0");
    if (!(soft_margin > 0.0)) throw std::invalid_argument("encoder config: margin must be > 0");
    if (!(lr > 0.0)) throw std::invalid_argument("encoder config: lr must be > 0");
    if (epochs < 0) throw std::invalid_argument("encoder config: epochs must be >= 0");
    if (threads < 1) throw std::invalid_argument("encoder config: threads must be >= 1");
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) {
        n += b.w.rows() * b.w.cols() + b.bias.size();
        n += b.proj.rows() * b.proj.cols();
    }
    n += head_w.rows() * head_w.cols() + head_b.size();
    return n;
}

EncoderParams init_encoder_params(const EncoderConfig& cfg, std::size_t input_dim, Rng& rng) {
    if (input_dim < 1) throw std::invalid_argument("init_encoder_params: input_dim must be >= 1");
    EncoderParams p;
    p.input_dim = input_dim;
    std::size_t in_ch = input_dim;
    for (std::size_t d : cfg.dilations) {
        ConvBlock b;
        b.in_ch = in_ch;
        b.out_ch = cfg.conv_channels;
        b.kernel = cfg.kernel_size;
        b.dilation = d;
        const double bound = 1.0 / std::sqrt(double(in_ch * cfg.kernel_size));
        b.w = Matrix(b.out_ch, b.in_ch * b.kernel);
        for (auto& x : b.w.data()) x = rng.uniform(-bound, bound);
        b.bias.resize(b.out_ch);
        for (auto& x : b.bias) x = rng.uniform(-bound, bound);
        if (b.in_ch != b.out_ch) {
            const double pbound = 1.0 / std::sqrt(double(in_ch));
            b.proj = Matrix(b.out_ch, b.in_ch);
            for (auto& x : b.proj.data()) x = rng.uniform(-pbound, pbound);
        }
        p.blocks.push_back(std::move(b));
        in_ch = cfg.conv_channels;
    }
    const double hbound = 1.0 / std::sqrt(double(cfg.conv_channels));
    p.head_w = Matrix(cfg.emb_dim, cfg.conv_channels);
    for (auto& x : p.head_w.data()) x = rng.uniform(-hbound, hbound);
    p.head_b.resize(cfg.emb_dim);
    for (auto& x : p.head_b) x = rng.uniform(-hbound, hbound);
    return p;
}

EncoderParams zero_like(const EncoderParams& params) {
    EncoderParams z = params;
    for (auto& b : z.blocks) {
        std::fill(b.w.data().begin(), b.w.data().end(), 0.0);
        std::fill(b.bias.begin(), b.bias.end(), 0.0);
        std::fill(b.proj.data().begin(), b.proj.data().end(), 0.0);
    }
    std::fill(z.head_w.data().begin(), z.head_w.data().end(), 0.0);
    std::fill(z.head_b.begin(), z.head_b.end(), 0.0);
    return z;
}

void visit_params(EncoderParams& p, const std::function<void(double&)>& fn) {
    for (auto& b : p.blocks) {
        for (auto& x : b.w.data()) fn(x);
        for (auto& x : b.bias) fn(x);
        for (auto& x : b.proj.data()) fn(x);
    }
    for (auto& x : p.head_w.data()) fn(x);
    for (auto& x : p.head_b) fn(x);
}

void visit_params(const EncoderParams& p, const std::function<void(double)>& fn) {
    for (const auto& b : p.blocks) {
        for (double x : b.w.data()) fn(x);
        for (double x : b.bias) fn(x);
        for (double x : b.proj.data()) fn(x);
    }
    for (double x : p.head_w.data()) fn(x);
    for (double x : p.head_b) fn(x);
}

Matrix prefix_and_interpolate(const Segment& subsequence, const EncoderConfig& cfg) {
    const std::size_t len = subsequence.length();
    if (len < 2) throw std::invalid_argument("prefix_and_interpolate: segment too short");
    std::size_t take = static_cast<std::size_t>(std::ceil(cfg.gamma * double(len)));
    take = std::min(take, len);
    const Matrix prefix = subsequence.values.slice_rows(0, take);
    return minmax_normalize(resample_linear(prefix, cfg.L));
}

std::vector<Matrix> slice_multiscale(const Matrix& interpolated, double alpha,
                                     std::size_t stride) {
    const std::size_t L = interpolated.rows();
    const std::size_t win = static_cast<std::size_t>(std::lround(alpha * double(L)));
    if (win < 2) throw std::invalid_argument("slice_multiscale: window below 2 steps");
    if (win > L) throw std::invalid_argument("slice_multiscale: window exceeds input length");
    if (stride < 1) throw std::invalid_argument("slice_multiscale: stride must be >= 1");
    std::vector<Matrix> out;
    for (std::size_t s = 0; s + win <= L; s += stride)
        out.push_back(interpolated.slice_rows(s, win).transposed());
    return out;
}

namespace {

Matrix to_time_major(const Matrix& channel_major) { return channel_major.transposed(); }

} // namespace

KMeans2Result dtw_kmeans2(const std::vector<Matrix>& segments, Rng& rng, int max_iter,
                          int threads) {
    const std::size_t n = segments.size();
    if (n < 2) throw std::invalid_argument("dtw_kmeans2: need at least 2 segments");

    std::vector<Matrix> tm(n);
    for (std::size_t i = 0; i < n; ++i) tm[i] = to_time_major(segments[i]);

    // K-means++-style seeding on DTW distances to the first pick.
    const std::size_t first = rng.index(n);
    std::vector<double> dist_to_first(n);
    parallel_for(n, threads, [&](std::size_t i) {
        dist_to_first[i] = i == first ? 0.0 : dtw_cost(tm[i], tm[first]);
    });
    std::vector<double> weights = dist_to_first;
    weights[first] = 0.0;
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::size_t second;
    if (total > 0.0) {
        second = rng.weighted_index(weights);
        while (weights[second] <= 0.0) second = (second + 1) % n; // skip zero-weight fallback hits
    } else {
        second = (first + 1 + rng.index(n - 1)) % n;
    }

    std::array<Matrix, 2> centroids{tm[first], tm[second]};
    std::vector<int> assign(n, -1);
    int used = 0;
    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<int> next(n);
        parallel_for(n, threads, [&](std::size_t i) {
            const double d0 = dtw_cost(tm[i], centroids[0]);
            const double d1 = dtw_cost(tm[i], centroids[1]);
            next[i] = d1 < d0 ? 1 : 0;
        });
        ++used;
        // Repair an emptied side with the point farthest from the survivor.
        for (int side = 0; side < 2; ++side) {
            if (std::count(next.begin(), next.end(), side) > 0) continue;
            const int other = 1 - side;
            std::vector<double> d(n);
            parallel_for(n, threads, [&](std::size_t i) { d[i] = dtw_cost(tm[i], centroids[other]); });
            std::size_t far = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (d[i] > d[far]) far = i;
            next[far] = side;
        }
        if (next == assign) break;
        assign = next;
        for (int side = 0; side < 2; ++side) {
            std::vector<Segment> members;
            for (std::size_t i = 0; i < n; ++i)
                if (assign[i] == side) {
                    Segment s;
                    s.values = tm[i];
                    members.push_back(std::move(s));
                }
            centroids[side] = dba_barycenter(members, tm[0].rows(), 10, 1e-4, threads).values;
        }
    }

    KMeans2Result out;
    out.iterations_used = used;
    for (std::size_t i = 0; i < n; ++i)
        out.clusters[assign[i] == 0 ? 0 : 1].push_back(i);
    out.centroids[0] = centroids[0].transposed();
    out.centroids[1] = centroids[1].transposed();
    return out;
}

std::vector<TripletBatch> select_triplets(const std::vector<Matrix>& segments,
                                          const KMeans2Result& split, int threads) {
    std::vector<Matrix> tm(segments.size());
    for (std::size_t i = 0; i < segments.size(); ++i) tm[i] = to_time_major(segments[i]);

    auto pairwise = [&](const std::vector<std::size_t>& ids) {
        Matrix d(ids.size(), ids.size(), 0.0);
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t a = 0; a < ids.size(); ++a)
            for (std::size_t b = a + 1; b < ids.size(); ++b) pairs.emplace_back(a, b);
        std::vector<double> cost(pairs.size());
        parallel_for(pairs.size(), threads, [&](std::size_t p) {
            cost[p] = dtw_cost(tm[ids[pairs[p].first]], tm[ids[pairs[p].second]]);
        });
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            d(pairs[p].first, pairs[p].second) = cost[p];
            d(pairs[p].second, pairs[p].first) = cost[p];
        }
        return d;
    };

    std::vector<TripletBatch> out;
    for (int side = 0; side < 2; ++side) {
        const auto& own = split.clusters[side];
        const auto& other = split.clusters[1 - side];
        if (own.empty()) {
            log::debug("select_triplets: empty cluster, skipping its triplet");
            continue;
        }
        if (own.size() < 2 || other.empty()) {
            log::debug("select_triplets: cluster cannot supply positives and negatives, skipped");
            continue;
        }

        const Matrix d_own = pairwise(own);
        std::size_t medoid_pos = 0;
        double best_sum = 1e300;
        for (std::size_t a = 0; a < own.size(); ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < own.size(); ++b) s += d_own(a, b);
            if (s < best_sum) {
                best_sum = s;
                medoid_pos = a;
            }
        }

        TripletBatch batch;
        batch.anchor = own[medoid_pos];

        const std::size_t n_pos =
            std::min<std::size_t>((own.size() + 4) / 5, own.size() - 1);
        std::vector<std::pair<double, std::size_t>> near;
        for (std::size_t a = 0; a < own.size(); ++a)
            if (a != medoid_pos) near.push_back({d_own(medoid_pos, a), own[a]});
        std::sort(near.begin(), near.end());
        for (std::size_t k = 0; k < n_pos; ++k) batch.positives.push_back(near[k].second);

        const std::size_t n_neg = (other.size() + 4) / 5;
        std::vector<double> d_neg(other.size());
        parallel_for(other.size(), threads, [&](std::size_t j) {
            d_neg[j] = dtw_cost(tm[batch.anchor], tm[other[j]]);
        });
        std::vector<std::pair<double, std::size_t>> far;
        for (std::size_t j = 0; j < other.size(); ++j) far.push_back({d_neg[j], other[j]});
        std::sort(far.begin(), far.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t k = 0; k < n_neg; ++k) batch.negatives.push_back(far[k].second);

        out.push_back(std::move(batch));
    }
    return out;
}

namespace {

// y[o][t] = bias[o] + sum_{i,k} w[o][i*K+k] * x[i][t - (K-1-k)*dil], with the
// out-of-range history reading as zero (causal left padding).
Matrix causal_conv(const ConvBlock& b, const Matrix& x) {
    const std::size_t len = x.cols();
    Matrix y(b.out_ch, len);
    for (std::size_t o = 0; o < b.out_ch; ++o) {
        for (std::size_t t = 0; t < len; ++t) {
            double acc = b.bias[o];
            for (std::size_t i = 0; i < b.in_ch; ++i) {
                for (std::size_t k = 0; k < b.kernel; ++k) {
                    const std::size_t back = (b.kernel - 1 - k) * b.dilation;
                    if (back > t) continue;
                    acc += b.w(o, i * b.kernel + k) * x(i, t - back);
                }
            }
            y(o, t) = acc;
        }
    }
    return y;
}

Matrix block_forward(const ConvBlock& b, const Matrix& x, Matrix& preact) {
    preact = causal_conv(b, x);
    const std::size_t len = x.cols();
    Matrix out(b.out_ch, len);
    for (std::size_t o = 0; o < b.out_ch; ++o)
        for (std::size_t t = 0; t < len; ++t) {
            const double v = preact(o, t);
            out(o, t) = v > 0.0 ? v : kLeakySlope * v;
        }
    if (b.proj.empty()) {
        for (std::size_t o = 0; o < b.out_ch; ++o)
            for (std::size_t t = 0; t < len; ++t) out(o, t) += x(o, t);
    } else {
        for (std::size_t o = 0; o < b.out_ch; ++o)
            for (std::size_t t = 0; t < len; ++t) {
                double acc = 0.0;
                for (std::size_t i = 0; i < b.in_ch; ++i) acc += b.proj(o, i) * x(i, t);
                out(o, t) += acc;
            }
    }
    return out;
}

} // namespace

std::vector<double> encode_forward(const EncoderParams& params, const Matrix& segment,
                                   ForwardTrace& trace) {
    if (segment.rows() != params.input_dim)
        throw std::invalid_argument("encode_forward: wrong channel count");
    const std::size_t kernel = params.blocks.empty() ? 1 : params.blocks.front().kernel;
    if (segment.cols() < kernel)
        throw std::invalid_argument("encode_forward: segment shorter than the kernel");

    trace.inputs.clear();
    trace.preact.clear();
    Matrix x = segment;
    for (const auto& b : params.blocks) {
        trace.inputs.push_back(x);
        Matrix pre;
        Matrix out = block_forward(b, x, pre);
        trace.preact.push_back(std::move(pre));
        x = std::move(out);
    }

    const std::size_t ch = x.rows();
    trace.pool_argmax.assign(ch, 0);
    trace.pooled.assign(ch, 0.0);
    for (std::size_t o = 0; o < ch; ++o) {
        std::size_t best = 0;
        for (std::size_t t = 1; t < x.cols(); ++t)
            if (x(o, t) > x(o, best)) best = t;
        trace.pool_argmax[o] = best;
        trace.pooled[o] = x(o, best);
    }

    std::vector<double> z(params.head_w.rows());
    for (std::size_t e = 0; e < z.size(); ++e) {
        double acc = params.head_b[e];
        for (std::size_t c = 0; c < ch; ++c) acc += params.head_w(e, c) * trace.pooled[c];
        z[e] = acc;
    }
    return z;
}

std::vector<double> encode_forward(const EncoderParams& params, const Matrix& segment) {
    ForwardTrace trace;
    return encode_forward(params, segment, trace);
}

void encode_backward(const EncoderParams& params, const ForwardTrace& trace,
                     const std::vector<double>& d_embedding, EncoderGrads& grads) {
    const std::size_t ch = trace.pooled.size();

    std::vector<double> d_pooled(ch, 0.0);
    for (std::size_t e = 0; e < d_embedding.size(); ++e) {
        grads.head_b[e] += d_embedding[e];
        for (std::size_t c = 0; c < ch; ++c) {
            grads.head_w(e, c) += d_embedding[e] * trace.pooled[c];
            d_pooled[c] += params.head_w(e, c) * d_embedding[e];
        }
    }

    const std::size_t len = trace.inputs.front().cols();
    Matrix d_out(ch, len, 0.0);
    for (std::size_t o = 0; o < ch; ++o) d_out(o, trace.pool_argmax[o]) += d_pooled[o];

    for (std::size_t bi = params.blocks.size(); bi-- > 0;) {
        const ConvBlock& b = params.blocks[bi];
        ConvBlock& gb = grads.blocks[bi];
        const Matrix& x = trace.inputs[bi];
        const Matrix& pre = trace.preact[bi];

        Matrix d_x(b.in_ch, len, 0.0);

        // Residual branch first.
        if (b.proj.empty()) {
            for (std::size_t o = 0; o < b.out_ch; ++o)
                for (std::size_t t = 0; t < len; ++t) d_x(o, t) += d_out(o, t);
        } else {
            for (std::size_t o = 0; o < b.out_ch; ++o)
                for (std::size_t t = 0; t < len; ++t) {
                    const double g = d_out(o, t);
                    if (g == 0.0) continue;
                    for (std::size_t i = 0; i < b.in_ch; ++i) {
                        gb.proj(o, i) += g * x(i, t);
                        d_x(i, t) += b.proj(o, i) * g;
                    }
                }
        }

        // Conv branch through the leaky-ReLU.
        for (std::size_t o = 0; o < b.out_ch; ++o) {
            for (std::size_t t = 0; t < len; ++t) {
                double g = d_out(o, t);
                if (g == 0.0) continue;
                g *= pre(o, t) > 0.0 ? 1.0 : kLeakySlope;
                gb.bias[o] += g;
                for (std::size_t i = 0; i < b.in_ch; ++i) {
                    for (std::size_t k = 0; k < b.kernel; ++k) {
                        const std::size_t back = (b.kernel - 1 - k) * b.dilation;
                        if (back > t) continue;
                        gb.w(o, i * b.kernel + k) += g * x(i, t - back);
                        d_x(i, t - back) += b.w(o, i * b.kernel + k) * g;
                    }
                }
            }
        }
        d_out = std::move(d_x);
    }
}

namespace {

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

struct LossTerms {
    double d_ap = 0.0, d_an = 0.0, intra_p = 0.0, intra_n = 0.0;
};

LossTerms loss_terms(const std::vector<double>& a, const std::vector<std::vector<double>>& zp,
                     const std::vector<std::vector<double>>& zn) {
    LossTerms t;
    for (const auto& p : zp) t.d_ap += euclid(a, p);
    t.d_ap /= double(zp.size());
    for (const auto& n : zn) t.d_an += euclid(a, n);
    t.d_an /= double(zn.size());
    for (std::size_t i = 0; i < zp.size(); ++i)
        for (std::size_t j = 0; j < zp.size(); ++j) t.intra_p += euclid(zp[i], zp[j]);
    t.intra_p /= double(zp.size() * zp.size());
    for (std::size_t i = 0; i < zn.size(); ++i)
        for (std::size_t j = 0; j < zn.size(); ++j) t.intra_n += euclid(zn[i], zn[j]);
    t.intra_n /= double(zn.size() * zn.size());
    return t;
}

} // namespace

double triplet_loss(const std::vector<double>& anchor,
                    const std::vector<std::vector<double>>& positives,
                    const std::vector<std::vector<double>>& negatives, double epsilon,
                    double margin) {
    if (positives.empty() || negatives.empty())
        throw std::invalid_argument("triplet_loss: need at least one positive and one negative");
    const LossTerms t = loss_terms(anchor, positives, negatives);
    return std::log((t.d_ap + t.intra_p + t.intra_n) / (t.d_an + epsilon) + margin);
}

double triplet_loss_grad(const std::vector<double>& anchor,
                         const std::vector<std::vector<double>>& positives,
                         const std::vector<std::vector<double>>& negatives, double epsilon,
                         double margin, std::vector<double>& d_anchor,
                         std::vector<std::vector<double>>& d_positives,
                         std::vector<std::vector<double>>& d_negatives) {
    if (positives.empty() || negatives.empty())
        throw std::invalid_argument("triplet_loss: need at least one positive and one negative");
    const std::size_t dim = anchor.size();
    const std::size_t P = positives.size();
    const std::size_t N = negatives.size();
    d_anchor.assign(dim, 0.0);
    d_positives.assign(P, std::vector<double>(dim, 0.0));
    d_negatives.assign(N, std::vector<double>(dim, 0.0));

    const LossTerms t = loss_terms(anchor, positives, negatives);
    const double numer = t.d_ap + t.intra_p + t.intra_n;
    const double denom = t.d_an + epsilon;
    const double ratio = numer / denom + margin;
    const double d_numer = 1.0 / (ratio * denom);
    const double d_dan = -numer / (ratio * denom * denom);

    // Unit direction (a-b)/|a-b| scaled by `coef` added to d_a, subtracted
    // from d_b; zero-distance pairs contribute nothing.
    auto push = [dim](const std::vector<double>& a, const std::vector<double>& b, double coef,
                      std::vector<double>& da, std::vector<double>& db) {
        const double dist = euclid(a, b);
        if (dist == 0.0) return;
        for (std::size_t k = 0; k < dim; ++k) {
            const double u = (a[k] - b[k]) / dist;
            da[k] += coef * u;
            db[k] -= coef * u;
        }
    };

    for (std::size_t j = 0; j < P; ++j)
        push(anchor, positives[j], d_numer / double(P), d_anchor, d_positives[j]);
    for (std::size_t j = 0; j < N; ++j)
        push(anchor, negatives[j], d_dan / double(N), d_anchor, d_negatives[j]);
    for (std::size_t i = 0; i < P; ++i)
        for (std::size_t j = i + 1; j < P; ++j)
            push(positives[i], positives[j], 2.0 * d_numer / double(P * P), d_positives[i],
                 d_positives[j]);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i + 1; j < N; ++j)
            push(negatives[i], negatives[j], 2.0 * d_numer / double(N * N), d_negatives[i],
                 d_negatives[j]);

    return std::log(ratio);
}

namespace {

struct TripletTask {
    std::size_t store = 0; // which slice list the indices refer to
    TripletBatch batch;
};

void accumulate(EncoderGrads& into, const EncoderGrads& from, double scale) {
    for (std::size_t b = 0; b < into.blocks.size(); ++b) {
        auto& ib = into.blocks[b];
        const auto& fb = from.blocks[b];
        for (std::size_t i = 0; i < ib.w.data().size(); ++i) ib.w.data()[i] += scale * fb.w.data()[i];
        for (std::size_t i = 0; i < ib.bias.size(); ++i) ib.bias[i] += scale * fb.bias[i];
        for (std::size_t i = 0; i < ib.proj.data().size(); ++i)
            ib.proj.data()[i] += scale * fb.proj.data()[i];
    }
    for (std::size_t i = 0; i < into.head_w.data().size(); ++i)
        into.head_w.data()[i] += scale * from.head_w.data()[i];
    for (std::size_t i = 0; i < into.head_b.size(); ++i) into.head_b[i] += scale * from.head_b[i];
}

} // namespace

TrainedEncoder train_encoder(const std::vector<Segment>& subsequences, const EncoderConfig& cfg) {
    cfg.validate();
    if (subsequences.empty()) throw std::invalid_argument("train_encoder: no subsequences");
    const std::size_t dim = subsequences.front().dim();
    for (const auto& s : subsequences)
        if (s.dim() != dim)
            throw std::invalid_argument("train_encoder: mixed channel counts");

    // Triplet mining looks only at the raw slices, never at embeddings, so it
    // runs once up front and is reused by every epoch.
    std::vector<std::vector<Matrix>> stores;
    std::vector<TripletTask> tasks;
    std::size_t barren_splits = 0;
    for (std::size_t si = 0; si < subsequences.size(); ++si) {
        const Matrix interp = prefix_and_interpolate(subsequences[si], cfg);
        for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
            std::vector<Matrix> slices = slice_multiscale(interp, cfg.alphas[ai], cfg.slice_stride);
            if (slices.size() < 2) {
                log::debug("train_encoder: not enough slices to cluster, skipping one scale");
                continue;
            }
            Rng rng = substream(cfg.rng_seed, "encoder.kmeans." + std::to_string(si) + "." +
                                                  std::to_string(ai));
            const KMeans2Result split = dtw_kmeans2(slices, rng, 10, cfg.threads);
            const auto triplets = select_triplets(slices, split, cfg.threads);
            if (triplets.empty()) {
                ++barren_splits;
                continue;
            }
            stores.push_back(std::move(slices));
            for (const auto& b : triplets) tasks.push_back({stores.size() - 1, b});
        }
    }
    if (barren_splits > 0) {
        log::warn("train_encoder: " + std::to_string(barren_splits) +
                  " scale splits were too small to mine triplets from");
    }
    if (tasks.empty()) throw std::runtime_error("train_encoder: no valid triplets to train on");

    Rng init_rng = substream(cfg.rng_seed, "encoder.init");
    TrainedEncoder trained;
    trained.params = init_encoder_params(cfg, dim, init_rng);

    const std::size_t n_params = trained.params.parameter_count();
    std::vector<double> adam_m(n_params, 0.0), adam_v(n_params, 0.0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<EncoderGrads> task_grads(tasks.size());
        std::vector<double> task_loss(tasks.size(), 0.0);
        parallel_for(tasks.size(), cfg.threads, [&](std::size_t ti) {
            const auto& task = tasks[ti];
            const auto& slices = stores[task.store];
            EncoderGrads g = zero_like(trained.params);

            ForwardTrace trace_a;
            const auto z_a = encode_forward(trained.params, slices[task.batch.anchor], trace_a);
            std::vector<ForwardTrace> traces_p(task.batch.positives.size());
            std::vector<std::vector<double>> z_p(task.batch.positives.size());
            for (std::size_t j = 0; j < z_p.size(); ++j)
                z_p[j] = encode_forward(trained.params, slices[task.batch.positives[j]], traces_p[j]);
            std::vector<ForwardTrace> traces_n(task.batch.negatives.size());
            std::vector<std::vector<double>> z_n(task.batch.negatives.size());
            for (std::size_t j = 0; j < z_n.size(); ++j)
                z_n[j] = encode_forward(trained.params, slices[task.batch.negatives[j]], traces_n[j]);

            std::vector<double> da;
            std::vector<std::vector<double>> dp, dn;
            task_loss[ti] =
                triplet_loss_grad(z_a, z_p, z_n, cfg.epsilon, cfg.soft_margin, da, dp, dn);

            encode_backward(trained.params, trace_a, da, g);
            for (std::size_t j = 0; j < dp.size(); ++j)
                encode_backward(trained.params, traces_p[j], dp[j], g);
            for (std::size_t j = 0; j < dn.size(); ++j)
                encode_backward(trained.params, traces_n[j], dn[j], g);
            task_grads[ti] = std::move(g);
        });

        EncoderGrads grads = zero_like(trained.params);
        const double inv = 1.0 / double(tasks.size());
        for (const auto& g : task_grads) accumulate(grads, g, inv);
        double mean_loss = 0.0;
        for (double l : task_loss) mean_loss += l;
        mean_loss *= inv;
        if (!std::isfinite(mean_loss))
            throw std::runtime_error("train_encoder: loss diverged to a non-finite value");
        trained.loss_trace.push_back(mean_loss);

        // Adam step over the flattened parameter order.
        const double t = double(epoch + 1);
        const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
        const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
        std::vector<double> flat_g;
        flat_g.reserve(n_params);
        visit_params(static_cast<const EncoderParams&>(grads),
                     [&](double g) { flat_g.push_back(g); });
        std::size_t idx = 0;
        visit_params(trained.params, [&](double& p) {
            const double g = flat_g[idx];
            adam_m[idx] = kAdamBeta1 * adam_m[idx] + (1.0 - kAdamBeta1) * g;
            adam_v[idx] = kAdamBeta2 * adam_v[idx] + (1.0 - kAdamBeta2) * g * g;
            const double mhat = adam_m[idx] / bc1;
            const double vhat = adam_v[idx] / bc2;
            p -= cfg.lr * mhat / (std::sqrt(vhat) + kAdamEps);
            ++idx;
        });
    }
    return trained;
}

} // namespace pf
