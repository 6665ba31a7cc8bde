#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "patternforge/matrix.hpp"
#include "patternforge/rng.hpp"
#include "patternforge/series.hpp"

namespace pf {

struct EncoderConfig {
    double gamma = 0.8;       // observed prefix fraction of each subsequence
    std::size_t L = 100;      // interpolation length
    std::vector<double> alphas = {0.2, 0.4, 0.6};
    std::size_t slice_stride = 5;
    std::size_t emb_dim = 64;
    std::size_t conv_channels = 32;
    std::size_t kernel_size = 3;
    std::vector<std::size_t> dilations = {1, 2, 4};
    double epsilon = 1e-6; // loss denominator guard
    double soft_margin = 0.2;
    double lr = 1e-3;
    int epochs = 30;
    std::uint64_t rng_seed = 0;
    int threads = 1;

    void validate() const;
};

// One dilated causal conv block. `w` is out_ch x (in_ch * kernel) with the
// kernel index fastest; `proj` is the 1x1 residual map, present only when the
// block changes the channel count (identity bypass otherwise).
struct ConvBlock {
    Matrix w;
    std::vector<double> bias;
    Matrix proj;
    std::size_t in_ch = 0;
    std::size_t out_ch = 0;
    std::size_t kernel = 0;
    std::size_t dilation = 1;
};

struct EncoderParams {
    std::vector<ConvBlock> blocks;
    Matrix head_w; // emb_dim x conv_channels
    std::vector<double> head_b;
    std::size_t input_dim = 0;

    std::size_t parameter_count() const;
};

// Gradients mirror the parameter layout exactly.
using EncoderGrads = EncoderParams;

EncoderParams init_encoder_params(const EncoderConfig& cfg, std::size_t input_dim, Rng& rng);
EncoderParams zero_like(const EncoderParams& params);

// Walks every scalar parameter in one fixed order (blocks, then head).
void visit_params(EncoderParams& p, const std::function<void(double&)>& fn);
void visit_params(const EncoderParams& p, const std::function<void(double)>& fn);

// First ceil(gamma * len) rows, linearly resampled to cfg.L rows, min-max
// scaled per column.
Matrix prefix_and_interpolate(const Segment& subsequence, const EncoderConfig& cfg);

// Channel-major (D x round(alpha*L)) windows at stride offsets.
std::vector<Matrix> slice_multiscale(const Matrix& interpolated, double alpha,
                                     std::size_t stride);

struct KMeans2Result {
    std::array<std::vector<std::size_t>, 2> clusters; // indices into the segment list
    std::array<Matrix, 2> centroids;                  // channel-major like the inputs
    int iterations_used = 0;
};

// Dependent-DTW K-means with K=2 over channel-major segments. A cluster that
// empties is repaired by moving in the segment farthest from the other
// centroid.
KMeans2Result dtw_kmeans2(const std::vector<Matrix>& segments, Rng& rng, int max_iter = 10,
                          int threads = 1);

struct TripletBatch {
    std::size_t anchor = 0;
    std::vector<std::size_t> positives;
    std::vector<std::size_t> negatives;
};

// One batch per non-degenerate cluster: anchor = DTW medoid, positives the
// ceil(|c|/5) nearest cluster mates, negatives the ceil(|other|/5) farthest
// members of the other cluster. Clusters that cannot supply a positive are
// skipped with a warning.
std::vector<TripletBatch> select_triplets(const std::vector<Matrix>& segments,
                                          const KMeans2Result& split, int threads = 1);

// Per-sample activations kept for the backward pass.
struct ForwardTrace {
    std::vector<Matrix> inputs;   // per block, in_ch x len
    std::vector<Matrix> preact;   // per block, out_ch x len
    std::vector<std::size_t> pool_argmax; // per output channel
    std::vector<double> pooled;
};

std::vector<double> encode_forward(const EncoderParams& params, const Matrix& segment);
std::vector<double> encode_forward(const EncoderParams& params, const Matrix& segment,
                                   ForwardTrace& trace);

// Accumulates parameter gradients for one sample given dLoss/dEmbedding.
void encode_backward(const EncoderParams& params, const ForwardTrace& trace,
                     const std::vector<double>& d_embedding, EncoderGrads& grads);

double triplet_loss(const std::vector<double>& anchor,
                    const std::vector<std::vector<double>>& positives,
                    const std::vector<std::vector<double>>& negatives, double epsilon,
                    double margin);

// Returns the loss and fills dLoss/dEmbedding for every participant.
double triplet_loss_grad(const std::vector<double>& anchor,
                         const std::vector<std::vector<double>>& positives,
                         const std::vector<std::vector<double>>& negatives, double epsilon,
                         double margin, std::vector<double>& d_anchor,
                         std::vector<std::vector<double>>& d_positives,
                         std::vector<std::vector<double>>& d_negatives);

struct TrainedEncoder {
    EncoderParams params;
    std::vector<double> loss_trace; // mean triplet loss per epoch
};

// Full phase-1 loop: slice every subsequence at every alpha, mine triplets
// once (mining only looks at the raw segments, so it is reused across
// epochs), then run Adam on the averaged triplet loss.
TrainedEncoder train_encoder(const std::vector<Segment>& subsequences, const EncoderConfig& cfg);

} // namespace pf
