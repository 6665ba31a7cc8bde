#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "patternforge/rng.hpp"
#include "patternforge/shapelets.hpp"

using namespace pf;

namespace {

EncoderConfig small_cfg() {
    EncoderConfig cfg;
    cfg.L = 40;
    cfg.alphas = {0.3, 0.5};
    cfg.slice_stride = 4;
    cfg.emb_dim = 8;
    cfg.conv_channels = 8;
    cfg.rng_seed = 21;
    return cfg;
}

Segment wave_segment(Rng& rng, bool ramp, std::size_t len) {
    Segment s;
    s.values = Matrix(len, 2);
    for (std::size_t t = 0; t < len; ++t) {
        const double u = double(t) / double(len - 1);
        const double base = ramp ? u : std::sin(6.283185307179586 * u);
        s.values(t, 0) = base + 0.02 * rng.normal();
        s.values(t, 1) = 0.5 * base + 0.02 * rng.normal();
    }
    return s;
}

// Minimal cloud point: only what score_and_filter and the clusterer read.
LatentPoint bare_point(std::vector<double> emb, int label, Matrix slice = Matrix(1, 2, 0.0)) {
    LatentPoint p;
    p.embedding = std::move(emb);
    p.label = label;
    p.slice = std::move(slice);
    return p;
}

} // namespace

TEST_CASE("cloud size is the window count times the subsequence count") {
    const EncoderConfig cfg = small_cfg();
    Rng gen(3);
    std::vector<Segment> subs;
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) {
        subs.push_back(wave_segment(gen, i % 2 == 0, 20));
        labels.push_back(i % 2);
    }
    Rng ir = substream(cfg.rng_seed, "encoder.init");
    const EncoderParams params = init_encoder_params(cfg, 2, ir);

    const LatentCloud cloud = build_latent_cloud(params, subs, labels, cfg);
    // Windows per subsequence: (40-12)/4+1 = 8 at alpha=0.3, (40-20)/4+1 = 6
    // at alpha=0.5.
    CHECK(cloud.points.size() == 4 * (8 + 6));
    CHECK(cloud.emb_dim == 8);

    for (const auto& p : cloud.points) {
        CHECK(p.label == labels[p.subsequence]);
        CHECK(p.embedding.size() == 8);
        CHECK(p.window_start % 4 == 0);
        // The stored slice is the exact window it claims to be.
        const Matrix interp = prefix_and_interpolate(subs[p.subsequence], cfg);
        const auto slices = slice_multiscale(interp, cfg.alphas[p.alpha_index], cfg.slice_stride);
        const Matrix& want = slices[p.window_start / 4];
        CHECK(max_abs_diff(p.slice, want) == 0.0);
        const auto z = encode_forward(params, want);
        for (std::size_t k = 0; k < z.size(); ++k) CHECK(p.embedding[k] == z[k]);
    }

    SUBCASE("identical subsequences embed identically") {
        std::vector<Segment> twice{subs[0], subs[0]};
        const LatentCloud c2 = build_latent_cloud(params, twice, {0, 0}, cfg);
        const std::size_t half = c2.points.size() / 2;
        for (std::size_t i = 0; i < half; ++i)
            for (std::size_t k = 0; k < 8; ++k)
                CHECK(c2.points[i].embedding[k] == c2.points[half + i].embedding[k]);
    }
    SUBCASE("empty input gives an empty cloud") {
        CHECK(build_latent_cloud(params, {}, {}, cfg).points.empty());
    }
    SUBCASE("label count must match") {
        CHECK_THROWS_AS(build_latent_cloud(params, subs, {0, 1}, cfg), std::invalid_argument);
    }
}

TEST_CASE("kmeans recovers planted blobs") {
    Rng gen(17);
    LatentCloud cloud;
    cloud.emb_dim = 6;
    std::vector<std::vector<double>> centers{
        {10, 0, 0, 0, 0, 0}, {0, 10, 0, 0, 0, 0}, {-10, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 10}};
    for (int b = 0; b < 4; ++b)
        for (int i = 0; i < 10; ++i) {
            std::vector<double> e = centers[b];
            for (auto& x : e) x += 0.1 * gen.normal();
            cloud.points.push_back(bare_point(std::move(e), b));
        }

    Rng rng(2);
    const auto clusters = cluster_candidates(cloud, 4, rng, 50, 2);
    REQUIRE(clusters.size() == 4);

    std::size_t covered = 0;
    for (const auto& cl : clusters) {
        REQUIRE(cl.members.size() == 10);
        covered += cl.members.size();
        // All members share one blob: labels were set to the blob id.
        const int blob = cloud.points[cl.members[0]].label;
        for (std::size_t m : cl.members) CHECK(cloud.points[m].label == blob);

        // Candidate = point nearest the true blob mean, by brute force.
        std::vector<double> mean(6, 0.0);
        for (std::size_t m : cl.members)
            for (int k = 0; k < 6; ++k) mean[k] += cloud.points[m].embedding[k] / 10.0;
        std::size_t best = cl.members[0];
        double best_d = 1e300;
        for (std::size_t m : cl.members) {
            double d = 0;
            for (int k = 0; k < 6; ++k) {
                const double diff = cloud.points[m].embedding[k] - mean[k];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = m;
            }
        }
        CHECK(cl.candidate == best);
    }
    CHECK(covered == cloud.points.size());

    SUBCASE("fixed seed reproduces, threads do not matter") {
        Rng r1(2), r2(2);
        const auto a = cluster_candidates(cloud, 4, r1, 50, 1);
        const auto b = cluster_candidates(cloud, 4, r2, 50, 4);
        for (int c = 0; c < 4; ++c) {
            CHECK(a[c].members == b[c].members);
            CHECK(a[c].candidate == b[c].candidate);
        }
    }
}

TEST_CASE("kmeans edge shapes") {
    LatentCloud cloud;
    cloud.emb_dim = 2;
    for (int i = 0; i < 6; ++i)
        cloud.points.push_back(bare_point({double(i), double(i % 3)}, 0));

    SUBCASE("as many clusters as points: everyone is their own candidate") {
        Rng rng(4);
        const auto clusters = cluster_candidates(cloud, 6, rng);
        std::set<std::size_t> seen;
        for (const auto& cl : clusters) {
            REQUIRE(cl.members.size() == 1);
            CHECK(cl.candidate == cl.members[0]);
            seen.insert(cl.members[0]);
        }
        CHECK(seen.size() == 6);
    }
    SUBCASE("cloud smaller than g is rejected") {
        Rng rng(4);
        CHECK_THROWS_AS(cluster_candidates(cloud, 7, rng), std::invalid_argument);
        CHECK_THROWS_AS(cluster_candidates(cloud, 0, rng), std::invalid_argument);
    }
}

namespace {

// Cloud with three pure label groups and hand-set one-channel curves.
struct HandSetup {
    LatentCloud cloud;
    std::vector<CandidateCluster> clusters;
};

HandSetup hand_clusters(std::size_t size_a, std::size_t size_b, std::size_t size_c,
                        double scale = 1.0) {
    HandSetup h;
    h.cloud.emb_dim = 1;
    auto add_group = [&](std::size_t count, int label, std::vector<double> curve) {
        CandidateCluster cl;
        Matrix m(1, curve.size());
        for (std::size_t i = 0; i < curve.size(); ++i) m(0, i) = scale * curve[i];
        for (std::size_t i = 0; i < count; ++i) {
            h.cloud.points.push_back(bare_point({double(label)}, label, m));
            cl.members.push_back(h.cloud.points.size() - 1);
        }
        cl.candidate = cl.members[0];
        h.clusters.push_back(std::move(cl));
    };
    add_group(size_a, 0, {0.0, 0.0});
    add_group(size_b, 1, {1.0, 1.0});
    add_group(size_c, 2, {3.0, 3.0});
    return h;
}

} // namespace

TEST_CASE("utility ranking matches hand arithmetic") {
    // Pairwise squared gaps: (a,b) = 2, (a,c) = 18, (b,c) = 8.
    const HandSetup h = hand_clusters(2, 3, 4);
    const auto ranked = score_and_filter(h.cloud, h.clusters, 3);
    REQUIRE(ranked.size() == 3);
    // U_a = 2*(2+18) = 40, U_b = 3*(2+8) = 30, U_c = 4*(18+8) = 104.
    CHECK(ranked[0].utility == 104.0);
    CHECK(ranked[0].cluster_size == 4);
    CHECK(ranked[1].utility == 40.0);
    CHECK(ranked[2].utility == 30.0);
    for (const auto& s : ranked) CHECK(s.purity == 1.0);

    SUBCASE("utility is linear in the member count") {
        const HandSetup twice = hand_clusters(4, 6, 8);
        const auto r2 = score_and_filter(twice.cloud, twice.clusters, 3);
        REQUIRE(r2.size() == 3);
        for (int i = 0; i < 3; ++i) CHECK(r2[i].utility == 2.0 * ranked[i].utility);
    }
    SUBCASE("common positive scaling preserves the order") {
        const HandSetup scaled = hand_clusters(2, 3, 4, 2.5);
        const auto rs = score_and_filter(scaled.cloud, scaled.clusters, 3);
        REQUIRE(rs.size() == 3);
        for (int i = 0; i < 3; ++i) {
            CHECK(rs[i].cluster_size == ranked[i].cluster_size);
            CHECK(rs[i].utility == doctest::Approx(6.25 * ranked[i].utility).epsilon(1e-12));
        }
    }
}

TEST_CASE("purity threshold is strict") {
    LatentCloud cloud;
    cloud.emb_dim = 1;
    Matrix curve(1, 2, 1.0);
    // Cluster 0: pure label 7. Cluster 1: exact 50/50 split with p_prime=2.
    CandidateCluster pure, mixed;
    for (int i = 0; i < 4; ++i) {
        cloud.points.push_back(bare_point({0.0}, 7, curve));
        pure.members.push_back(cloud.points.size() - 1);
    }
    pure.candidate = pure.members[0];
    for (int i = 0; i < 2; ++i) {
        cloud.points.push_back(bare_point({1.0}, 0, curve));
        mixed.members.push_back(cloud.points.size() - 1);
        cloud.points.push_back(bare_point({1.0}, 1, curve));
        mixed.members.push_back(cloud.points.size() - 1);
    }
    mixed.candidate = mixed.members[0];

    const auto kept = score_and_filter(cloud, {pure, mixed}, 2);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].purity == 1.0);
    CHECK(kept[0].cluster_size == 4);

    SUBCASE("nothing retained is an error") {
        CHECK_THROWS_AS(score_and_filter(cloud, {pure, mixed}, 1), std::runtime_error);
    }
    SUBCASE("empty clusters are ignored") {
        CandidateCluster empty;
        const auto again = score_and_filter(cloud, {pure, mixed, empty}, 2);
        CHECK(again.size() == 1);
    }
}

TEST_CASE("mixed-length utilities resample to the longest curve") {
    LatentCloud cloud;
    cloud.emb_dim = 1;
    Matrix short_curve(1, 2);
    short_curve(0, 0) = 0.0;
    short_curve(0, 1) = 1.0;
    const Matrix long_curve(1, 4, 1.0);

    CandidateCluster a, b;
    cloud.points.push_back(bare_point({0.0}, 0, short_curve));
    a.members = {0};
    a.candidate = 0;
    cloud.points.push_back(bare_point({1.0}, 1, long_curve));
    cloud.points.push_back(bare_point({1.0}, 1, long_curve));
    b.members = {1, 2};
    b.candidate = 1;

    const auto ranked = score_and_filter(cloud, {a, b}, 2);
    REQUIRE(ranked.size() == 2);
    // [0,1] resampled to 4 points is [0, 1/3, 2/3, 1]; squared gap to all-ones
    // is 1 + 4/9 + 1/9 + 0 = 14/9.
    const double gap = 14.0 / 9.0;
    CHECK(ranked[0].utility == doctest::Approx(2.0 * gap).epsilon(1e-12));
    CHECK(ranked[1].utility == doctest::Approx(1.0 * gap).epsilon(1e-12));
    // Stored curves keep their raw lengths.
    const Shapelet& short_one = ranked[0].cluster_size == 1 ? ranked[0] : ranked[1];
    const Shapelet& long_one = ranked[0].cluster_size == 2 ? ranked[0] : ranked[1];
    CHECK(short_one.values.cols() == 2);
    CHECK(long_one.values.cols() == 4);
}

TEST_CASE("shapelet bank from a trained encoder end to end") {
    Rng gen(909);
    std::vector<Segment> subs;
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) {
        subs.push_back(wave_segment(gen, false, 20));
        labels.push_back(0);
    }
    for (int i = 0; i < 8; ++i) {
        subs.push_back(wave_segment(gen, true, 20));
        labels.push_back(1);
    }
    EncoderConfig cfg = small_cfg();
    cfg.epochs = 5;
    const TrainedEncoder enc = train_encoder(subs, cfg);

    const LatentCloud cloud = build_latent_cloud(enc.params, subs, labels, cfg);
    REQUIRE(cloud.points.size() == 16 * 14);

    Rng rng(substream(cfg.rng_seed, "shapelets.kmeans").raw());
    const auto clusters = cluster_candidates(cloud, 10, rng, 50, 2);
    const auto bank = score_and_filter(cloud, clusters, 2);

    REQUIRE(!bank.empty());
    CHECK(bank.size() <= 10);
    for (std::size_t i = 0; i + 1 < bank.size(); ++i)
        CHECK(bank[i].utility >= bank[i + 1].utility);
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> sources;
    for (const auto& s : bank) {
        CHECK(s.purity > 0.5);
        CHECK(s.values.rows() == 2);
        const std::size_t win = s.alpha_index == 0 ? 12 : 20;
        CHECK(s.values.cols() == win);
        sources.insert({s.subsequence, s.alpha_index, s.window_start});
    }
    CHECK(sources.size() == bank.size());
}
