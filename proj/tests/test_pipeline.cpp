#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "patternforge/artifacts.hpp"
#include "patternforge/config.hpp"
#include "patternforge/csv.hpp"
#include "patternforge/pipeline.hpp"
#include "patternforge/rng.hpp"

using namespace pf;

namespace {

std::string temp_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("pf_pipeline_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

// The desk-scale settings exercised by the end-to-end cases; mirrors the
// bundled smoke configuration.
PipelineConfig smoke_config(const std::string& dir) {
    PipelineConfig cfg;
    cfg.data_path = dir + "/synth.csv";
    cfg.out_dir = dir + "/artifacts";
    set_config_key(cfg, "simpc.p", "6");
    set_config_key(cfg, "simpc.m", "2");
    set_config_key(cfg, "simpc.delta", "7.5");
    set_config_key(cfg, "simpc.kappa", "8");
    set_config_key(cfg, "simpc.iterations", "3");
    set_config_key(cfg, "encoder.interp_len", "40");
    set_config_key(cfg, "encoder.conv_channels", "8");
    set_config_key(cfg, "encoder.emb_dim", "8");
    set_config_key(cfg, "encoder.epochs", "5");
    set_config_key(cfg, "shapelets.g", "8");
    set_config_key(cfg, "classifier.epochs", "200");
    set_config_key(cfg, "classifier.eval_fraction", "0.4");
    set_config_key(cfg, "run.threads", "2");
    return cfg;
}

std::string canonical_artifacts(const PipelineConfig& cfg) {
    std::string all;
    for (const std::string& stage : pipeline_stages()) {
        all += canonical_dump(load_artifact(stage_artifact_path(cfg, stage))) + "\n";
    }
    return all;
}

MultivariateSeries tiny_ohlcv(std::size_t n) {
    MultivariateSeries s;
    s.channels = {"open", "high", "low", "close", "volume"};
    s.values = Matrix(n, 5);
    Rng rng(11);
    double close = 100.0;
    for (std::size_t i = 0; i < n; ++i) {
        close *= 1.0 + 0.01 * rng.normal();
        s.values(i, 0) = close * 0.99;
        s.values(i, 1) = close * 1.02;
        s.values(i, 2) = close * 0.98;
        s.values(i, 3) = close;
        s.values(i, 4) = 1e6 * (1.0 + 0.3 * rng.uniform());
        s.dates.push_back(Date::from_days(17532 + std::int64_t(i)));
    }
    return s;
}

} // namespace

TEST_CASE("config defaults match the reference experimental setup") {
    const PipelineConfig cfg;
    CHECK(cfg.simpc.P == 8);
    CHECK(cfg.simpc.m == 6);
    CHECK(cfg.simpc.delta == 2.3);
    CHECK(cfg.simpc.kappa == 40);
    CHECK(cfg.simpc.L_min == 18);
    CHECK(cfg.simpc.L_max == 22);
    CHECK(cfg.simpc.ref_len == 20);
    CHECK_FALSE(cfg.simpc.dtw_normalize);
    CHECK(cfg.encoder.gamma == 0.8);
    CHECK(cfg.encoder.L == 100);
    CHECK(cfg.encoder.alphas == std::vector<double>{0.2, 0.4, 0.6});
    CHECK(cfg.encoder.slice_stride == 5);
    CHECK(cfg.encoder.emb_dim == 64);
    CHECK(cfg.encoder.epochs == 30);
    CHECK(cfg.encoder.lr == 1e-3);
    CHECK(cfg.encoder.soft_margin == 0.2);
    CHECK(cfg.shapelet_g == 10);
    CHECK(cfg.classifier.C == 1.0);
    CHECK(cfg.classifier.epochs == 500);
    CHECK(cfg.eval_fraction == 0.2);
    CHECK(cfg.backtest.interval == 4);
    CHECK(cfg.backtest.window == 16);
    CHECK(cfg.backtest.fee == 0.001);
    CHECK_FALSE(cfg.backtest.multiplicative_fees);
    CHECK(cfg.top_x == 100.0);
    CHECK(cfg.rsi_period == 14);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("emit -> parse -> emit is a fixed point, for defaults and overrides") {
    const PipelineConfig defaults;
    const std::string once = emit_config(defaults);
    CHECK(once == emit_config(parse_config(once)));

    PipelineConfig tweaked;
    set_config_key(tweaked, "simpc.delta", "7.5");
    set_config_key(tweaked, "encoder.alphas", "0.1,0.3");
    set_config_key(tweaked, "backtest.multiplicative_fees", "true");
    set_config_key(tweaked, "data.path", "elsewhere.csv");
    const std::string twice = emit_config(tweaked);
    CHECK(twice == emit_config(parse_config(twice)));
    CHECK(parse_config(twice).encoder.alphas == std::vector<double>{0.1, 0.3});

    // every advertised key appears exactly once in the emitted form
    for (const std::string& key : config_key_names()) {
        CHECK(once.find(key + " = ") != std::string::npos);
    }
}

TEST_CASE("config parsing reports the key and line of every failure") {
    CHECK_THROWS_WITH_AS(parse_config("bogus.key = 1\n"),
                         doctest::Contains("unknown config key 'bogus.key'"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config("# fine\n\nsimpc.delta = soup\n"),
                         doctest::Contains("config line 3"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config("simpc.delta = soup\n"),
                         doctest::Contains("simpc.delta"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config("just words\n"), doctest::Contains("expected 'key = value'"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config("run.seed = -4\n"), doctest::Contains("run.seed"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config("split.train_start = 2020-13-01\n"),
                         doctest::Contains("ISO date"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config("classifier.softmax_margins = yes\n"),
                         doctest::Contains("true or false"), std::invalid_argument);

    // comments, blank lines, and whitespace are tolerated
    const PipelineConfig cfg =
        parse_config("# header\n\n  simpc.delta   =  3.25  \nrun.threads=4\n");
    CHECK(cfg.simpc.delta == 3.25);
    CHECK(cfg.threads == 4);
}

TEST_CASE("config validation rejects out-of-range fields") {
    PipelineConfig cfg;
    set_config_key(cfg, "classifier.eval_fraction", "1.0");
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = PipelineConfig{};
    set_config_key(cfg, "backtest.top_x", "0");
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = PipelineConfig{};
    set_config_key(cfg, "split.test_start", "2018-06-01"); // inside the train range
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = PipelineConfig{};
    set_config_key(cfg, "smooth.bandwidth", "0");
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("config hash ignores protocol and location knobs, tracks model knobs") {
    PipelineConfig cfg;
    const std::string base = config_hash(cfg);
    CHECK(base.size() == 16);

    set_config_key(cfg, "backtest.top_x", "20");
    set_config_key(cfg, "backtest.fee", "0.002");
    set_config_key(cfg, "backtest.interval", "8");
    set_config_key(cfg, "backtest.window", "32");
    set_config_key(cfg, "backtest.multiplicative_fees", "true");
    set_config_key(cfg, "run.threads", "16");
    set_config_key(cfg, "data.out_dir", "/somewhere/else");
    CHECK(config_hash(cfg) == base);

    PipelineConfig delta = cfg;
    set_config_key(delta, "simpc.delta", "2.4");
    CHECK(config_hash(delta) != base);

    PipelineConfig seeded = cfg;
    set_config_key(seeded, "run.seed", "43");
    CHECK(config_hash(seeded) != base);

    PipelineConfig moved = cfg;
    set_config_key(moved, "data.path", "other.csv");
    CHECK(config_hash(moved) != base);
}

TEST_CASE("artifact envelope round-trips and its digest excludes the timestamp") {
    const std::string dir = temp_dir("artifact");
    Artifact a;
    a.kind = "probe";
    a.config_hash = "0123456789abcdef";
    a.rng_seed = 42;
    a.upstream = {{"ingest", "deadbeefdeadbeef"}};
    a.payload = {{"x", 0.1}, {"m", matrix_json(Matrix(2, 2, 0.25))}, {"v", {1, 2, 3}}};

    const std::string digest_before = artifact_digest(a);
    const std::string path = dir + "/probe.json";
    save_artifact(a, path);
    const Artifact b = load_artifact(path);
    CHECK(b.kind == "probe");
    CHECK(b.config_hash == a.config_hash);
    CHECK(b.rng_seed == 42);
    CHECK(b.upstream == a.upstream);
    CHECK_FALSE(b.created_at.empty());
    CHECK(b.payload == a.payload);
    CHECK(artifact_digest(b) == digest_before);
    CHECK(canonical_dump(b).find("created_at") == std::string::npos);
    CHECK(matrix_from_json(b.payload.at("m"))(1, 1) == 0.25);

    // schema version gate
    Artifact wrong = a;
    wrong.schema_version = kArtifactSchemaVersion + 1;
    save_artifact(wrong, dir + "/wrong.json");
    CHECK_THROWS_WITH_AS(load_artifact(dir + "/wrong.json"), doctest::Contains("schema_version"),
                         std::runtime_error);

    std::ofstream(dir + "/garbage.json") << "{ not json";
    CHECK_THROWS_WITH_AS(load_artifact(dir + "/garbage.json"), doctest::Contains("garbage.json"),
                         std::runtime_error);
    CHECK_THROWS_AS(load_artifact(dir + "/missing.json"), std::runtime_error);
}

TEST_CASE("payload converters preserve doubles bit-exactly") {
    Matrix m(3, 2);
    m(0, 0) = 0.1;
    m(0, 1) = 1.0 / 3.0;
    m(1, 0) = -0.0;
    m(1, 1) = 1e-300;
    m(2, 0) = 12345.678901234567;
    m(2, 1) = -2.2250738585072014e-308;
    const Matrix back = matrix_from_json(nlohmann::json::parse(matrix_json(m).dump()));
    REQUIRE(back.same_shape(m));
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            const double got = back(r, c), want = m(r, c);
            CHECK(std::memcmp(&got, &want, sizeof(double)) == 0);
        }
    }
    CHECK_THROWS_AS(matrix_from_json({{"rows", 2}, {"cols", 2}, {"data", {1.0, 2.0}}}),
                    std::runtime_error);
}

TEST_CASE("ingest_series keeps close and volume, appends RSI, drops the warm-up") {
    const MultivariateSeries ohlcv = tiny_ohlcv(40);
    const MultivariateSeries out = ingest_series(ohlcv, 14);
    REQUIRE(out.channels == std::vector<std::string>{"close", "volume", "rsi"});
    REQUIRE(out.length() == 40 - 14);
    CHECK(out.dates.front() == ohlcv.dates[14]);
    CHECK(out.dates.back() == ohlcv.dates.back());
    for (std::size_t r = 0; r < out.length(); ++r) {
        CHECK(out.values(r, 0) == ohlcv.values(r + 14, 3));
        CHECK(out.values(r, 1) == ohlcv.values(r + 14, 4));
        CHECK(out.values(r, 2) >= 0.0);
        CHECK(out.values(r, 2) <= 100.0);
    }
    CHECK_THROWS_AS(ingest_series(tiny_ohlcv(14), 14), std::invalid_argument);
    CHECK_THROWS_AS(ingest_series(ohlcv, 0), std::invalid_argument);
}

TEST_CASE("csv ingestion failures carry line numbers") {
    const std::string header = "date,open,high,low,close,volume\n";
    CHECK_THROWS_WITH_AS(
        parse_ohlcv_csv(header + "2020-01-02,1,2,0.5,1.5,abc\n", "t.csv"),
        doctest::Contains("t.csv:2:"), std::runtime_error);
    CHECK_THROWS_WITH_AS(
        parse_ohlcv_csv(header + "2020-01-02,1,2,0.5,1.5,10\n2020-01-02,1,2,0.5,1.5,10\n",
                        "t.csv"),
        doctest::Contains("t.csv:3:"), std::runtime_error);
    const MultivariateSeries five = parse_ohlcv_csv(
        header + "2020-01-02,1,2,0.5,1.5,10\n2020-01-03,1,2,0.5,1.6,11\n"
                 "2020-01-06,1,2,0.5,1.4,12\n2020-01-07,1,2,0.5,1.7,13\n"
                 "2020-01-08,1,2,0.5,1.8,14\n",
        "t.csv");
    CHECK(five.length() == 5);
    CHECK(five.dim() == 5);
    CHECK(ingest_series(five, 2).length() == 3);
    CHECK(ingest_series(five, 2).dim() == 3);
}

TEST_CASE("inference prefix matches the training-side transform target") {
    EncoderConfig ecfg;
    ecfg.gamma = 0.8;
    ecfg.L = 100;
    Matrix window(16, 3);
    Rng rng(5);
    for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            window(r, c) = rng.uniform(50.0, 150.0);
        }
    }
    const Matrix prefix = inference_prefix(window, ecfg);
    CHECK(prefix.rows() == 80);
    CHECK(prefix.cols() == 3);
    double lo = 1e9, hi = -1e9;
    for (double v : prefix.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);

    EncoderConfig tiny;
    tiny.gamma = 0.1;
    tiny.L = 10;
    CHECK_THROWS_AS(inference_prefix(window, tiny), std::invalid_argument);
}

TEST_CASE("simpc truth labeling applies the assignment rule with threshold and ties") {
    SimpcConfig cfg;
    cfg.delta = 2.0;
    ClusterSet clusters;
    Matrix rising(20, 2), falling(20, 2);
    for (std::size_t r = 0; r < 20; ++r) {
        rising(r, 0) = double(r) / 19.0;
        rising(r, 1) = 0.5;
        falling(r, 0) = 1.0 - double(r) / 19.0;
        falling(r, 1) = 0.5;
    }
    clusters.centroids = {rising, falling};
    clusters.members = {{}, {}};
    clusters.p_prime = 2;

    Matrix up(20, 2);
    for (std::size_t r = 0; r < 20; ++r) {
        up(r, 0) = 10.0 + 3.0 * double(r); // normalizes onto the rising ramp
        up(r, 1) = 42.0;                   // constant column pins to 0.5
    }
    CHECK(simpc_truth_label(up, clusters, cfg) == 0);

    Matrix down = up;
    for (std::size_t r = 0; r < 20; ++r) {
        down(r, 0) = 100.0 - 2.0 * double(r);
    }
    CHECK(simpc_truth_label(down, clusters, cfg) == 1);

    SimpcConfig strict = cfg;
    strict.delta = 1e-9; // exact match still clears a tiny threshold
    CHECK(simpc_truth_label(up, clusters, strict) == 0);

    Matrix zigzag(20, 2);
    for (std::size_t r = 0; r < 20; ++r) {
        zigzag(r, 0) = (r % 2) ? 1.0 : 0.0;
        zigzag(r, 1) = (r % 3) ? 0.9 : 0.1;
    }
    CHECK(simpc_truth_label(zigzag, clusters, strict) == -1);

    CHECK(simpc_truth_label(up, ClusterSet{}, cfg) == -1);
}

TEST_CASE("end-to-end pipeline: artifacts, determinism, isolation, staleness") {
    const std::string dir = temp_dir("e2e");
    PipelineConfig cfg = smoke_config(dir);
    write_synth_dataset(cfg, cfg.data_path);
    run_pipeline(cfg);

    // every stage artifact exists, carries the hash/seed, and names its deps
    const std::string hash = config_hash(cfg);
    for (const std::string& stage : pipeline_stages()) {
        CAPTURE(stage);
        const Artifact a = load_artifact(stage_artifact_path(cfg, stage));
        CHECK(a.kind == stage);
        CHECK(a.config_hash == hash);
        CHECK(a.rng_seed == cfg.rng_seed);
        std::set<std::string> recorded;
        for (const auto& [up, digest] : a.upstream) {
            CHECK(digest.size() == 16);
            recorded.insert(up);
        }
        const auto& deps = stage_dependencies(stage);
        CHECK(recorded == std::set<std::string>(deps.begin(), deps.end()));
    }

    const Artifact report = load_artifact(stage_artifact_path(cfg, "report"));
    CHECK(report.payload.at("n_trades").get<std::size_t>() > 0);
    CHECK(report.payload.contains("metrics"));
    CHECK(report.payload.contains("baseline_metrics"));
    CHECK(report.payload.contains("confusion"));
    CHECK(report.payload.contains("filter_stats"));
    CHECK(report.payload.at("config").get<std::string>() == emit_config(cfg));
    CHECK(std::filesystem::exists(cfg.out_dir + "/equity_curve.csv"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/trade_returns.csv"));

    const Artifact bt = load_artifact(stage_artifact_path(cfg, "backtest"));
    const std::size_t n_trades = bt.payload.at("trades").size();
    CHECK(n_trades == report.payload.at("n_trades").get<std::size_t>());
    CHECK(bt.payload.at("baseline_trades").size() == n_trades);

    SUBCASE("same seed reruns are byte-identical in canonical form") {
        const std::string first = canonical_artifacts(cfg);
        run_pipeline(cfg);
        CHECK(canonical_artifacts(cfg) == first);
    }

    SUBCASE("a protocol knob reruns backtest alone against existing artifacts") {
        PipelineConfig topx = cfg;
        set_config_key(topx, "backtest.top_x", "50");
        REQUIRE(config_hash(topx) == hash);
        run_stage(topx, "backtest");
        run_stage(topx, "report");
        const Artifact after = load_artifact(stage_artifact_path(topx, "backtest"));
        CHECK(after.payload.at("trades").size() <= n_trades);
        CHECK(after.payload.at("filter_stats").at("grid_points") ==
              bt.payload.at("filter_stats").at("grid_points"));
    }

    SUBCASE("a model knob makes downstream stages refuse stale artifacts") {
        PipelineConfig changed = cfg;
        set_config_key(changed, "simpc.delta", "7.6");
        CHECK_THROWS_WITH_AS(run_stage(changed, "backtest"), doctest::Contains("stale"),
                             std::runtime_error);
        CHECK_THROWS_WITH_AS(run_stage(changed, "train-encoder"), doctest::Contains("stale"),
                             std::runtime_error);
    }

    SUBCASE("a different seed is rejected the same way") {
        PipelineConfig reseeded = cfg;
        set_config_key(reseeded, "run.seed", "77");
        CHECK_THROWS_WITH_AS(run_stage(reseeded, "backtest"), doctest::Contains("stale"),
                             std::runtime_error);
    }

    SUBCASE("an upstream rebuilt behind a downstream artifact is caught") {
        Artifact smooth = load_artifact(stage_artifact_path(cfg, "smooth"));
        smooth.payload["rows_note"] = "edited";
        save_artifact(smooth, stage_artifact_path(cfg, "smooth"));
        CHECK_THROWS_WITH_AS(run_stage(cfg, "backtest"), doctest::Contains("rebuilt"),
                             std::runtime_error);
        run_stage(cfg, "smooth"); // restoring the chain in order clears it
        run_stage(cfg, "prototypes");
        run_stage(cfg, "simpc");
        run_stage(cfg, "train-encoder");
        run_stage(cfg, "shapelets");
        run_stage(cfg, "train-classifier");
        run_stage(cfg, "ks-filter");
        CHECK_NOTHROW(run_stage(cfg, "backtest"));
    }

    SUBCASE("missing dependency names the stage to run") {
        PipelineConfig fresh = cfg;
        fresh.out_dir = dir + "/empty";
        CHECK_THROWS_WITH_AS(run_stage(fresh, "simpc"), doctest::Contains("run stage 'smooth'"),
                             std::runtime_error);
        CHECK_THROWS_AS(run_stage(fresh, "no-such-stage"), std::invalid_argument);
    }
}

TEST_CASE("backtest artifact invariants: grid, filters, confusion, ledger") {
    const std::string dir = temp_dir("btinv");
    PipelineConfig cfg = smoke_config(dir);
    set_config_key(cfg, "backtest.top_x", "60");
    write_synth_dataset(cfg, cfg.data_path);
    run_pipeline(cfg);

    const Artifact bt = load_artifact(stage_artifact_path(cfg, "backtest"));
    const auto grid = bt.payload.at("grid").get<std::vector<std::size_t>>();
    const auto labels = bt.payload.at("labels").get<std::vector<int>>();
    const auto truth = bt.payload.at("truth_labels").get<std::vector<int>>();
    const auto& preds = bt.payload.at("predictions");
    REQUIRE(labels.size() == grid.size());
    REQUIRE(truth.size() == grid.size());
    REQUIRE(preds.size() == grid.size());

    // grid is the documented arithmetic progression
    const std::size_t window = cfg.backtest.window, interval = cfg.backtest.interval;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(grid[i] == window - 1 + i * interval);
    }

    // post-threshold labels never resurrect a masked prediction
    std::size_t traded = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const int pre = preds[i].at("label").get<int>();
        if (pre < 0) {
            CHECK(labels[i] == -1);
        }
        traded += labels[i] >= 0 ? 1 : 0;
    }
    CHECK(traded == bt.payload.at("trades").size());

    // filter stats add up
    const auto& fs = bt.payload.at("filter_stats");
    CHECK(fs.at("grid_points").get<std::size_t>() == grid.size());
    CHECK(fs.at("ks_masked").get<std::size_t>() + fs.at("topx_masked").get<std::size_t>() +
              traded ==
          grid.size());

    // trades match the masked-prediction table and the fee arithmetic
    std::map<std::size_t, std::size_t> slot;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        slot[grid[i]] = i;
    }
    for (const auto& tj : bt.payload.at("trades")) {
        const TradeRecord t = trade_from_json(tj);
        REQUIRE(slot.count(t.open_index));
        const std::size_t i = slot[t.open_index];
        CHECK(t.pattern_label == labels[i]);
        CHECK(t.net_return == doctest::Approx(t.gross_return - 0.002).epsilon(1e-15));
        CHECK(t.exit_date.to_days() - t.open_date.to_days() >= std::int64_t(interval));
    }

    // confusion columns are normalized and never predict a discarded label
    const auto conf_labels = bt.payload.at("confusion").at("labels").get<std::vector<int>>();
    const Matrix norm = matrix_from_json(bt.payload.at("confusion").at("normalized"));
    const Matrix counts = matrix_from_json(bt.payload.at("confusion").at("counts"));
    const PatternClassifier clf =
        classifier_from_json(load_artifact(stage_artifact_path(cfg, "ks-filter"))
                                 .payload.at("classifier"));
    for (std::size_t c = 0; c < norm.cols(); ++c) {
        double col_count = 0.0, col_norm = 0.0;
        for (std::size_t r = 0; r < norm.rows(); ++r) {
            col_count += counts(r, c);
            col_norm += norm(r, c);
        }
        if (col_count > 0.0) {
            CHECK(col_norm == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(clf.discarded.count(conf_labels[c]) == 0);
        }
    }
}
