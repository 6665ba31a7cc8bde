#include "patternforge/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "patternforge/artifacts.hpp"
#include "patternforge/backtest.hpp"
#include "patternforge/classifier.hpp"
#include "patternforge/csv.hpp"
#include "patternforge/encoder.hpp"
#include "patternforge/log.hpp"
#include "patternforge/parallel.hpp"
#include "patternforge/patterns.hpp"
#include "patternforge/rng.hpp"
#include "patternforge/shapelets.hpp"
#include "patternforge/synth.hpp"

namespace pf {

namespace {

using nlohmann::json;

const std::vector<std::string> kStages = {
    "ingest",        "smooth",    "prototypes",       "simpc",     "train-encoder",
    "shapelets",     "train-classifier", "ks-filter", "backtest",  "report",
};

const std::map<std::string, std::vector<std::string>>& dependency_map() {
    static const std::map<std::string, std::vector<std::string>> deps = {
        {"ingest", {}},
        {"smooth", {"ingest"}},
        {"prototypes", {"smooth"}},
        {"simpc", {"smooth", "prototypes"}},
        {"train-encoder", {"smooth", "simpc"}},
        {"shapelets", {"smooth", "simpc", "train-encoder"}},
        {"train-classifier", {"smooth", "simpc", "train-encoder", "shapelets"}},
        {"ks-filter", {"train-classifier"}},
        {"backtest", {"smooth", "simpc", "shapelets", "ks-filter"}},
        {"report", {"ks-filter", "backtest"}},
    };
    return deps;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Loaded dependency artifacts keyed by stage name.
using DepMap = std::map<std::string, Artifact>;

Artifact load_dependency(const PipelineConfig& cfg, const std::string& stage,
                         const std::string& dep, const std::string& hash) {
    const std::string path = stage_artifact_path(cfg, dep);
    Artifact a;
    try {
        a = load_artifact(path);
    } catch (const std::exception& e) {
        throw StaleInputError("stage '" + stage + "' needs the '" + dep +
                                 "' artifact: " + e.what() + "; run stage '" + dep + "' first");
    }
    if (a.kind != dep) {
        throw StaleInputError("artifact '" + path + "' holds kind '" + a.kind +
                                 "', expected '" + dep + "'");
    }
    if (a.config_hash != hash) {
        throw StaleInputError("artifact '" + path + "' is stale: built with config hash " +
                                 a.config_hash + ", current hash is " + hash +
                                 "; rerun upstream stages");
    }
    if (a.rng_seed != cfg.rng_seed) {
        throw StaleInputError("artifact '" + path + "' is stale: built with seed " +
                                 std::to_string(a.rng_seed) + ", current seed is " +
                                 std::to_string(cfg.rng_seed) + "; rerun upstream stages");
    }
    return a;
}

// When two loaded artifacts share an upstream stage, the digest recorded by
// the downstream one must match the artifact actually on disk. Catches an
// upstream rerun that was never propagated.
void cross_check_upstream(const DepMap& loaded) {
    std::map<std::string, std::string> digests;
    for (const auto& [name, art] : loaded) {
        digests[name] = artifact_digest(art);
    }
    for (const auto& [name, art] : loaded) {
        for (const auto& [up, recorded] : art.upstream) {
            const auto it = digests.find(up);
            if (it != digests.end() && it->second != recorded) {
                throw StaleInputError("artifact '" + name + "' was built against a '" + up +
                                         "' artifact that has since been rebuilt; rerun the "
                                         "stages between them in order");
            }
        }
    }
}

MultivariateSeries dep_series(const DepMap& deps, const std::string& stage,
                              const std::string& field) {
    return series_from_json(deps.at(stage).payload.at(field));
}

struct SubsequenceRow {
    std::size_t start = 0;
    std::size_t length = 0;
    int label = -1;
};

// Cluster-major flattening of the SIMPC membership table; the stable order
// every downstream stage relies on.
std::vector<SubsequenceRow> collect_subsequences(const ClusterSet& clusters) {
    std::vector<SubsequenceRow> rows;
    for (std::size_t c = 0; c < clusters.members.size(); ++c) {
        for (const ClusterAssignment& a : clusters.members[c]) {
            rows.push_back({a.start, a.length, int(c)});
        }
    }
    return rows;
}

std::vector<Segment> cut_all(const MultivariateSeries& series,
                             const std::vector<SubsequenceRow>& rows) {
    std::vector<Segment> segs;
    segs.reserve(rows.size());
    for (const SubsequenceRow& r : rows) {
        segs.push_back(cut_segment(series, r.start, r.length));
    }
    return segs;
}

json subsequence_table_json(const std::vector<SubsequenceRow>& rows) {
    json out = json::array();
    for (const SubsequenceRow& r : rows) {
        out.push_back({{"start", r.start}, {"length", r.length}, {"label", r.label}});
    }
    return out;
}

// ---- stage bodies ---------------------------------------------------------

json stage_ingest(const PipelineConfig& cfg, const DepMap&) {
    const MultivariateSeries ohlcv = read_ohlcv_csv(cfg.data_path);
    const MultivariateSeries series = ingest_series(ohlcv, cfg.rsi_period);
    log::info("ingest: " + std::to_string(ohlcv.length()) + " rows -> " +
              std::to_string(series.length()) + " after RSI warm-up");
    json payload;
    payload["source"] = cfg.data_path;
    payload["rows_in"] = ohlcv.length();
    payload["series"] = series_json(series);
    return payload;
}

json stage_smooth(const PipelineConfig& cfg, const DepMap& deps) {
    const MultivariateSeries series = dep_series(deps, "ingest", "series");
    const std::array<DateRange, 3> ranges = {
        DateRange{cfg.train_start, cfg.train_end},
        DateRange{cfg.valid_start, cfg.valid_end},
        DateRange{cfg.test_start, cfg.test_end},
    };
    const SplitResult split = split_by_dates(series, ranges);
    if (split.train.length() == 0) {
        throw std::runtime_error("training split is empty; check the split.* dates against '" +
                                 cfg.data_path + "'");
    }
    const MultivariateSeries train_smooth = kernel_smooth(split.train, {cfg.smooth_bandwidth});
    log::info("smooth: train " + std::to_string(split.train.length()) + ", valid " +
              std::to_string(split.valid.length()) + ", test " +
              std::to_string(split.test.length()) + " rows");
    json payload;
    payload["train_raw"] = series_json(split.train);
    payload["train_smooth"] = series_json(train_smooth);
    payload["valid_raw"] = series_json(split.valid);
    payload["test_raw"] = series_json(split.test);
    return payload;
}

json stage_prototypes(const PipelineConfig& cfg, const DepMap& deps) {
    const MultivariateSeries train_raw = dep_series(deps, "smooth", "train_raw");
    const MultivariateSeries train_smooth = dep_series(deps, "smooth", "train_smooth");
    const std::vector<double> close = train_raw.values.col(train_raw.channel_index("close"));
    const std::vector<PatternDetection> detections = scan_windows(close, 15, 35, cfg.threads);

    // Instances live in the same space SIMPC matches in: the smoothed
    // series, resampled to the centroid length and min-max scaled.
    static const PatternName kNames[] = {PatternName::HS,   PatternName::IHS, PatternName::BTOP,
                                         PatternName::BBOT, PatternName::TTOP, PatternName::TBOT};
    std::vector<PatternGroup> groups;
    for (PatternName name : kNames) {
        groups.push_back({name, {}});
    }
    for (const PatternDetection& det : detections) {
        Matrix inst = cut_segment(train_smooth, det.start, det.length).values;
        inst = minmax_normalize(resample_linear(inst, cfg.simpc.ref_len));
        for (PatternGroup& g : groups) {
            if (g.name == det.name) {
                g.instances.push_back(std::move(inst));
                break;
            }
        }
    }
    const std::vector<PatternPrototype> protos = build_prototypes(groups, cfg.threads);
    log::info("prototypes: " + std::to_string(detections.size()) + " detections -> " +
              std::to_string(protos.size()) + " prototypes");

    json payload;
    payload["detections"] = detections.size();
    json list = json::array();
    for (const PatternPrototype& p : protos) {
        list.push_back({{"name", pattern_name_str(p.name)},
                        {"instance_count", p.instance_count},
                        {"values", matrix_json(p.values)}});
    }
    payload["prototypes"] = list;
    return payload;
}

json stage_simpc(const PipelineConfig& cfg, const DepMap& deps) {
    const MultivariateSeries train_smooth = dep_series(deps, "smooth", "train_smooth");
    const json& protos = deps.at("prototypes").payload.at("prototypes");

    std::vector<Matrix> seeds;
    std::vector<std::string> seed_names;
    for (const auto& p : protos) {
        if (seeds.size() >= cfg.simpc.m) {
            break;
        }
        seeds.push_back(matrix_from_json(p.at("values")));
        seed_names.push_back(p.at("name").get<std::string>());
    }
    if (seeds.size() < cfg.simpc.m) {
        log::warn("simpc: only " + std::to_string(seeds.size()) + " prototype seeds available (m=" +
                  std::to_string(cfg.simpc.m) + "); the rest are drawn from the series");
    }

    SimpcConfig scfg = cfg.simpc;
    scfg.threads = cfg.threads;
    scfg.m = seeds.size();
    Rng rng = substream(cfg.rng_seed, "simpc");
    const SimpcResult result = run_simpc(train_smooth, seeds, scfg, rng);

    std::size_t total_members = 0;
    for (const auto& members : result.clusters.members) {
        total_members += members.size();
    }
    log::info("simpc: P'=" + std::to_string(result.clusters.p_prime) + " clusters, " +
              std::to_string(total_members) + " member segments");

    json payload;
    payload["seed_names"] = seed_names;
    payload["clusters"] = cluster_set_json(result.clusters);
    json iters = json::array();
    for (const SimpcIterationDiag& it : result.diagnostics.iterations) {
        iters.push_back({{"cluster_sizes", it.cluster_sizes},
                         {"dropped", it.dropped},
                         {"replenished", it.replenished}});
    }
    payload["diagnostics"] = {{"iterations", iters},
                              {"avg_pairwise_distance", result.diagnostics.avg_pairwise_distance},
                              {"min_pairwise_distance", result.diagnostics.min_pairwise_distance}};
    return payload;
}

json stage_train_encoder(const PipelineConfig& cfg, const DepMap& deps) {
    const MultivariateSeries train_smooth = dep_series(deps, "smooth", "train_smooth");
    const ClusterSet clusters = cluster_set_from_json(deps.at("simpc").payload.at("clusters"));
    const std::vector<SubsequenceRow> rows = collect_subsequences(clusters);
    if (rows.empty()) {
        throw std::runtime_error("no pattern subsequences to train the encoder on; the "
                                 "clustering stage produced empty clusters");
    }
    const std::vector<Segment> segs = cut_all(train_smooth, rows);

    EncoderConfig ecfg = cfg.encoder;
    ecfg.rng_seed = substream_seed(cfg.rng_seed, "encoder");
    ecfg.threads = cfg.threads;
    const TrainedEncoder trained = train_encoder(segs, ecfg);
    log::info("train-encoder: " + std::to_string(rows.size()) + " subsequences, final loss " +
              format_double(trained.loss_trace.empty() ? 0.0 : trained.loss_trace.back()));

    json payload;
    payload["subsequences"] = subsequence_table_json(rows);
    payload["params"] = encoder_params_json(trained.params);
    payload["loss_trace"] = trained.loss_trace;
    return payload;
}

json stage_shapelets(const PipelineConfig& cfg, const DepMap& deps) {
    const MultivariateSeries train_smooth = dep_series(deps, "smooth", "train_smooth");
    const ClusterSet clusters = cluster_set_from_json(deps.at("simpc").payload.at("clusters"));
    const EncoderParams params =
        encoder_params_from_json(deps.at("train-encoder").payload.at("params"));

    const std::vector<SubsequenceRow> rows = collect_subsequences(clusters);
    const std::vector<Segment> segs = cut_all(train_smooth, rows);
    std::vector<int> labels;
    labels.reserve(rows.size());
    for (const SubsequenceRow& r : rows) {
        labels.push_back(r.label);
    }

    EncoderConfig ecfg = cfg.encoder;
    ecfg.threads = cfg.threads;
    const LatentCloud cloud = build_latent_cloud(params, segs, labels, ecfg);
    Rng rng = substream(cfg.rng_seed, "shapelets");
    const std::vector<CandidateCluster> cands =
        cluster_candidates(cloud, cfg.shapelet_g, rng, 50, cfg.threads);
    const std::vector<Shapelet> bank = score_and_filter(cloud, cands, clusters.p_prime);
    if (bank.empty()) {
        throw std::runtime_error("no shapelet candidate cleared the purity threshold 1/" +
                                 std::to_string(clusters.p_prime) +
                                 "; the latent clusters are unseparated");
    }
    log::info("shapelets: " + std::to_string(cloud.points.size()) + " latent points -> " +
              std::to_string(bank.size()) + " shapelets");

    json payload;
    payload["cloud_size"] = cloud.points.size();
    payload["p_prime"] = clusters.p_prime;
    json list = json::array();
    for (const Shapelet& s : bank) {
        list.push_back(shapelet_json(s));
    }
    payload["bank"] = list;
    return payload;
}

json stage_train_classifier(const PipelineConfig& cfg, const DepMap& deps) {
    const MultivariateSeries train_smooth = dep_series(deps, "smooth", "train_smooth");
    const ClusterSet clusters = cluster_set_from_json(deps.at("simpc").payload.at("clusters"));
    const EncoderParams params =
        encoder_params_from_json(deps.at("train-encoder").payload.at("params"));
    std::vector<Shapelet> bank;
    for (const auto& s : deps.at("shapelets").payload.at("bank")) {
        bank.push_back(shapelet_from_json(s));
    }

    std::vector<SubsequenceRow> rows = collect_subsequences(clusters);
    std::sort(rows.begin(), rows.end(), [](const SubsequenceRow& a, const SubsequenceRow& b) {
        return a.start != b.start ? a.start < b.start : a.length < b.length;
    });
    const std::vector<Segment> segs = cut_all(train_smooth, rows);

    EncoderConfig ecfg = cfg.encoder;
    std::vector<std::vector<double>> features(segs.size());
    parallel_for(segs.size(), cfg.threads, [&](std::size_t i) {
        features[i] = featurize(prefix_and_interpolate(segs[i], ecfg), bank);
    });

    // The filter-fitting split is the time-wise tail of the training
    // subsequences; the classifier itself never sees it.
    const std::size_t n = rows.size();
    const std::size_t n_eval =
        std::max<std::size_t>(1, std::size_t(std::floor(cfg.eval_fraction * double(n))));
    if (n_eval >= n) {
        throw std::runtime_error("train-classifier: " + std::to_string(n) +
                                 " subsequences leave nothing to train on after holding out " +
                                 std::to_string(n_eval));
    }
    const std::size_t n_train = n - n_eval;

    std::vector<std::vector<double>> train_feats(features.begin(), features.begin() + n_train);
    std::vector<int> train_labels;
    train_labels.reserve(n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
        train_labels.push_back(rows[i].label);
    }

    ClassifierConfig ccfg = cfg.classifier;
    ccfg.rng_seed = substream_seed(cfg.rng_seed, "classifier");
    ccfg.threads = cfg.threads;
    const PatternClassifier clf = train_classifier(train_feats, train_labels, ccfg);

    json eval = json::array();
    std::size_t eval_correct = 0;
    for (std::size_t i = n_train; i < n; ++i) {
        const Prediction pred = predict(clf, features[i]);
        eval.push_back({{"predicted", pred.label}, {"p_max", pred.p_max}, {"truth", rows[i].label}});
        eval_correct += pred.label == rows[i].label ? 1 : 0;
    }
    log::info("train-classifier: " + std::to_string(n_train) + " train / " +
              std::to_string(n_eval) + " eval subsequences, eval accuracy " +
              format_double(double(eval_correct) / double(n_eval)));

    json payload;
    payload["n_train"] = n_train;
    payload["n_eval"] = n_eval;
    payload["feature_dim"] = bank.size();
    payload["classifier"] = classifier_json(clf);
    payload["eval"] = eval;
    return payload;
}

json stage_ks_filter(const PipelineConfig& cfg, const DepMap& deps) {
    const json& up = deps.at("train-classifier").payload;
    PatternClassifier clf = classifier_from_json(up.at("classifier"));
    std::vector<EvalPrediction> eval;
    for (const auto& e : up.at("eval")) {
        eval.push_back({e.at("predicted").get<int>(), e.at("p_max").get<double>(),
                        e.at("truth").get<int>()});
    }

    const KsReport report = ks_label_filter(clf, eval, cfg.ks_raw_samples);
    log::info("ks-filter: " + std::to_string(clf.discarded.size()) + " of " +
              std::to_string(clf.labels.size()) + " labels discarded");

    json payload;
    payload["classifier"] = classifier_json(clf);
    json decisions = json::array();
    for (const KsLabelDecision& d : report.labels) {
        decisions.push_back({{"label", d.label},
                             {"n_correct", d.n_correct},
                             {"n_incorrect", d.n_incorrect},
                             {"d_stat", d.d_stat},
                             {"p_value", d.p_value},
                             {"kept", d.kept}});
    }
    payload["decisions"] = decisions;
    payload["n_labels"] = clf.labels.size();
    payload["n_discarded"] = clf.discarded.size();
    return payload;
}

json stage_backtest(const PipelineConfig& cfg, const DepMap& deps) {
    const MultivariateSeries test_raw = dep_series(deps, "smooth", "test_raw");
    const ClusterSet clusters = cluster_set_from_json(deps.at("simpc").payload.at("clusters"));
    std::vector<Shapelet> bank;
    for (const auto& s : deps.at("shapelets").payload.at("bank")) {
        bank.push_back(shapelet_from_json(s));
    }
    const PatternClassifier clf =
        classifier_from_json(deps.at("ks-filter").payload.at("classifier"));

    const BacktestConfig bcfg = cfg.backtest;
    const std::vector<std::size_t> grid = protocol_grid(test_raw, bcfg);
    const std::size_t close_col = test_raw.length() ? test_raw.channel_index("close") : 0;

    // One prediction per grid point, computed up front so the confidence
    // threshold sees the whole run at once.
    std::vector<Prediction> preds(grid.size());
    parallel_for(grid.size(), cfg.threads, [&](std::size_t i) {
        const std::size_t t = grid[i];
        const Matrix window = test_raw.values.slice_rows(t + 1 - bcfg.window, bcfg.window);
        preds[i] = predict(clf, featurize(inference_prefix(window, cfg.encoder), bank));
    });
    const std::vector<Prediction> kept = apply_confidence_threshold(preds, cfg.top_x);

    std::unordered_map<std::size_t, const Prediction*> by_entry;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        by_entry[grid[i]] = &kept[i];
    }
    const TradeDecider decide = [&](const Matrix&, std::size_t entry) {
        const Prediction* p = by_entry.at(entry);
        if (p->label < 0) {
            return std::optional<TradeSignal>{};
        }
        if (std::size_t(p->label) >= clusters.centroids.size()) {
            throw std::runtime_error("predicted label " + std::to_string(p->label) +
                                     " has no centroid; artifacts are inconsistent");
        }
        const TradeDirection dir =
            infer_direction(clusters.centroids[p->label], cfg.encoder.gamma, close_col);
        return std::optional<TradeSignal>{TradeSignal{dir, p->label, p->p_max}};
    };
    const std::vector<TradeRecord> trades =
        run_protocol(test_raw, decide, bcfg, cfg.threads, close_col);

    const std::vector<double> close =
        test_raw.length() ? test_raw.values.col(close_col) : std::vector<double>{};
    const auto truth_of = [&](const TradeRecord& t) {
        return truth_direction(close[t.open_index], close[t.open_index + bcfg.interval]);
    };
    std::vector<TradeDirection> truths;
    truths.reserve(trades.size());
    for (const TradeRecord& t : trades) {
        truths.push_back(truth_of(t));
    }
    const MetricsReport metrics = compute_metrics(trades, truths);

    // Pattern-label truth per grid point: the clustering assignment rule on
    // the full pattern span (window plus holding horizon), taken from the
    // smoothed test series since that is the space the centroids live in.
    std::vector<int> truth_labels(grid.size(), -1);
    if (!grid.empty()) {
        const MultivariateSeries test_smooth = kernel_smooth(test_raw, {cfg.smooth_bandwidth});
        parallel_for(grid.size(), cfg.threads, [&](std::size_t i) {
            const std::size_t t = grid[i];
            const Matrix span =
                test_smooth.values.slice_rows(t + 1 - bcfg.window, bcfg.window + bcfg.interval);
            truth_labels[i] = simpc_truth_label(span, clusters, cfg.simpc);
        });
    }
    std::vector<int> pred_labels;
    pred_labels.reserve(grid.size());
    for (const Prediction& p : kept) {
        pred_labels.push_back(p.label);
    }
    const ConfusionMatrix confusion = build_confusion(truth_labels, pred_labels);

    Rng baseline_rng = substream(cfg.rng_seed, "backtest.random");
    const std::vector<TradeRecord> baseline =
        random_baseline(test_raw, trades.size(), bcfg, baseline_rng, close_col);
    std::vector<TradeDirection> baseline_truths;
    baseline_truths.reserve(baseline.size());
    for (const TradeRecord& t : baseline) {
        baseline_truths.push_back(truth_of(t));
    }
    const MetricsReport baseline_metrics = compute_metrics(baseline, baseline_truths);

    std::size_t ks_masked = 0, topx_masked = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (preds[i].label < 0) {
            ++ks_masked;
        } else if (kept[i].label < 0) {
            ++topx_masked;
        }
    }
    log::info("backtest: " + std::to_string(grid.size()) + " grid points, " +
              std::to_string(trades.size()) + " trades, TRwf " + format_double(metrics.trwf));

    json payload;
    payload["grid"] = grid;
    json pre = json::array();
    for (const Prediction& p : preds) {
        pre.push_back({{"label", p.label}, {"p_max", p.p_max}});
    }
    payload["predictions"] = pre;
    payload["labels"] = pred_labels;
    payload["truth_labels"] = truth_labels;
    json ledger = json::array();
    for (const TradeRecord& t : trades) {
        ledger.push_back(trade_json(t));
    }
    payload["trades"] = ledger;
    payload["metrics"] = metrics_json(metrics);
    json baseline_ledger = json::array();
    for (const TradeRecord& t : baseline) {
        baseline_ledger.push_back(trade_json(t));
    }
    payload["baseline_trades"] = baseline_ledger;
    payload["baseline_metrics"] = metrics_json(baseline_metrics);
    payload["confusion"] = confusion_json(confusion);
    const double denom = grid.empty() ? 1.0 : double(grid.size());
    payload["filter_stats"] = {{"grid_points", grid.size()},
                               {"ks_masked", ks_masked},
                               {"topx_masked", topx_masked},
                               {"ks_masked_fraction", double(ks_masked) / denom},
                               {"topx_masked_fraction", double(topx_masked) / denom},
                               {"traded", trades.size()}};
    return payload;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write '" + path + "'");
    }
    out << text;
    if (!out) {
        throw std::runtime_error("failed writing '" + path + "'");
    }
}

json stage_report(const PipelineConfig& cfg, const DepMap& deps) {
    const json& bt = deps.at("backtest").payload;
    const json& ks = deps.at("ks-filter").payload;

    std::string equity = "date,equity\n";
    std::string returns = "open_date,exit_date,direction,pattern_label,p_max,gross_return,net_return\n";
    double running = 0.0;
    for (const auto& j : bt.at("trades")) {
        const TradeRecord t = trade_from_json(j);
        running += t.net_return;
        equity += t.exit_date.to_string() + "," + format_double(running) + "\n";
        returns += t.open_date.to_string() + "," + t.exit_date.to_string() + "," +
                   direction_str(t.direction) + "," + std::to_string(t.pattern_label) + "," +
                   format_double(t.p_max) + "," + format_double(t.gross_return) + "," +
                   format_double(t.net_return) + "\n";
    }
    const std::string equity_path = cfg.out_dir + "/equity_curve.csv";
    const std::string returns_path = cfg.out_dir + "/trade_returns.csv";
    write_text_file(equity_path, equity);
    write_text_file(returns_path, returns);

    json payload;
    payload["metrics"] = bt.at("metrics");
    payload["baseline_metrics"] = bt.at("baseline_metrics");
    payload["n_trades"] = bt.at("trades").size();
    payload["trades"] = bt.at("trades");
    payload["confusion"] = bt.at("confusion");
    payload["filter_stats"] = bt.at("filter_stats");
    payload["ks_decisions"] = ks.at("decisions");
    payload["config"] = emit_config(cfg);
    payload["plot_files"] = {equity_path, returns_path};
    log::info("report: wrote " + equity_path + " and " + returns_path);
    return payload;
}

using StageFn = json (*)(const PipelineConfig&, const DepMap&);

const std::map<std::string, StageFn>& stage_table() {
    static const std::map<std::string, StageFn> table = {
        {"ingest", stage_ingest},
        {"smooth", stage_smooth},
        {"prototypes", stage_prototypes},
        {"simpc", stage_simpc},
        {"train-encoder", stage_train_encoder},
        {"shapelets", stage_shapelets},
        {"train-classifier", stage_train_classifier},
        {"ks-filter", stage_ks_filter},
        {"backtest", stage_backtest},
        {"report", stage_report},
    };
    return table;
}

} // namespace

const std::vector<std::string>& pipeline_stages() { return kStages; }

const std::vector<std::string>& stage_dependencies(const std::string& stage) {
    const auto it = dependency_map().find(stage);
    if (it == dependency_map().end()) {
        throw std::invalid_argument("unknown stage '" + stage + "'");
    }
    return it->second;
}

std::string stage_artifact_path(const PipelineConfig& cfg, const std::string& stage) {
    return cfg.out_dir + "/" + stage + ".json";
}

void run_stage(const PipelineConfig& cfg, const std::string& stage) {
    cfg.validate();
    const auto fn = stage_table().find(stage);
    if (fn == stage_table().end()) {
        throw std::invalid_argument("unknown stage '" + stage + "'");
    }
    std::filesystem::create_directories(cfg.out_dir);

    const std::string hash = config_hash(cfg);
    DepMap deps;
    for (const std::string& dep : stage_dependencies(stage)) {
        deps.emplace(dep, load_dependency(cfg, stage, dep, hash));
    }
    cross_check_upstream(deps);

    Artifact artifact;
    artifact.kind = stage;
    artifact.config_hash = hash;
    artifact.rng_seed = cfg.rng_seed;
    for (const auto& [name, art] : deps) {
        artifact.upstream[name] = artifact_digest(art);
    }
    artifact.payload = fn->second(cfg, deps);
    save_artifact(artifact, stage_artifact_path(cfg, stage));
}

void run_pipeline(const PipelineConfig& cfg) {
    for (const std::string& stage : kStages) {
        run_stage(cfg, stage);
    }
}

MultivariateSeries ingest_series(const MultivariateSeries& ohlcv, int rsi_period) {
    if (rsi_period < 1) {
        throw std::invalid_argument("rsi period must be at least 1");
    }
    const std::vector<double> close = ohlcv.values.col(ohlcv.channel_index("close"));
    const std::vector<double> volume = ohlcv.values.col(ohlcv.channel_index("volume"));
    const RsiResult rsi = compute_rsi(close, rsi_period);
    if (ohlcv.length() <= rsi.warmup) {
        throw std::runtime_error("series has " + std::to_string(ohlcv.length()) +
                                 " rows, all consumed by the RSI warm-up (" +
                                 std::to_string(rsi.warmup) + ")");
    }
    MultivariateSeries out;
    out.channels = {"close", "volume", "rsi"};
    const std::size_t n = ohlcv.length() - rsi.warmup;
    out.values = Matrix(n, 3);
    out.dates.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t src = r + rsi.warmup;
        out.dates.push_back(ohlcv.dates[src]);
        out.values(r, 0) = close[src];
        out.values(r, 1) = volume[src];
        out.values(r, 2) = rsi.values[src];
    }
    out.validate();
    return out;
}

Matrix inference_prefix(const Matrix& raw_window, const EncoderConfig& cfg) {
    const auto target = std::size_t(std::llround(cfg.gamma * double(cfg.L)));
    if (target < 2) {
        throw std::invalid_argument("inference prefix would have fewer than 2 rows");
    }
    return minmax_normalize(resample_linear(raw_window, target));
}

int simpc_truth_label(const Matrix& window, const ClusterSet& clusters, const SimpcConfig& cfg) {
    if (clusters.centroids.empty() || window.rows() < 2) {
        return -1;
    }
    const Matrix norm = minmax_normalize(window);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < clusters.centroids.size(); ++c) {
        const double d = assignment_distance(norm, clusters.centroids[c], cfg.dtw_normalize);
        if (d < best_d) {
            best_d = d;
            best = int(c);
        }
    }
    return best_d <= scale_delta(cfg.delta, window.cols()) ? best : -1;
}

void write_synth_dataset(const PipelineConfig& cfg, const std::string& csv_path) {
    OhlcvSynthConfig sc;
    sc.days = cfg.synth_days;
    sc.families = cfg.synth_families;
    const MultivariateSeries series = synth_ohlcv_series(sc, cfg.synth_seed);
    write_ohlcv_csv(series, csv_path);
    log::info("synth: wrote " + std::to_string(series.length()) + " rows to " + csv_path);
}

} // namespace pf
