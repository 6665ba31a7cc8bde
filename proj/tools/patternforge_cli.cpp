// Command-line front end. Everything goes through the C API in
// patternforge.h; this file deliberately knows nothing about the
// library internals.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "patternforge.h"

namespace {

struct Handle {
    pf_pipeline* p = nullptr;
    Handle() : p(pf_pipeline_create()) {}
    ~Handle() { pf_pipeline_destroy(p); }
};

struct CStr {
    char* p = nullptr;
    ~CStr() { pf_string_free(p); }
};

// Subcommands group the stages a user thinks of as one action: ingest
// covers the smoothing pass over the freshly loaded data, extract is the
// subsequence clustering, and train-classifier includes the label filter
// that decides what the classifier is allowed to predict.
std::vector<std::string> stages_for(const std::string& cmd) {
    if (cmd == "ingest") return {"ingest", "smooth"};
    if (cmd == "prototypes") return {"prototypes"};
    if (cmd == "extract") return {"simpc"};
    if (cmd == "train-encoder") return {"train-encoder"};
    if (cmd == "shapelets") return {"shapelets"};
    if (cmd == "train-classifier") return {"train-classifier", "ks-filter"};
    if (cmd == "backtest") return {"backtest"};
    if (cmd == "report") return {"report"};
    return {};
}

int fail(pf_pipeline* p, int code) {
    std::fprintf(stderr, "error: %s\n", pf_pipeline_last_error(p));
    return code;
}

// Reads one value back out of the canonical config listing.
std::string config_value(pf_pipeline* p, const std::string& key) {
    CStr text;
    if (pf_pipeline_emit_config(p, &text.p) != PF_OK) return "";
    const std::string needle = key + " = ";
    std::string body(text.p);
    size_t pos = body.find(needle);
    if (pos == std::string::npos) return "";
    pos += needle.size();
    const size_t end = body.find('\n', pos);
    return body.substr(pos, end - pos);
}

int run_stages(pf_pipeline* p, const std::vector<std::string>& stages) {
    for (const std::string& stage : stages) {
        const int rc = pf_pipeline_run_stage(p, stage.c_str());
        if (rc != PF_OK) return fail(p, rc);
        CStr path;
        if (pf_pipeline_artifact_path(p, stage.c_str(), &path.p) == PF_OK) {
            std::printf("%-16s wrote %s\n", stage.c_str(), path.p);
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pattern mining and directional forecasting for OHLCV series"};
    app.set_version_flag("--version", pf_version());
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, seed, threads, out_dir, top_x, only_stage;
    app.add_option("--config", config_path, "configuration file (flat dotted keys)")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "override run.seed");
    app.add_option("--threads", threads, "override run.threads");
    app.add_option("--out", out_dir, "override data.out_dir");
    app.add_option("--top-x", top_x, "override backtest.top_x (percent kept)");

    std::string stage_list;
    for (size_t i = 0; i < pf_stage_count(); ++i) {
        stage_list += std::string(i ? ", " : "") + pf_stage_name(i);
    }

    app.add_subcommand("ingest", "load the dataset and smooth the training split");
    app.add_subcommand("prototypes", "detect chart patterns and build seed prototypes");
    app.add_subcommand("extract", "cluster recurring subsequences in the training split");
    app.add_subcommand("train-encoder", "fit the temporal encoder on cluster members");
    app.add_subcommand("shapelets", "pick shapelets from the encoder's latent space");
    app.add_subcommand("train-classifier", "fit and filter the pattern classifier");
    app.add_subcommand("backtest", "trade the test split on filtered predictions");
    app.add_subcommand("report", "write metrics, trade ledger, and plot data");
    auto* run = app.add_subcommand("run", "run every stage in order");
    run->add_option("--stage", only_stage, "run only this stage (" + stage_list + ")");
    auto* synth = app.add_subcommand("synth", "generate the synthetic dataset at data.path");
    app.footer("Environment:\n  PATTERNFORGE_LOG  log level: debug, info, warn, error");

    CLI11_PARSE(app, argc, argv);

    Handle h;
    if (!h.p) {
        std::fprintf(stderr, "error: out of memory\n");
        return PF_ERR_INTERNAL;
    }
    if (!config_path.empty()) {
        const int rc = pf_pipeline_load_config(h.p, config_path.c_str());
        if (rc != PF_OK) return fail(h.p, rc);
    }
    const std::pair<const char*, std::string*> overrides[] = {
        {"run.seed", &seed},
        {"run.threads", &threads},
        {"data.out_dir", &out_dir},
        {"backtest.top_x", &top_x},
    };
    for (const auto& [key, value] : overrides) {
        if (value->empty()) continue;
        const int rc = pf_pipeline_set_option(h.p, key, value->c_str());
        if (rc != PF_OK) return fail(h.p, rc);
    }

    const std::string cmd = app.get_subcommands().front()->get_name();

    if (synth->parsed()) {
        const std::string path = config_value(h.p, "data.path");
        const int rc = pf_pipeline_write_synth(h.p, path.c_str());
        if (rc != PF_OK) return fail(h.p, rc);
        std::printf("synth            wrote %s\n", path.c_str());
        return 0;
    }
    if (run->parsed()) {
        std::vector<std::string> stages;
        if (!only_stage.empty()) {
            stages.push_back(only_stage);
        } else {
            for (size_t i = 0; i < pf_stage_count(); ++i) {
                stages.push_back(pf_stage_name(i));
            }
        }
        return run_stages(h.p, stages);
    }
    return run_stages(h.p, stages_for(cmd));
}
