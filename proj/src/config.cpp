#include "patternforge/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace pf {

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string format_alphas(const std::vector<double>& vs) {
    std::string out;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i) {
            out += ",";
        }
        out += format_double(vs[i]);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    double v = 0.0;
    const char* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a number");
    }
    return v;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    std::int64_t v = 0;
    const char* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw std::invalid_argument("config key '" + key + "': '" + value + "' is not an integer");
    }
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const char* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw std::invalid_argument("config key '" + key + "': '" + value +
                                    "' is not a non-negative integer");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") {
        return true;
    }
    if (value == "false") {
        return false;
    }
    throw std::invalid_argument("config key '" + key + "': expected true or false, got '" +
                                value + "'");
}

Date parse_date(const std::string& key, const std::string& value) {
    try {
        return Date::parse(value);
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("config key '" + key + "': '" + value +
                                    "' is not an ISO date");
    }
}

std::vector<double> parse_alphas(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss(value);
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_double(key, item));
    }
    if (out.empty()) {
        throw std::invalid_argument("config key '" + key + "': empty list");
    }
    return out;
}

struct KeyDesc {
    std::string name;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

std::vector<KeyDesc> build_key_table() {
    std::vector<KeyDesc> keys;
    auto add = [&](std::string name, auto get, auto set) {
        keys.push_back({std::move(name), get, set});
    };
    auto str_key = [&](std::string name, std::string PipelineConfig::* field) {
        add(std::move(name), [field](const PipelineConfig& c) { return c.*field; },
            [field](PipelineConfig& c, const std::string& v) { c.*field = v; });
    };
    auto double_key = [&](std::string name, double PipelineConfig::* field) {
        std::string key = name;
        add(std::move(name),
            [field](const PipelineConfig& c) { return format_double(c.*field); },
            [field, key](PipelineConfig& c, const std::string& v) {
                c.*field = parse_double(key, v);
            });
    };
    auto date_key = [&](std::string name, Date PipelineConfig::* field) {
        std::string key = name;
        add(std::move(name),
            [field](const PipelineConfig& c) { return (c.*field).to_string(); },
            [field, key](PipelineConfig& c, const std::string& v) {
                c.*field = parse_date(key, v);
            });
    };

    str_key("data.path", &PipelineConfig::data_path);
    str_key("data.out_dir", &PipelineConfig::out_dir);
    add("data.rsi_period",
        [](const PipelineConfig& c) { return std::to_string(c.rsi_period); },
        [](PipelineConfig& c, const std::string& v) {
            c.rsi_period = int(parse_int("data.rsi_period", v));
        });

    add("run.seed", [](const PipelineConfig& c) { return std::to_string(c.rng_seed); },
        [](PipelineConfig& c, const std::string& v) { c.rng_seed = parse_uint("run.seed", v); });
    add("run.threads", [](const PipelineConfig& c) { return std::to_string(c.threads); },
        [](PipelineConfig& c, const std::string& v) {
            c.threads = int(parse_int("run.threads", v));
        });

    date_key("split.train_start", &PipelineConfig::train_start);
    date_key("split.train_end", &PipelineConfig::train_end);
    date_key("split.valid_start", &PipelineConfig::valid_start);
    date_key("split.valid_end", &PipelineConfig::valid_end);
    date_key("split.test_start", &PipelineConfig::test_start);
    date_key("split.test_end", &PipelineConfig::test_end);

    double_key("smooth.bandwidth", &PipelineConfig::smooth_bandwidth);

    add("simpc.p", [](const PipelineConfig& c) { return std::to_string(c.simpc.P); },
        [](PipelineConfig& c, const std::string& v) {
            c.simpc.P = std::size_t(parse_uint("simpc.p", v));
        });
    add("simpc.m", [](const PipelineConfig& c) { return std::to_string(c.simpc.m); },
        [](PipelineConfig& c, const std::string& v) {
            c.simpc.m = std::size_t(parse_uint("simpc.m", v));
        });
    add("simpc.delta", [](const PipelineConfig& c) { return format_double(c.simpc.delta); },
        [](PipelineConfig& c, const std::string& v) {
            c.simpc.delta = parse_double("simpc.delta", v);
        });
    add("simpc.kappa", [](const PipelineConfig& c) { return std::to_string(c.simpc.kappa); },
        [](PipelineConfig& c, const std::string& v) {
            c.simpc.kappa = std::size_t(parse_uint("simpc.kappa", v));
        });
    add("simpc.l_min", [](const PipelineConfig& c) { return std::to_string(c.simpc.L_min); },
        [](PipelineConfig& c, const std::string& v) {
            c.simpc.L_min = std::size_t(parse_uint("simpc.l_min", v));
        });
    add("simpc.l_max", [](const PipelineConfig& c) { return std::to_string(c.simpc.L_max); },
        [](PipelineConfig& c, const std::string& v) {
            c.simpc.L_max = std::size_t(parse_uint("simpc.l_max", v));
        });
    add("simpc.iterations",
        [](const PipelineConfig& c) { return std::to_string(c.simpc.iterations); },
        [](PipelineConfig& c, const std::string& v) {
            c.simpc.iterations = int(parse_int("simpc.iterations", v));
        });
    add("simpc.ref_len", [](const PipelineConfig& c) { return std::to_string(c.simpc.ref_len); },
        [](PipelineConfig& c, const std::string& v) {
            c.simpc.ref_len = std::size_t(parse_uint("simpc.ref_len", v));
        });
    add("simpc.dtw_normalize",
        [](const PipelineConfig& c) { return c.simpc.dtw_normalize ? "true" : "false"; },
        [](PipelineConfig& c, const std::string& v) {
            c.simpc.dtw_normalize = parse_bool("simpc.dtw_normalize", v);
        });

    add("encoder.gamma", [](const PipelineConfig& c) { return format_double(c.encoder.gamma); },
        [](PipelineConfig& c, const std::string& v) {
            c.encoder.gamma = parse_double("encoder.gamma", v);
        });
    add("encoder.interp_len", [](const PipelineConfig& c) { return std::to_string(c.encoder.L); },
        [](PipelineConfig& c, const std::string& v) {
            c.encoder.L = std::size_t(parse_uint("encoder.interp_len", v));
        });
    add("encoder.alphas",
        [](const PipelineConfig& c) { return format_alphas(c.encoder.alphas); },
        [](PipelineConfig& c, const std::string& v) {
            c.encoder.alphas = parse_alphas("encoder.alphas", v);
        });
    add("encoder.slice_stride",
        [](const PipelineConfig& c) { return std::to_string(c.encoder.slice_stride); },
        [](PipelineConfig& c, const std::string& v) {
            c.encoder.slice_stride = std::size_t(parse_uint("encoder.slice_stride", v));
        });
    add("encoder.emb_dim",
        [](const PipelineConfig& c) { return std::to_string(c.encoder.emb_dim); },
        [](PipelineConfig& c, const std::string& v) {
            c.encoder.emb_dim = std::size_t(parse_uint("encoder.emb_dim", v));
        });
    add("encoder.conv_channels",
        [](const PipelineConfig& c) { return std::to_string(c.encoder.conv_channels); },
        [](PipelineConfig& c, const std::string& v) {
            c.encoder.conv_channels = std::size_t(parse_uint("encoder.conv_channels", v));
        });
    add("encoder.epochs", [](const PipelineConfig& c) { return std::to_string(c.encoder.epochs); },
        [](PipelineConfig& c, const std::string& v) {
            c.encoder.epochs = int(parse_int("encoder.epochs", v));
        });
    add("encoder.lr", [](const PipelineConfig& c) { return format_double(c.encoder.lr); },
        [](PipelineConfig& c, const std::string& v) {
            c.encoder.lr = parse_double("encoder.lr", v);
        });
    add("encoder.soft_margin",
        [](const PipelineConfig& c) { return format_double(c.encoder.soft_margin); },
        [](PipelineConfig& c, const std::string& v) {
            c.encoder.soft_margin = parse_double("encoder.soft_margin", v);
        });

    add("shapelets.g", [](const PipelineConfig& c) { return std::to_string(c.shapelet_g); },
        [](PipelineConfig& c, const std::string& v) {
            c.shapelet_g = std::size_t(parse_uint("shapelets.g", v));
        });

    add("classifier.c", [](const PipelineConfig& c) { return format_double(c.classifier.C); },
        [](PipelineConfig& c, const std::string& v) {
            c.classifier.C = parse_double("classifier.c", v);
        });
    add("classifier.epochs",
        [](const PipelineConfig& c) { return std::to_string(c.classifier.epochs); },
        [](PipelineConfig& c, const std::string& v) {
            c.classifier.epochs = int(parse_int("classifier.epochs", v));
        });
    add("classifier.softmax_margins",
        [](const PipelineConfig& c) { return c.classifier.softmax_margins ? "true" : "false"; },
        [](PipelineConfig& c, const std::string& v) {
            c.classifier.softmax_margins = parse_bool("classifier.softmax_margins", v);
        });
    add("classifier.eval_fraction",
        [](const PipelineConfig& c) { return format_double(c.eval_fraction); },
        [](PipelineConfig& c, const std::string& v) {
            c.eval_fraction = parse_double("classifier.eval_fraction", v);
        });
    add("classifier.ks_raw_samples",
        [](const PipelineConfig& c) { return c.ks_raw_samples ? "true" : "false"; },
        [](PipelineConfig& c, const std::string& v) {
            c.ks_raw_samples = parse_bool("classifier.ks_raw_samples", v);
        });

    add("backtest.interval",
        [](const PipelineConfig& c) { return std::to_string(c.backtest.interval); },
        [](PipelineConfig& c, const std::string& v) {
            c.backtest.interval = std::size_t(parse_uint("backtest.interval", v));
        });
    add("backtest.window",
        [](const PipelineConfig& c) { return std::to_string(c.backtest.window); },
        [](PipelineConfig& c, const std::string& v) {
            c.backtest.window = std::size_t(parse_uint("backtest.window", v));
        });
    add("backtest.fee", [](const PipelineConfig& c) { return format_double(c.backtest.fee); },
        [](PipelineConfig& c, const std::string& v) {
            c.backtest.fee = parse_double("backtest.fee", v);
        });
    add("backtest.multiplicative_fees",
        [](const PipelineConfig& c) { return c.backtest.multiplicative_fees ? "true" : "false"; },
        [](PipelineConfig& c, const std::string& v) {
            c.backtest.multiplicative_fees = parse_bool("backtest.multiplicative_fees", v);
        });
    add("backtest.top_x", [](const PipelineConfig& c) { return format_double(c.top_x); },
        [](PipelineConfig& c, const std::string& v) {
            c.top_x = parse_double("backtest.top_x", v);
        });

    add("synth.days", [](const PipelineConfig& c) { return std::to_string(c.synth_days); },
        [](PipelineConfig& c, const std::string& v) {
            c.synth_days = std::size_t(parse_uint("synth.days", v));
        });
    add("synth.families",
        [](const PipelineConfig& c) { return std::to_string(c.synth_families); },
        [](PipelineConfig& c, const std::string& v) {
            c.synth_families = int(parse_int("synth.families", v));
        });
    add("synth.seed", [](const PipelineConfig& c) { return std::to_string(c.synth_seed); },
        [](PipelineConfig& c, const std::string& v) {
            c.synth_seed = parse_uint("synth.seed", v);
        });

    return keys;
}

const std::vector<KeyDesc>& key_table() {
    static const std::vector<KeyDesc> keys = build_key_table();
    return keys;
}

const KeyDesc& find_key(const std::string& name) {
    for (const KeyDesc& k : key_table()) {
        if (k.name == name) {
            return k;
        }
    }
    throw std::invalid_argument("unknown config key '" + name + "'");
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) {
        return "";
    }
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

void PipelineConfig::validate() const {
    simpc.validate();
    encoder.validate();
    classifier.validate();
    backtest.validate();
    if (rsi_period < 1) {
        throw std::invalid_argument("data.rsi_period must be at least 1");
    }
    if (threads < 1) {
        throw std::invalid_argument("run.threads must be at least 1");
    }
    if (!(smooth_bandwidth > 0.0)) {
        throw std::invalid_argument("smooth.bandwidth must be positive");
    }
    if (shapelet_g < 1) {
        throw std::invalid_argument("shapelets.g must be at least 1");
    }
    if (!(eval_fraction > 0.0) || eval_fraction >= 1.0) {
        throw std::invalid_argument("classifier.eval_fraction must lie in (0, 1)");
    }
    if (!(top_x > 0.0) || top_x > 100.0) {
        throw std::invalid_argument("backtest.top_x must lie in (0, 100]");
    }
    if (synth_days < 2 || synth_families < 1) {
        throw std::invalid_argument("synth.days/synth.families out of range");
    }
    if (!(train_start <= train_end) || !(valid_start <= valid_end) || !(test_start <= test_end)) {
        throw std::invalid_argument("split ranges must each be ordered");
    }
    if (!(train_end < valid_start) || !(valid_end < test_start)) {
        throw std::invalid_argument("split ranges must be ordered train < valid < test");
    }
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') {
            continue;
        }
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected 'key = value', got '" + stripped + "'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        try {
            find_key(key).set(cfg, value);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": " +
                                        e.what());
        }
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file '" + path + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void set_config_key(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    find_key(key).set(cfg, value);
}

std::string emit_config(const PipelineConfig& cfg) {
    std::string out;
    for (const KeyDesc& k : key_table()) {
        out += k.name + " = " + k.get(cfg) + "\n";
    }
    return out;
}

std::string config_hash(const PipelineConfig& cfg) {
    std::string hashed;
    for (const KeyDesc& k : key_table()) {
        // Protocol knobs (backtest.*), worker count, and artifact location
        // do not change upstream results, so they stay out of the hash.
        if (k.name.rfind("backtest.", 0) == 0 || k.name == "run.threads" ||
            k.name == "data.out_dir") {
            continue;
        }
        hashed += k.name + " = " + k.get(cfg) + "\n";
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)fnv1a64(hashed));
    return std::string(buf);
}

std::vector<std::string> config_key_names() {
    std::vector<std::string> names;
    for (const KeyDesc& k : key_table()) {
        names.push_back(k.name);
    }
    return names;
}

} // namespace pf
