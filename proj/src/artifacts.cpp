#include "patternforge/artifacts.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace pf {

namespace {

using nlohmann::json;

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

json envelope_json(const Artifact& a, bool with_timestamp) {
    json j;
    j["schema_version"] = a.schema_version;
    j["kind"] = a.kind;
    j["config_hash"] = a.config_hash;
    j["rng_seed"] = a.rng_seed;
    j["upstream"] = a.upstream;
    if (with_timestamp) {
        j["created_at"] = a.created_at;
    }
    j["payload"] = a.payload;
    return j;
}

std::string now_iso() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

std::string canonical_dump(const Artifact& artifact) {
    return envelope_json(artifact, false).dump(2);
}

std::string artifact_digest(const Artifact& artifact) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  (unsigned long long)fnv1a64(canonical_dump(artifact)));
    return std::string(buf);
}

void save_artifact(const Artifact& artifact, const std::string& path) {
    Artifact stamped = artifact;
    if (stamped.created_at.empty()) {
        stamped.created_at = now_iso();
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write artifact '" + path + "'");
    }
    out << envelope_json(stamped, true).dump(2) << "\n";
    if (!out) {
        throw std::runtime_error("failed writing artifact '" + path + "'");
    }
}

Artifact load_artifact(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open artifact '" + path + "'");
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("artifact '" + path + "' is not valid JSON: " + e.what());
    }
    Artifact a;
    try {
        a.schema_version = j.at("schema_version").get<int>();
        if (a.schema_version != kArtifactSchemaVersion) {
            throw std::runtime_error("artifact '" + path + "' has schema_version " +
                                     std::to_string(a.schema_version) + ", expected " +
                                     std::to_string(kArtifactSchemaVersion));
        }
        a.kind = j.at("kind").get<std::string>();
        a.config_hash = j.at("config_hash").get<std::string>();
        a.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        a.upstream = j.at("upstream").get<std::map<std::string, std::string>>();
        a.created_at = j.value("created_at", "");
        a.payload = j.at("payload");
    } catch (const json::exception& e) {
        throw std::runtime_error("artifact '" + path + "' is malformed: " + e.what());
    }
    return a;
}

json matrix_json(const Matrix& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = m.data();
    return j;
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols) {
        throw std::runtime_error("matrix payload size mismatch");
    }
    Matrix m(rows, cols);
    m.data() = data;
    return m;
}

json series_json(const MultivariateSeries& s) {
    json j;
    std::vector<std::string> dates;
    dates.reserve(s.dates.size());
    for (const Date& d : s.dates) {
        dates.push_back(d.to_string());
    }
    j["dates"] = dates;
    j["channels"] = s.channels;
    j["values"] = matrix_json(s.values);
    return j;
}

MultivariateSeries series_from_json(const json& j) {
    MultivariateSeries s;
    for (const auto& d : j.at("dates")) {
        s.dates.push_back(Date::parse(d.get<std::string>()));
    }
    s.channels = j.at("channels").get<std::vector<std::string>>();
    s.values = matrix_from_json(j.at("values"));
    s.validate();
    return s;
}

json cluster_set_json(const ClusterSet& cs) {
    json j;
    j["p_prime"] = cs.p_prime;
    json centroids = json::array();
    for (const Matrix& c : cs.centroids) {
        centroids.push_back(matrix_json(c));
    }
    j["centroids"] = centroids;
    json members = json::array();
    for (const auto& cluster : cs.members) {
        json list = json::array();
        for (const ClusterAssignment& a : cluster) {
            list.push_back({{"start", a.start}, {"length", a.length}});
        }
        members.push_back(list);
    }
    j["members"] = members;
    return j;
}

ClusterSet cluster_set_from_json(const json& j) {
    ClusterSet cs;
    cs.p_prime = j.at("p_prime").get<std::size_t>();
    for (const auto& c : j.at("centroids")) {
        cs.centroids.push_back(matrix_from_json(c));
    }
    for (const auto& cluster : j.at("members")) {
        std::vector<ClusterAssignment> list;
        for (const auto& a : cluster) {
            list.push_back({a.at("start").get<std::size_t>(), a.at("length").get<std::size_t>()});
        }
        cs.members.push_back(list);
    }
    return cs;
}

json encoder_params_json(const EncoderParams& p) {
    json j;
    j["input_dim"] = p.input_dim;
    j["head_w"] = matrix_json(p.head_w);
    j["head_b"] = p.head_b;
    json blocks = json::array();
    for (const ConvBlock& b : p.blocks) {
        json jb;
        jb["w"] = matrix_json(b.w);
        jb["bias"] = b.bias;
        jb["proj"] = matrix_json(b.proj);
        jb["in_ch"] = b.in_ch;
        jb["out_ch"] = b.out_ch;
        jb["kernel"] = b.kernel;
        jb["dilation"] = b.dilation;
        blocks.push_back(jb);
    }
    j["blocks"] = blocks;
    return j;
}

EncoderParams encoder_params_from_json(const json& j) {
    EncoderParams p;
    p.input_dim = j.at("input_dim").get<std::size_t>();
    p.head_w = matrix_from_json(j.at("head_w"));
    p.head_b = j.at("head_b").get<std::vector<double>>();
    for (const auto& jb : j.at("blocks")) {
        ConvBlock b;
        b.w = matrix_from_json(jb.at("w"));
        b.bias = jb.at("bias").get<std::vector<double>>();
        b.proj = matrix_from_json(jb.at("proj"));
        b.in_ch = jb.at("in_ch").get<std::size_t>();
        b.out_ch = jb.at("out_ch").get<std::size_t>();
        b.kernel = jb.at("kernel").get<std::size_t>();
        b.dilation = jb.at("dilation").get<std::size_t>();
        p.blocks.push_back(b);
    }
    return p;
}

json shapelet_json(const Shapelet& s) {
    json j;
    j["values"] = matrix_json(s.values);
    j["subsequence"] = s.subsequence;
    j["alpha_index"] = s.alpha_index;
    j["window_start"] = s.window_start;
    j["cluster_size"] = s.cluster_size;
    j["purity"] = s.purity;
    j["utility"] = s.utility;
    return j;
}

Shapelet shapelet_from_json(const json& j) {
    Shapelet s;
    s.values = matrix_from_json(j.at("values"));
    s.subsequence = j.at("subsequence").get<std::size_t>();
    s.alpha_index = j.at("alpha_index").get<std::size_t>();
    s.window_start = j.at("window_start").get<std::size_t>();
    s.cluster_size = j.at("cluster_size").get<std::size_t>();
    s.purity = j.at("purity").get<double>();
    s.utility = j.at("utility").get<double>();
    return s;
}

json classifier_json(const PatternClassifier& c) {
    json j;
    j["labels"] = c.labels;
    j["weights"] = matrix_json(c.weights);
    j["biases"] = c.biases;
    j["platt_a"] = c.platt_a;
    j["platt_b"] = c.platt_b;
    j["feat_mean"] = c.feat_mean;
    j["feat_std"] = c.feat_std;
    j["discarded"] = std::vector<int>(c.discarded.begin(), c.discarded.end());
    j["softmax_margins"] = c.softmax_margins;
    return j;
}

PatternClassifier classifier_from_json(const json& j) {
    PatternClassifier c;
    c.labels = j.at("labels").get<std::vector<int>>();
    c.weights = matrix_from_json(j.at("weights"));
    c.biases = j.at("biases").get<std::vector<double>>();
    c.platt_a = j.at("platt_a").get<std::vector<double>>();
    c.platt_b = j.at("platt_b").get<std::vector<double>>();
    c.feat_mean = j.at("feat_mean").get<std::vector<double>>();
    c.feat_std = j.at("feat_std").get<std::vector<double>>();
    const auto discarded = j.at("discarded").get<std::vector<int>>();
    c.discarded.insert(discarded.begin(), discarded.end());
    c.softmax_margins = j.at("softmax_margins").get<bool>();
    return c;
}

json trade_json(const TradeRecord& t) {
    json j;
    j["open_index"] = t.open_index;
    j["open_date"] = t.open_date.to_string();
    j["exit_date"] = t.exit_date.to_string();
    j["direction"] = direction_str(t.direction);
    j["entry_price"] = t.entry_price;
    j["exit_price"] = t.exit_price;
    j["gross_return"] = t.gross_return;
    j["net_return"] = t.net_return;
    j["pattern_label"] = t.pattern_label;
    j["p_max"] = t.p_max;
    return j;
}

TradeRecord trade_from_json(const json& j) {
    TradeRecord t;
    t.open_index = j.at("open_index").get<std::size_t>();
    t.open_date = Date::parse(j.at("open_date").get<std::string>());
    t.exit_date = Date::parse(j.at("exit_date").get<std::string>());
    t.direction = j.at("direction").get<std::string>() == "long" ? TradeDirection::Long
                                                                 : TradeDirection::Short;
    t.entry_price = j.at("entry_price").get<double>();
    t.exit_price = j.at("exit_price").get<double>();
    t.gross_return = j.at("gross_return").get<double>();
    t.net_return = j.at("net_return").get<double>();
    t.pattern_label = j.at("pattern_label").get<int>();
    t.p_max = j.at("p_max").get<double>();
    return t;
}

json metrics_json(const MetricsReport& m) {
    json j;
    j["f1"] = m.f1;
    j["wlr"] = m.wlr_infinite ? json("inf") : json(m.wlr);
    j["ar"] = m.ar;
    j["trwf"] = m.trwf;
    j["n_trades"] = m.n_trades;
    j["wlr_infinite"] = m.wlr_infinite;
    j["no_trades"] = m.no_trades;
    return j;
}

json confusion_json(const ConfusionMatrix& cm) {
    json j;
    j["labels"] = cm.labels;
    j["counts"] = matrix_json(cm.counts);
    j["normalized"] = matrix_json(cm.normalized);
    return j;
}

} // namespace pf
