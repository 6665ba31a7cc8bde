#include "patternforge/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "patternforge/dtw.hpp"
#include "patternforge/log.hpp"
#include "patternforge/parallel.hpp"

namespace pf {

namespace {

constexpr double kKsAlpha = 0.05;
constexpr std::size_t kKsBins = 100;

double sigmoid_ab(double f, double a, double b) {
    const double z = a * f + b;
    if (z >= 0.0) {
        return std::exp(-z) / (1.0 + std::exp(-z));
    }
    return 1.0 / (1.0 + std::exp(z));
}

// Platt scaling fit by the guarded Newton iteration of Lin, Lin and Weng.
// Targets are the usual smoothed (N+1)/(N+2) and 1/(N+2) frequencies.
void fit_platt(const std::vector<double>& decisions, const std::vector<int>& targets, double& a,
               double& b) {
    const std::size_t n = decisions.size();
    double prior1 = 0.0, prior0 = 0.0;
    for (int t : targets) {
        (t > 0 ? prior1 : prior0) += 1.0;
    }
    const double hi = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo = 1.0 / (prior0 + 2.0);

    const int max_iter = 100;
    const double min_step = 1e-10;
    const double ridge = 1e-12;
    const double eps = 1e-5;

    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = targets[i] > 0 ? hi : lo;
    }

    a = 0.0;
    b = std::log((prior0 + 1.0) / (prior1 + 1.0));
    double fval = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = a * decisions[i] + b;
        if (z >= 0.0) {
            fval += t[i] * z + std::log1p(std::exp(-z));
        } else {
            fval += (t[i] - 1.0) * z + std::log1p(std::exp(z));
        }
    }

    for (int it = 0; it < max_iter; ++it) {
        double h11 = ridge, h22 = ridge, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = a * decisions[i] + b;
            double p, q;
            if (z >= 0.0) {
                p = std::exp(-z) / (1.0 + std::exp(-z));
                q = 1.0 / (1.0 + std::exp(-z));
            } else {
                p = 1.0 / (1.0 + std::exp(z));
                q = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d2 = p * q;
            h11 += decisions[i] * decisions[i] * d2;
            h22 += d2;
            h21 += decisions[i] * d2;
            const double d1 = t[i] - p;
            g1 += decisions[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < eps && std::abs(g2) < eps) {
            break;
        }
        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;

        double step = 1.0;
        bool moved = false;
        while (step >= min_step) {
            const double na = a + step * da;
            const double nb = b + step * db;
            double nf = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double z = na * decisions[i] + nb;
                if (z >= 0.0) {
                    nf += t[i] * z + std::log1p(std::exp(-z));
                } else {
                    nf += (t[i] - 1.0) * z + std::log1p(std::exp(z));
                }
            }
            if (nf < fval + 1e-4 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) {
            log::warn("platt line search stalled, keeping current fit");
            break;
        }
    }
}

std::vector<double> standardize(const PatternClassifier& clf, const std::vector<double>& phi) {
    std::vector<double> z(phi.size());
    for (std::size_t j = 0; j < phi.size(); ++j) {
        z[j] = (phi[j] - clf.feat_mean[j]) / clf.feat_std[j];
    }
    return z;
}

double kolmogorov_p(double lambda) {
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 1000; ++j) {
        const double term = std::exp(-2.0 * double(j) * double(j) * lambda * lambda);
        sum += sign * term;
        sign = -sign;
        if (term < 1e-16) {
            break;
        }
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

} // namespace

void ClassifierConfig::validate() const {
    if (!(C > 0.0)) {
        throw std::invalid_argument("classifier C must be positive");
    }
    if (epochs < 1) {
        throw std::invalid_argument("classifier epochs must be at least 1");
    }
    if (threads < 1) {
        throw std::invalid_argument("classifier threads must be at least 1");
    }
}

std::vector<double> featurize(const Matrix& prefix, const std::vector<Shapelet>& bank) {
    if (prefix.rows() == 0 || prefix.cols() == 0) {
        throw std::domain_error("featurize needs a non-empty prefix");
    }
    std::vector<double> phi(bank.size(), 0.0);
    for (std::size_t s = 0; s < bank.size(); ++s) {
        const Matrix shape = bank[s].values.transposed(); // to time-major
        const std::size_t len = shape.rows();
        if (shape.cols() != prefix.cols()) {
            throw std::domain_error("featurize: shapelet channel count differs from prefix");
        }
        if (len == 0 || len > prefix.rows()) {
            throw std::domain_error("featurize: prefix shorter than shapelet");
        }
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t + len <= prefix.rows(); ++t) {
            best = std::min(best, dtw_cost(prefix.slice_rows(t, len), shape));
        }
        phi[s] = best;
    }
    return phi;
}

PatternClassifier train_classifier(const std::vector<std::vector<double>>& features,
                                   const std::vector<int>& labels, const ClassifierConfig& cfg) {
    cfg.validate();
    if (features.empty() || features.size() != labels.size()) {
        throw std::invalid_argument("train_classifier: features and labels must align");
    }
    const std::size_t n = features.size();
    const std::size_t d = features[0].size();
    if (d == 0) {
        throw std::invalid_argument("train_classifier: empty feature vectors");
    }
    for (const auto& f : features) {
        if (f.size() != d) {
            throw std::invalid_argument("train_classifier: inconsistent feature dimensions");
        }
    }
    std::map<int, std::size_t> counts;
    for (int l : labels) {
        ++counts[l];
    }
    if (counts.size() < 2) {
        throw std::invalid_argument("train_classifier needs at least two distinct labels");
    }
    for (const auto& [label, cnt] : counts) {
        if (cnt < 2) {
            throw std::invalid_argument("train_classifier needs at least two samples per label");
        }
    }

    PatternClassifier clf;
    clf.softmax_margins = cfg.softmax_margins;
    for (const auto& [label, cnt] : counts) {
        clf.labels.push_back(label);
    }

    // Standardize so the fixed step schedule behaves across feature scales.
    clf.feat_mean.assign(d, 0.0);
    clf.feat_std.assign(d, 0.0);
    for (const auto& f : features) {
        for (std::size_t j = 0; j < d; ++j) {
            clf.feat_mean[j] += f[j];
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        clf.feat_mean[j] /= double(n);
    }
    for (const auto& f : features) {
        for (std::size_t j = 0; j < d; ++j) {
            const double c = f[j] - clf.feat_mean[j];
            clf.feat_std[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        clf.feat_std[j] = std::sqrt(clf.feat_std[j] / double(n));
        if (clf.feat_std[j] < 1e-12) {
            clf.feat_std[j] = 1.0;
        }
    }
    Matrix x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            x(i, j) = (features[i][j] - clf.feat_mean[j]) / clf.feat_std[j];
        }
    }

    const std::size_t n_labels = clf.labels.size();
    clf.weights = Matrix(n_labels, d);
    clf.biases.assign(n_labels, 0.0);
    clf.platt_a.assign(n_labels, 0.0);
    clf.platt_b.assign(n_labels, 0.0);

    const double lambda = 1.0 / cfg.C;
    parallel_for(n_labels, cfg.threads, [&](std::size_t li) {
        std::vector<double> y(n);
        std::vector<int> target(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = labels[i] == clf.labels[li] ? 1.0 : -1.0;
            target[i] = y[i] > 0.0 ? 1 : 0;
        }
        std::vector<double> w(d, 0.0);
        double b = 0.0;
        std::vector<double> grad(d);
        for (int t = 1; t <= cfg.epochs; ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                grad[j] = lambda * w[j];
            }
            double grad_b = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double f = b;
                for (std::size_t j = 0; j < d; ++j) {
                    f += w[j] * x(i, j);
                }
                if (y[i] * f < 1.0) {
                    for (std::size_t j = 0; j < d; ++j) {
                        grad[j] -= y[i] * x(i, j) / double(n);
                    }
                    grad_b -= y[i] / double(n);
                }
            }
            const double eta = 1.0 / (lambda * double(t));
            for (std::size_t j = 0; j < d; ++j) {
                w[j] -= eta * grad[j];
            }
            b -= eta * grad_b;
        }
        for (std::size_t j = 0; j < d; ++j) {
            clf.weights(li, j) = w[j];
        }
        clf.biases[li] = b;

        std::vector<double> decisions(n);
        for (std::size_t i = 0; i < n; ++i) {
            double f = b;
            for (std::size_t j = 0; j < d; ++j) {
                f += w[j] * x(i, j);
            }
            decisions[i] = f;
        }
        fit_platt(decisions, target, clf.platt_a[li], clf.platt_b[li]);
    });
    return clf;
}

Prediction predict(const PatternClassifier& clf, const std::vector<double>& phi) {
    if (clf.labels.empty()) {
        throw std::invalid_argument("predict: classifier is untrained");
    }
    if (phi.size() != clf.dim()) {
        throw std::domain_error("predict: feature dimension mismatch");
    }
    const std::vector<double> z = standardize(clf, phi);
    const std::size_t n_labels = clf.labels.size();
    std::vector<double> margin(n_labels);
    for (std::size_t li = 0; li < n_labels; ++li) {
        double f = clf.biases[li];
        for (std::size_t j = 0; j < z.size(); ++j) {
            f += clf.weights(li, j) * z[j];
        }
        margin[li] = f;
    }

    std::vector<double> raw(n_labels);
    if (clf.softmax_margins) {
        const double m = *std::max_element(margin.begin(), margin.end());
        for (std::size_t li = 0; li < n_labels; ++li) {
            raw[li] = std::exp(margin[li] - m);
        }
    } else {
        for (std::size_t li = 0; li < n_labels; ++li) {
            raw[li] = sigmoid_ab(margin[li], clf.platt_a[li], clf.platt_b[li]);
        }
    }
    double total = 0.0;
    for (double r : raw) {
        total += r;
    }
    std::vector<double> full(n_labels);
    for (std::size_t li = 0; li < n_labels; ++li) {
        full[li] = raw[li] / total;
    }

    std::size_t winner = 0;
    for (std::size_t li = 1; li < n_labels; ++li) {
        if (full[li] > full[winner]) {
            winner = li; // ties keep the earlier (lower) label
        }
    }

    Prediction out;
    out.p_max = full[winner];
    out.label = clf.discarded.count(clf.labels[winner]) ? -1 : clf.labels[winner];

    double active_total = 0.0;
    for (std::size_t li = 0; li < n_labels; ++li) {
        if (!clf.discarded.count(clf.labels[li])) {
            active_total += raw[li];
        }
    }
    for (std::size_t li = 0; li < n_labels; ++li) {
        if (!clf.discarded.count(clf.labels[li])) {
            out.probs.push_back(raw[li] / active_total);
        }
    }
    return out;
}

KsResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b,
                       bool raw_samples) {
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("ks_two_sample needs non-empty samples");
    }
    double d_stat = 0.0;
    if (raw_samples) {
        std::vector<double> sa = a, sb = b;
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        std::vector<double> merged = sa;
        merged.insert(merged.end(), sb.begin(), sb.end());
        std::sort(merged.begin(), merged.end());
        for (double x : merged) {
            const double fa =
                double(std::upper_bound(sa.begin(), sa.end(), x) - sa.begin()) / double(sa.size());
            const double fb =
                double(std::upper_bound(sb.begin(), sb.end(), x) - sb.begin()) / double(sb.size());
            d_stat = std::max(d_stat, std::abs(fa - fb));
        }
    } else {
        // Both CDFs are read on the same fixed grid over [0,1], the p_max
        // domain, so downstream consumers compare like with like.
        for (std::size_t k = 1; k <= kKsBins; ++k) {
            const double edge = double(k) / double(kKsBins);
            double ca = 0.0, cb = 0.0;
            for (double x : a) {
                if (x <= edge) {
                    ca += 1.0;
                }
            }
            for (double x : b) {
                if (x <= edge) {
                    cb += 1.0;
                }
            }
            d_stat = std::max(d_stat, std::abs(ca / double(a.size()) - cb / double(b.size())));
        }
    }

    KsResult res;
    res.d_stat = d_stat;
    if (d_stat == 0.0) {
        res.p_value = 1.0;
        return res;
    }
    const double n_eff =
        double(a.size()) * double(b.size()) / double(a.size() + b.size());
    res.p_value = kolmogorov_p(std::sqrt(n_eff) * d_stat);
    return res;
}

KsReport ks_label_filter(PatternClassifier& clf, const std::vector<EvalPrediction>& eval,
                         bool raw_samples) {
    KsReport report;
    for (int label : clf.labels) {
        KsLabelDecision dec;
        dec.label = label;
        std::vector<double> correct, incorrect;
        for (const auto& e : eval) {
            if (e.predicted != label) {
                continue;
            }
            (e.truth == label ? correct : incorrect).push_back(e.p_max);
        }
        dec.n_correct = correct.size();
        dec.n_incorrect = incorrect.size();
        if (correct.empty() || incorrect.empty()) {
            // No two-sample comparison is possible, so the label's confidence
            // signal is unverified; drop it rather than trust it.
            dec.kept = false;
            log::warn("ks filter: label " + std::to_string(label) +
                      " has a one-sided evaluation split, discarding it");
        } else {
            const KsResult ks = ks_two_sample(correct, incorrect, raw_samples);
            dec.d_stat = ks.d_stat;
            dec.p_value = ks.p_value;
            dec.kept = ks.p_value <= kKsAlpha;
        }
        if (!dec.kept) {
            clf.discarded.insert(label);
        }
        report.labels.push_back(dec);
    }
    return report;
}

std::vector<Prediction> apply_confidence_threshold(const std::vector<Prediction>& predictions,
                                                   double x_percent) {
    if (!(x_percent > 0.0) || x_percent > 100.0) {
        throw std::invalid_argument("confidence threshold must be in (0, 100]");
    }
    const std::size_t n = predictions.size();
    if (n == 0) {
        return {};
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
        return predictions[lhs].p_max > predictions[rhs].p_max; // ties stay in date order
    });
    std::size_t keep = std::size_t(std::ceil(x_percent * double(n) / 100.0 - 1e-12));
    keep = std::clamp<std::size_t>(keep, 1, n);

    std::vector<Prediction> out = predictions;
    for (std::size_t r = keep; r < n; ++r) {
        out[order[r]].label = -1;
    }
    return out;
}

} // namespace pf
