#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "patternforge/matrix.hpp"
#include "patternforge/shapelets.hpp"

namespace pf {

struct ClassifierConfig {
    double C = 1.0;      // hinge/regularization trade-off, lambda = 1/C
    int epochs = 500;    // full-batch subgradient steps per label
    bool softmax_margins = false; // probability head: softmax over margins
                                  // instead of renormalized Platt sigmoids
    std::uint64_t rng_seed = 0;
    int threads = 1;

    void validate() const;
};

// Min sliding dependent-DTW distance from the prefix to every shapelet, in
// bank order. The prefix is time-major (L x D), shapelet curves channel-major.
std::vector<double> featurize(const Matrix& prefix, const std::vector<Shapelet>& bank);

struct PatternClassifier {
    std::vector<int> labels;            // trained label vocabulary, ascending
    Matrix weights;                     // one row per label
    std::vector<double> biases;
    std::vector<double> platt_a, platt_b; // per-label sigmoid 1/(1+exp(a*f+b))
    std::vector<double> feat_mean, feat_std; // training standardization
    std::set<int> discarded;            // labels masked to -1 by the K-S filter
    bool softmax_margins = false;

    std::size_t dim() const { return feat_mean.size(); }
};

// One-vs-rest linear SVM (L2-regularized hinge, full-batch subgradient) with
// per-label Platt calibration fit on the training decision values.
PatternClassifier train_classifier(const std::vector<std::vector<double>>& features,
                                   const std::vector<int>& labels, const ClassifierConfig& cfg);

struct Prediction {
    int label = -1;            // -1 marks a non-pattern
    double p_max = 0.0;        // probability of the winning label
    std::vector<double> probs; // over non-discarded labels, sums to 1
};

// Full calibrated distribution; the argmax decides the label (ties to the
// lowest label) and a discarded winner is reported as -1.
Prediction predict(const PatternClassifier& clf, const std::vector<double>& phi);

struct KsResult {
    double d_stat = 0.0;
    double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov. By default both CDFs are read on 100 equal
// bins over [0,1] (the p_max domain); raw_samples sweeps the merged sample
// points instead. p comes from the asymptotic Kolmogorov series at
// sqrt(n_eff) * D with n_eff = |a||b|/(|a|+|b|).
KsResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b,
                       bool raw_samples = false);

struct EvalPrediction {
    int predicted = -1;
    double p_max = 0.0;
    int truth = -1;
};

struct KsLabelDecision {
    int label = -1;
    std::size_t n_correct = 0;
    std::size_t n_incorrect = 0;
    double d_stat = 0.0;
    double p_value = 1.0;
    bool kept = false;
};

struct KsReport {
    std::vector<KsLabelDecision> labels;
};

// Splits each label's p_max values by correctness on held-out training data
// and discards labels whose two distributions are not separated (p > 0.05).
// Labels with a one-sided outcome are discarded conservatively.
KsReport ks_label_filter(PatternClassifier& clf, const std::vector<EvalPrediction>& eval,
                         bool raw_samples = false);

// Keeps the ceil(x/100 * N) predictions with the highest p_max (earlier index
// wins ties); everything else becomes label -1.
std::vector<Prediction> apply_confidence_threshold(const std::vector<Prediction>& predictions,
                                                   double x_percent);

} // namespace pf
