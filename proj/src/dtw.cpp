#include "patternforge/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "patternforge/parallel.hpp"

namespace pf {

namespace {

inline double local_cost(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    const double* ra = a.row(i);
    const double* rb = b.row(j);
    double s = 0.0;
    for (std::size_t d = 0; d < a.cols(); ++d) {
        double diff = ra[d] - rb[d];
        s += diff * diff;
    }
    return std::sqrt(s);
}

void check_dims(const Matrix& a, const Matrix& b) {
    if (a.rows() == 0 || b.rows() == 0)
        throw std::invalid_argument("dtw: empty sequence");
    if (a.cols() != b.cols())
        throw std::invalid_argument("dtw: channel counts differ (" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.cols()) + ")");
}

} // namespace

double dtw_cost(const Matrix& a, const Matrix& b) {
    check_dims(a, b);
    const std::size_t n = a.rows(), m = b.rows();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            double best = std::min({prev[j - 1], prev[j], cur[j - 1]});
            cur[j] = local_cost(a, i - 1, b, j - 1) + best;
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

Alignment dtw_distance(const Matrix& a, const Matrix& b) {
    check_dims(a, b);
    const std::size_t n = a.rows(), m = b.rows();
    const double inf = std::numeric_limits<double>::infinity();

    Matrix acc(n + 1, m + 1, inf);
    acc(0, 0) = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j) {
            double best = std::min({acc(i - 1, j - 1), acc(i - 1, j), acc(i, j - 1)});
            acc(i, j) = local_cost(a, i - 1, b, j - 1) + best;
        }

    Alignment out;
    out.cost = acc(n, m);
    std::size_t i = n, j = m;
    out.path.reserve(n + m);
    while (i > 1 || j > 1) {
        out.path.emplace_back(i - 1, j - 1);
        double best = std::min({acc(i - 1, j - 1), acc(i - 1, j), acc(i, j - 1)});
        if (acc(i - 1, j - 1) == best) {
            --i;
            --j;
        } else if (acc(i - 1, j) == best) {
            --i;
        } else {
            --j;
        }
    }
    out.path.emplace_back(0, 0);
    std::reverse(out.path.begin(), out.path.end());
    return out;
}

Matrix warp_align_companions(const Alignment& price_alignment, const Matrix& companions,
                             std::size_t ref_len) {
    if (companions.rows() == 0) throw std::invalid_argument("warp_align_companions: empty input");
    Matrix out(ref_len, companions.cols(), 0.0);
    std::vector<std::size_t> hits(ref_len, 0);
    for (auto [i, j] : price_alignment.path) {
        if (i >= companions.rows() || j >= ref_len)
            throw std::invalid_argument("warp_align_companions: path exceeds input shapes");
        for (std::size_t c = 0; c < companions.cols(); ++c) out(j, c) += companions(i, c);
        ++hits[j];
    }
    for (std::size_t j = 0; j < ref_len; ++j) {
        if (hits[j] == 0)
            throw std::logic_error("warp_align_companions: reference frame with no aligned rows");
        for (std::size_t c = 0; c < companions.cols(); ++c)
            out(j, c) /= static_cast<double>(hits[j]);
    }
    return out;
}

Barycenter dba_barycenter(const std::vector<Segment>& members, std::size_t ref_len, int max_iter,
                          double tol, int threads) {
    if (members.empty()) throw std::invalid_argument("dba_barycenter: no members");
    if (ref_len < 2) throw std::invalid_argument("dba_barycenter: ref_len must be >= 2");
    const std::size_t dim = members[0].values.cols();
    for (const auto& s : members)
        if (s.values.cols() != dim)
            throw std::invalid_argument("dba_barycenter: members have mixed channel counts");

    const std::size_t k = members.size();

    // Medoid by total DTW cost to the other members.
    std::size_t medoid = 0;
    if (k > 1) {
        std::vector<double> totals(k, 0.0);
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = i + 1; j < k; ++j) pairs.emplace_back(i, j);
        std::vector<double> pair_cost(pairs.size());
        parallel_for(pairs.size(), threads, [&](std::size_t p) {
            pair_cost[p] = dtw_cost(members[pairs[p].first].values, members[pairs[p].second].values);
        });
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            totals[pairs[p].first] += pair_cost[p];
            totals[pairs[p].second] += pair_cost[p];
        }
        medoid = static_cast<std::size_t>(
            std::min_element(totals.begin(), totals.end()) - totals.begin());
    }

    Matrix center = resample_linear(members[medoid].values, ref_len);

    Barycenter out;
    std::vector<Alignment> aligns(k);
    auto align_all = [&] {
        parallel_for(k, threads, [&](std::size_t i) {
            aligns[i] = dtw_distance(members[i].values, center);
        });
        double obj = 0.0;
        for (const auto& al : aligns) obj += al.cost;
        return obj;
    };

    double obj = align_all();
    out.objective_trace.push_back(obj);

    for (int iter = 0; iter < max_iter; ++iter) {
        // Bucket member rows by the barycenter frame they align to, in
        // member index order so the means are reduction-order independent
        // of the thread count.
        std::vector<std::vector<std::pair<std::size_t, std::size_t>>> frames(ref_len);
        for (std::size_t s = 0; s < k; ++s)
            for (auto [i, j] : aligns[s].path) frames[j].emplace_back(s, i);

        Matrix next = center;
        std::vector<double> mean(dim);
        for (std::size_t j = 0; j < ref_len; ++j) {
            if (frames[j].empty()) continue;
            std::fill(mean.begin(), mean.end(), 0.0);
            for (auto [s, i] : frames[j])
                for (std::size_t d = 0; d < dim; ++d) mean[d] += members[s].values(i, d);
            for (std::size_t d = 0; d < dim; ++d)
                mean[d] /= static_cast<double>(frames[j].size());

            // Accept the mean only if it does not raise this frame's cost
            // along the fixed alignment paths.
            double old_cost = 0.0, new_cost = 0.0;
            for (auto [s, i] : frames[j]) {
                double so = 0.0, sn = 0.0;
                for (std::size_t d = 0; d < dim; ++d) {
                    double vo = members[s].values(i, d) - center(j, d);
                    double vn = members[s].values(i, d) - mean[d];
                    so += vo * vo;
                    sn += vn * vn;
                }
                old_cost += std::sqrt(so);
                new_cost += std::sqrt(sn);
            }
            if (new_cost <= old_cost)
                for (std::size_t d = 0; d < dim; ++d) next(j, d) = mean[d];
        }

        center = std::move(next);
        double new_obj = align_all();
        out.iterations_used = iter + 1;
        out.objective_trace.push_back(new_obj);
        double prev_obj = obj;
        obj = new_obj;
        if (prev_obj - new_obj < tol * std::max(prev_obj, 1e-12)) break;
    }

    out.values = std::move(center);
    out.objective = obj;
    return out;
}

} // namespace pf
