#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace cgcl {

struct ScoredEdges {
    std::vector<double> scores;
    std::vector<int> labels;  // 1 = positive, 0 = negative

    void add(double score, int label) {
        scores.push_back(score);
        labels.push_back(label);
    }

    static ScoredEdges from(std::span<const double> pos, std::span<const double> neg) {
        ScoredEdges s;
        for (double v : pos) s.add(v, 1);
        for (double v : neg) s.add(v, 0);
        return s;
    }
};

namespace detail {

inline std::size_t count_positives(const ScoredEdges& s, const char* who) {
    if (s.scores.size() != s.labels.size()) {
        throw std::invalid_argument(std::string(who) + ": scores/labels length mismatch");
    }
    std::size_t pos = 0;
    for (std::size_t k = 0; k < s.scores.size(); ++k) {
        if (std::isnan(s.scores[k])) throw std::invalid_argument(std::string(who) + ": NaN score");
        if (s.labels[k] != 0 && s.labels[k] != 1) {
            throw std::invalid_argument(std::string(who) + ": labels must be 0 or 1");
        }
        pos += static_cast<std::size_t>(s.labels[k]);
    }
    return pos;
}

}  // namespace detail

// Probability that a random positive outscores a random negative, ties
// counting one half. Mann-Whitney rank sum with midranks for ties.
inline double auc(const ScoredEdges& scored) {
    const std::size_t n_pos = detail::count_positives(scored, "auc");
    const std::size_t n = scored.scores.size();
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: need at least one positive and one negative");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scored.scores[a] < scored.scores[b]; });

    // Ranks are integers or half-integers, so the rank sum is exact.
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scored.scores[order[j + 1]] == scored.scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (scored.labels[order[k]] == 1) rank_sum += midrank;
        }
        i = j + 1;
    }
    const double p = static_cast<double>(n_pos);
    const double u = rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(n_neg));
}

// Mean of precision@k over the ranks k of positive items. Items are ranked
// by descending score; equal scores keep their original relative order.
inline double average_precision(const ScoredEdges& scored) {
    const std::size_t n_pos = detail::count_positives(scored, "average_precision");
    if (n_pos == 0) throw std::invalid_argument("average_precision: no positives");

    const std::size_t n = scored.scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scored.scores[a] > scored.scores[b]; });

    double total = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (scored.labels[order[k]] == 1) {
            ++hits;
            total += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return total / static_cast<double>(n_pos);
}

// Consistency measure ---------------------------------------------------------

// Image of [0, 1] under the sigmoid: [1/2, 1/(1 + 1/e)].
inline double sigmoid_of_one() { return 1.0 / (1.0 + std::exp(-1.0)); }

inline double consistency_lower_bound() { return -std::log(2.0) / (1.0 + std::exp(-1.0)); }
inline double consistency_upper_bound() { return -std::log1p(std::exp(-1.0)) / 2.0; }
// Bound on |C - C'| between any two parameterizations.
inline double consistency_difference_bound() { return 1.0 / (1.0 + std::exp(-1.0)); }

inline constexpr double kConsistencySlack = 1e-12;

struct ConsistencyReport {
    double c_value = 0.0;
    double lower_bound = 0.0;
    double upper_bound = 0.0;
    bool within_bounds = false;
};

inline void check_sigmoid_image(std::span<const double> a, const char* name) {
    const double hi = sigmoid_of_one();
    for (double v : a) {
        if (!(v >= 0.5 - kConsistencySlack && v <= hi + kConsistencySlack)) {
            throw std::domain_error(std::string("consistency_measure: ") + name + " entry " +
                                    std::to_string(v) + " outside [sigmoid(0), sigmoid(1)]");
        }
    }
}

// Per-sample a1 * ln(a2).
inline std::vector<double> consistency_terms(std::span<const double> a1, std::span<const double> a2) {
    if (a1.size() != a2.size()) throw std::invalid_argument("consistency_measure: length mismatch");
    if (a1.empty()) throw std::invalid_argument("consistency_measure: empty input");
    check_sigmoid_image(a1, "a1");
    check_sigmoid_image(a2, "a2");
    std::vector<double> out(a1.size());
    for (std::size_t k = 0; k < a1.size(); ++k) out[k] = a1[k] * std::log(a2[k]);
    return out;
}

// Empirical E[a1 log a2] with its theoretical bounds.
inline ConsistencyReport consistency_measure(std::span<const double> a1, std::span<const double> a2) {
    const auto terms = consistency_terms(a1, a2);
    ConsistencyReport r;
    r.c_value = std::accumulate(terms.begin(), terms.end(), 0.0) / static_cast<double>(terms.size());
    r.lower_bound = consistency_lower_bound();
    r.upper_bound = consistency_upper_bound();
    r.within_bounds = r.c_value >= r.lower_bound - kConsistencySlack &&
                      r.c_value <= r.upper_bound + kConsistencySlack;
    return r;
}

struct CrossViewDiagnostics {
    double c_views = 0.0;          // C(A1, A2)
    double c_reconstructions = 0.0;  // C(R1, R2)
    double c_view1 = 0.0;          // C(A1, R1)
    double c_view2 = 0.0;          // C(A2, R2)

    // Task-relevant information is lost when C(A1, A2) >= C(R1, R2).
    bool information_loss() const { return c_views >= c_reconstructions; }
    double relevance_gap() const { return std::abs(c_view1 - c_view2); }
};

// Inputs are raw values in [0, 1] (adjacency indicators, predicted link
// probabilities) over one shared pair sample; each is mapped through the
// sigmoid before measuring.
inline CrossViewDiagnostics cross_view_diagnostics(std::span<const double> a1, std::span<const double> a2,
                                                   std::span<const double> r1, std::span<const double> r2) {
    const std::size_t n = a1.size();
    if (a2.size() != n || r1.size() != n || r2.size() != n) {
        throw std::invalid_argument("cross_view_diagnostics: arrays must have equal length");
    }
    auto lift = [](std::span<const double> r) {
        std::vector<double> out(r.size());
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (!(r[k] >= 0.0 && r[k] <= 1.0)) {
                throw std::domain_error("cross_view_diagnostics: value outside [0, 1]");
            }
            out[k] = 1.0 / (1.0 + std::exp(-r[k]));
        }
        return out;
    };
    const auto sa1 = lift(a1), sa2 = lift(a2), sr1 = lift(r1), sr2 = lift(r2);
    return {consistency_measure(sa1, sa2).c_value, consistency_measure(sr1, sr2).c_value,
            consistency_measure(sa1, sr1).c_value, consistency_measure(sa2, sr2).c_value};
}

inline nlohmann::json to_json(const CrossViewDiagnostics& d) {
    return {
        {"c_views", d.c_views},
        {"c_reconstructions", d.c_reconstructions},
        {"c_view1_recon1", d.c_view1},
        {"c_view2_recon2", d.c_view2},
        {"information_loss", d.information_loss()},
        {"relevance_gap", d.relevance_gap()},
        {"lower_bound", consistency_lower_bound()},
        {"upper_bound", consistency_upper_bound()},
    };
}

inline nlohmann::json metrics_report(double auc_value, double ap_value, std::size_t n_pos, std::size_t n_neg,
                                     const nlohmann::json& consistency = nlohmann::json::object()) {
    return {{"auc", auc_value}, {"ap", ap_value}, {"n_pos", n_pos}, {"n_neg", n_neg}, {"consistency", consistency}};
}

}  // namespace cgcl
