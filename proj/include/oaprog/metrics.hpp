#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "oaprog/common.hpp"

namespace oaprog {

/// Rows are true classes, columns predicted.
struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::size_t> counts;  // k*k, row-major

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t classes) : k(classes), counts(classes * classes, 0) {}

    std::size_t& at(std::size_t truth, std::size_t pred) { return counts[truth * k + pred]; }
    std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }

    std::size_t total() const {
        std::size_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
};

inline ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& pred,
                                        std::size_t k) {
    if (truth.size() != pred.size()) throw DataError("truth/prediction length mismatch");
    ConfusionMatrix m(k);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || pred[i] < 0 || static_cast<std::size_t>(truth[i]) >= k ||
            static_cast<std::size_t>(pred[i]) >= k)
            throw DataError("class index out of range in scoring input");
        ++m.at(truth[i], pred[i]);
    }
    return m;
}

/// Support-weighted mean of per-class F1 scores.  A class with zero
/// precision+recall (or no predictions and no members) contributes 0.
inline double weighted_f1(const ConfusionMatrix& m) {
    std::size_t total = m.total();
    if (total == 0) throw DataError("cannot score an empty prediction set");
    double score = 0;
    for (std::size_t c = 0; c < m.k; ++c) {
        std::size_t tp = m.at(c, c), support = 0, predicted = 0;
        for (std::size_t j = 0; j < m.k; ++j) {
            support += m.at(c, j);
            predicted += m.at(j, c);
        }
        if (support == 0) continue;  // weight zero anyway
        double f1 = 0;
        if (tp > 0) {
            double precision = static_cast<double>(tp) / predicted;
            double recall = static_cast<double>(tp) / support;
            f1 = 2 * precision * recall / (precision + recall);
        }
        score += (static_cast<double>(support) / total) * f1;
    }
    return score;
}

inline double weighted_f1(const std::vector<int>& truth, const std::vector<int>& pred,
                          std::size_t k) {
    return weighted_f1(confusion_matrix(truth, pred, k));
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw DataError("median of empty vector");
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

/// Median absolute deviation from the median (unscaled).
inline double median_absolute_deviation(const std::vector<double>& v) {
    double m = median(v);
    std::vector<double> dev;
    dev.reserve(v.size());
    for (double x : v) dev.push_back(std::abs(x - m));
    return median(std::move(dev));
}

namespace detail {

inline double binom_pmf(std::size_t n, std::size_t k, double p) {
    double log_pmf = std::lgamma(static_cast<double>(n) + 1) -
                     std::lgamma(static_cast<double>(k) + 1) -
                     std::lgamma(static_cast<double>(n - k) + 1) + k * std::log(p) +
                     (n - k) * std::log1p(-p);
    return std::exp(log_pmf);
}

/// Smallest k with P(X <= k) >= q for X ~ Binomial(n, p).
inline std::size_t binom_quantile(double q, std::size_t n, double p) {
    double cum = 0;
    for (std::size_t k = 0; k <= n; ++k) {
        cum += binom_pmf(n, k, p);
        if (cum + 1e-12 >= q) return k;
    }
    return n;
}

}  // namespace detail

/// Distribution-free CI for the median: the order statistics whose ranks
/// come from the Binomial(n, 1/2) quantiles at the requested level.
inline std::pair<double, double> binomial_ci_median(const std::vector<double>& values,
                                                    double level = 0.95) {
    if (values.empty()) throw DataError("confidence interval of empty vector");
    if (level <= 0 || level >= 1) throw ConfigError("confidence level must lie in (0,1)");
    std::vector<double> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    std::size_t n = sorted.size();
    double alpha = 1 - level;
    std::size_t lo_rank = detail::binom_quantile(alpha / 2, n, 0.5);       // 1-based
    std::size_t hi_rank = detail::binom_quantile(1 - alpha / 2, n, 0.5);   // 1-based
    lo_rank = std::clamp<std::size_t>(lo_rank, 1, n);
    hi_rank = std::clamp<std::size_t>(hi_rank, 1, n);
    return {sorted[lo_rank - 1], sorted[hi_rank - 1]};
}

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), from (0,0) to (1,1)
    double auc = 0;
};

/// Threshold sweep over distinct scores, descending; ties move as a block
/// (diagonal segments).  Area by trapezoid rule.
inline RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& truth) {
    if (scores.size() != truth.size()) throw DataError("scores/truth length mismatch");
    std::size_t pos = 0, neg = 0;
    for (int t : truth) (t ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw DataError("ROC is undefined when one of the classes is absent");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    RocCurve out;
    out.points.emplace_back(0.0, 0.0);
    std::size_t tp = 0, fp = 0;
    double auc = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (truth[order[i]] ? tp : fp) += 1;
            ++i;
        }
        double prev_fpr = out.points.back().first, prev_tpr = out.points.back().second;
        double fpr = static_cast<double>(fp) / neg, tpr = static_cast<double>(tp) / pos;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2;
        out.points.emplace_back(fpr, tpr);
    }
    out.auc = auc;
    return out;
}

/// Euclidean k-nearest-neighbour vote.  Inputs are expected pre-scaled to
/// [0,1].  Ties: equidistant neighbours resolve to the lower training
/// index, tied votes to the lowest class index.
inline std::vector<int> knn_predict(const std::vector<std::vector<double>>& train_rows,
                                    const std::vector<int>& train_labels,
                                    const std::vector<std::vector<double>>& test_rows,
                                    std::size_t n_classes, std::size_t k = 5) {
    if (train_rows.empty()) throw DataError("empty training set");
    if (train_rows.size() != train_labels.size())
        throw DataError("training rows/labels length mismatch");
    k = std::min(k, train_rows.size());
    std::vector<int> out;
    out.reserve(test_rows.size());
    std::vector<std::pair<double, std::size_t>> dist(train_rows.size());
    for (const auto& q : test_rows) {
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
            double d2 = 0;
            for (std::size_t f = 0; f < q.size(); ++f) {
                double diff = train_rows[i][f] - q[f];
                d2 += diff * diff;
            }
            dist[i] = {d2, i};
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        std::vector<std::size_t> votes(n_classes, 0);
        for (std::size_t i = 0; i < k; ++i) ++votes[train_labels[dist[i].second]];
        out.push_back(static_cast<int>(
            std::max_element(votes.begin(), votes.end()) - votes.begin()));
    }
    return out;
}

}  // namespace oaprog
