#pragma once

// Best-threshold F1 (image and pixel level) and AUROC.
// A sample is predicted positive when score >= threshold.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "msad/errors.hpp"
#include "msad/image.hpp"

namespace msad {

struct LabeledScore {
    double score = 0.0;
    bool label = false;
};

struct F1Result {
    double f1 = 0.0;
    double threshold = 0.0;
};

namespace detail {

inline double f1_from_counts(double tp, double fp, double fn) {
    const double denom = 2.0 * tp + fp + fn;
    return denom > 0.0 ? 2.0 * tp / denom : 0.0;
}

inline std::pair<std::size_t, std::size_t> count_labels(std::span<const LabeledScore> items) {
    std::size_t pos = 0;
    for (const auto& it : items) {
        if (!std::isfinite(it.score)) throw InvalidInput("non-finite score");
        pos += it.label;
    }
    return {pos, items.size() - pos};
}

}  // namespace detail

/// Max F1 over thresholds at every distinct score; ties go to the lowest threshold.
inline F1Result f1_max(std::span<const LabeledScore> items) {
    const auto [pos, neg] = detail::count_labels(items);
    if (pos == 0 || neg == 0) throw UndefinedMetric("F1 needs at least one positive and one negative");

    std::vector<LabeledScore> s(items.begin(), items.end());
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    F1Result best{-1.0, 0.0};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size();) {
        const double t = s[i].score;
        for (; i < s.size() && s[i].score == t; ++i) (s[i].label ? tp : fp) += 1;
        const double f1 = detail::f1_from_counts(static_cast<double>(tp), static_cast<double>(fp),
                                                 static_cast<double>(pos - tp));
        if (f1 >= best.f1) best = {f1, t};
    }
    return best;
}

struct PixelF1Options {
    /// Upper bound on candidate thresholds (uniform quantiles of the pooled scores).
    std::size_t max_thresholds = 2000;
    /// Sweep every distinct pixel score instead.
    bool exact = false;
};

/// Flattens labeled pixel sets and returns the best-threshold F1.
inline F1Result f1_from_pixels(std::vector<LabeledScore> px, const PixelF1Options& opt = {}) {
    if (opt.exact) return f1_max(px);
    const auto [pos, neg] = detail::count_labels(px);
    if (pos == 0 || neg == 0) throw UndefinedMetric("F1 needs at least one positive and one negative pixel");
    if (opt.max_thresholds < 1) throw InvalidConfig("max_thresholds must be >= 1");

    std::sort(px.begin(), px.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
    const std::size_t n = px.size();
    // positives_from[i] = number of positives among px[i..n)
    std::vector<std::size_t> positives_from(n + 1, 0);
    for (std::size_t i = n; i-- > 0;) positives_from[i] = positives_from[i + 1] + px[i].label;

    std::vector<double> cand;
    const std::size_t m = std::min(opt.max_thresholds, n);
    cand.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t idx = m == 1 ? 0 : static_cast<std::size_t>((static_cast<long double>(k) * (n - 1)) / (m - 1));
        cand.push_back(px[idx].score);
    }
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

    F1Result best{-1.0, 0.0};
    // Descending sweep so that ">=" leaves the lowest threshold among ties.
    for (auto it = cand.rbegin(); it != cand.rend(); ++it) {
        const double t = *it;
        const std::size_t first = static_cast<std::size_t>(
            std::lower_bound(px.begin(), px.end(), t, [](const LabeledScore& a, double v) { return a.score < v; }) -
            px.begin());
        const double tp = static_cast<double>(positives_from[first]);
        const double fp = static_cast<double>(n - first) - tp;
        const double f1 = detail::f1_from_counts(tp, fp, static_cast<double>(pos) - tp);
        if (f1 >= best.f1) best = {f1, t};
    }
    return best;
}

/// Pixel-level F1 over a dataset of (score map, ground truth) pairs.
inline F1Result f1_seg(std::span<const std::pair<const ScoreMap*, const BinaryMask*>> maps,
                       const PixelF1Options& opt = {}) {
    std::vector<LabeledScore> px;
    std::size_t total = 0;
    for (const auto& [m, g] : maps) total += m->values.size();
    px.reserve(total);
    for (const auto& [m, g] : maps) {
        if (m->height != g->height || m->width != g->width)
            throw ContractViolation("score map and ground truth shapes differ");
        for (std::size_t i = 0; i < m->values.size(); ++i) px.push_back({m->values[i], g->data[i] != 0});
    }
    return f1_from_pixels(std::move(px), opt);
}

/// Area under the ROC curve via the Mann-Whitney U statistic with midranks for ties.
inline double auroc(std::span<const LabeledScore> items) {
    const auto [pos, neg] = detail::count_labels(items);
    if (pos == 0 || neg == 0) throw UndefinedMetric("AUROC needs at least one positive and one negative");
    std::vector<LabeledScore> s(items.begin(), items.end());
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < s.size();) {
        std::size_t j = i;
        std::size_t p_in_group = 0;
        for (; j < s.size() && s[j].score == s[i].score; ++j) p_in_group += s[j].label;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        rank_sum += midrank * static_cast<double>(p_in_group);
        i = j;
    }
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    const double u = rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * n);
}

struct CategoryMetrics {
    std::string category;
    std::size_t images = 0;
    F1Result f1_cls;
    double auroc_cls = 0.0;
    /// Present only when ground-truth masks were available.
    std::optional<F1Result> f1_seg;
};

inline nlohmann::json metrics_report(std::span<const CategoryMetrics> cats) {
    nlohmann::json j;
    j["categories"] = nlohmann::json::array();
    double sum_cls = 0.0, sum_auroc = 0.0, sum_seg = 0.0;
    std::size_t n_seg = 0;
    for (const auto& c : cats) {
        nlohmann::json e = {{"category", c.category},
                            {"images", c.images},
                            {"f1_cls", c.f1_cls.f1},
                            {"threshold_cls", c.f1_cls.threshold},
                            {"auroc", c.auroc_cls}};
        if (c.f1_seg) {
            e["f1_seg"] = c.f1_seg->f1;
            e["threshold_seg"] = c.f1_seg->threshold;
            sum_seg += c.f1_seg->f1;
            ++n_seg;
        } else {
            e["f1_seg"] = nullptr;
        }
        sum_cls += c.f1_cls.f1;
        sum_auroc += c.auroc_cls;
        j["categories"].push_back(std::move(e));
    }
    const double k = cats.empty() ? 1.0 : static_cast<double>(cats.size());
    j["mean"] = {{"f1_cls", sum_cls / k},
                 {"auroc", sum_auroc / k},
                 {"f1_seg", n_seg ? nlohmann::json(sum_seg / static_cast<double>(n_seg)) : nlohmann::json(nullptr)}};
    return j;
}

}  // namespace msad
