#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "puncta/grid.hpp"

namespace puncta {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline ConfusionCounts confusion(const MaskGrid& pred, const MaskGrid& gt,
                                 const MaskGrid* roi = nullptr) {
    if (pred.h != gt.h || pred.w != gt.w) throw validation_error("confusion: shape mismatch");
    if (roi && (roi->h != gt.h || roi->w != gt.w))
        throw validation_error("confusion: roi shape mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (roi && !roi->v[i]) continue;
        const bool p = pred.v[i] != 0;
        const bool g = gt.v[i] != 0;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// Degenerate-denominator conventions (all documented, none silently NaN):
//   dice      -> 1 when pred and gt are both empty
//   recall    -> 1 when gt is empty (case is flagged, see CaseMetrics)
//   tnr       -> 1 when gt covers the whole region
//   precision -> 1 when pred is empty and gt is empty, else 0 when pred empty
inline double dice(const ConfusionCounts& c) {
    const double den = double(2 * c.tp + c.fp + c.fn);
    return den == 0.0 ? 1.0 : 2.0 * double(c.tp) / den;
}

inline double recall(const ConfusionCounts& c) {
    const double den = double(c.tp + c.fn);
    return den == 0.0 ? 1.0 : double(c.tp) / den;
}

inline double fnr(const ConfusionCounts& c) { return 1.0 - recall(c); }

inline double tnr(const ConfusionCounts& c) {
    const double den = double(c.tn + c.fp);
    return den == 0.0 ? 1.0 : double(c.tn) / den;
}

inline double balanced_accuracy(const ConfusionCounts& c) { return 0.5 * (recall(c) + tnr(c)); }

inline double gmean(const ConfusionCounts& c) { return std::sqrt(recall(c) * tnr(c)); }

inline double precision(const ConfusionCounts& c) {
    const double den = double(c.tp + c.fp);
    if (den == 0.0) return c.fn == 0 ? 1.0 : 0.0;
    return double(c.tp) / den;
}

inline double f2(const ConfusionCounts& c) {
    const double p = precision(c);
    const double r = recall(c);
    const double den = 4.0 * p + r;
    if (den == 0.0) return 0.0;
    return 5.0 * p * r / den;
}

struct CaseMetrics {
    double dice = 0, recall = 0, fnr = 0, tnr = 0, balanced_accuracy = 0, gmean = 0,
           precision = 0, f2 = 0;
    // Empty ground truth: recall-family values use the conventions above but the
    // case is excluded from recall-family cohort means.
    bool degenerate_gt = false;
};

inline CaseMetrics case_metrics(const ConfusionCounts& c) {
    CaseMetrics m;
    m.dice = dice(c);
    m.recall = recall(c);
    m.fnr = fnr(c);
    m.tnr = tnr(c);
    m.balanced_accuracy = balanced_accuracy(c);
    m.gmean = gmean(c);
    m.precision = precision(c);
    m.f2 = f2(c);
    m.degenerate_gt = (c.tp + c.fn) == 0;
    return m;
}

// Binarize at a strict threshold (prob > threshold) and score.
template <typename T>
CaseMetrics evaluate_case(const Grid<T>& prob, const MaskGrid& gt, double threshold,
                          const MaskGrid* roi = nullptr) {
    if (prob.h != gt.h || prob.w != gt.w) throw validation_error("evaluate_case: shape mismatch");
    MaskGrid pred(prob.h, prob.w);
    for (std::size_t i = 0; i < prob.size(); ++i)
        pred.v[i] = double(prob.v[i]) > threshold ? 1 : 0;
    return case_metrics(confusion(pred, gt, roi));
}

struct MetricSummary {
    double mean = 0;
    double stddev = 0; // population
    int count = 0;
};

struct CohortStats {
    MetricSummary dice, recall, fnr, tnr, balanced_accuracy, gmean, precision, f2;
};

namespace detail {

template <typename Get>
MetricSummary summarize(std::span<const CaseMetrics> cases, Get get, bool skip_degenerate) {
    MetricSummary s;
    double sum = 0;
    for (const auto& c : cases) {
        if (skip_degenerate && c.degenerate_gt) continue;
        sum += get(c);
        ++s.count;
    }
    if (s.count == 0) return s;
    s.mean = sum / s.count;
    double acc = 0;
    for (const auto& c : cases) {
        if (skip_degenerate && c.degenerate_gt) continue;
        const double d = get(c) - s.mean;
        acc += d * d;
    }
    s.stddev = std::sqrt(acc / s.count);
    return s;
}

} // namespace detail

inline CohortStats evaluate_cohort(std::span<const CaseMetrics> cases) {
    if (cases.empty()) throw validation_error("evaluate_cohort: empty case list");
    CohortStats s;
    s.dice = detail::summarize(cases, [](const CaseMetrics& m) { return m.dice; }, false);
    s.tnr = detail::summarize(cases, [](const CaseMetrics& m) { return m.tnr; }, false);
    s.precision = detail::summarize(cases, [](const CaseMetrics& m) { return m.precision; }, false);
    s.recall = detail::summarize(cases, [](const CaseMetrics& m) { return m.recall; }, true);
    s.fnr = detail::summarize(cases, [](const CaseMetrics& m) { return m.fnr; }, true);
    s.balanced_accuracy =
        detail::summarize(cases, [](const CaseMetrics& m) { return m.balanced_accuracy; }, true);
    s.gmean = detail::summarize(cases, [](const CaseMetrics& m) { return m.gmean; }, true);
    s.f2 = detail::summarize(cases, [](const CaseMetrics& m) { return m.f2; }, true);
    return s;
}

} // namespace puncta
