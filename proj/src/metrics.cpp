#include "sgf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "sgf/error.hpp"

namespace sgf {

ConfusionCounts confusion(std::span<const ScoredSample> samples, double threshold) {
    ConfusionCounts c;
    for (const auto& s : samples) {
        const bool predicted_positive = s.score >= threshold;
        if (s.label == 1)
            ++(predicted_positive ? c.tp : c.fn);
        else
            ++(predicted_positive ? c.fp : c.tn);
    }
    return c;
}

Rates tpr_fpr(const ConfusionCounts& c) {
    const std::size_t pos = c.tp + c.fn;
    const std::size_t neg = c.fp + c.tn;
    require(pos + neg > 0, ErrorCode::InvalidArgument, "tpr_fpr: no samples of either class");
    Rates r;
    if (pos > 0) r.tpr = static_cast<double>(c.tp) / static_cast<double>(pos);
    if (neg > 0) r.fpr = static_cast<double>(c.fp) / static_cast<double>(neg);
    return r;
}

bool has_both_classes(std::span<const ScoredSample> samples) {
    bool pos = false, neg = false;
    for (const auto& s : samples) (s.label == 1 ? pos : neg) = true;
    return pos && neg;
}

RocCurve roc_curve(std::span<const ScoredSample> samples) {
    require(has_both_classes(samples), ErrorCode::InvalidArgument,
            "roc_curve: needs at least one sample of each class");
    for (const auto& s : samples)
        require(std::isfinite(s.score), ErrorCode::InvalidArgument, "roc_curve: non-finite score");

    std::vector<ScoredSample> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });
    std::size_t pos_total = 0;
    for (const auto& s : sorted) pos_total += s.label == 1;
    const std::size_t neg_total = sorted.size() - pos_total;

    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < sorted.size();) {
        const double score = sorted[i].score;
        // Tied scores cross the threshold together.
        for (; i < sorted.size() && sorted[i].score == score; ++i) ++(sorted[i].label == 1 ? tp : fp);
        curve.points.push_back({score, static_cast<double>(fp) / static_cast<double>(neg_total),
                                static_cast<double>(tp) / static_cast<double>(pos_total)});
    }
    return curve;
}

double auc_trapezoid(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    return area;
}

double auc_pair_count(std::span<const ScoredSample> samples) {
    require(has_both_classes(samples), ErrorCode::InvalidArgument,
            "auc_pair_count: needs at least one sample of each class");
    double wins = 0.0;
    std::size_t pairs = 0;
    for (const auto& p : samples) {
        if (p.label != 1) continue;
        for (const auto& n : samples) {
            if (n.label == 1) continue;
            ++pairs;
            if (p.score > n.score)
                wins += 1.0;
            else if (p.score == n.score)
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

RocPoint optimal_cutoff(const RocCurve& curve) {
    require(!curve.points.empty(), ErrorCode::InvalidArgument, "optimal_cutoff: empty curve");
    // Points run from the highest threshold down, so keeping the first
    // minimum breaks ties toward the higher threshold.
    constexpr double kTieSlack = 1e-12;
    RocPoint best = curve.points.front();
    double best_d2 = best.fpr * best.fpr + (1.0 - best.tpr) * (1.0 - best.tpr);
    for (const auto& p : curve.points) {
        const double d2 = p.fpr * p.fpr + (1.0 - p.tpr) * (1.0 - p.tpr);
        if (d2 < best_d2 - kTieSlack) {
            best = p;
            best_d2 = d2;
        }
    }
    return best;
}

void write_roc_csv(std::ostream& os, const RocCurve& curve) {
    os << "threshold,fpr,tpr\n";
    char buf[96];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", p.threshold, p.fpr, p.tpr);
        os << buf;
    }
}

}  // namespace sgf
