#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace sgf {

/// Positive class is REAL (label 1); the score is P(real).
struct ScoredSample {
    double score = 0.0;
    int label = 0;
};

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t total() const { return tp + fp + tn + fn; }
    double accuracy() const {
        return total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : 0.0;
    }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Predicts positive iff score >= threshold.
ConfusionCounts confusion(std::span<const ScoredSample> samples, double threshold);

/// A rate is absent when its denominator is zero; throws when both are.
struct Rates {
    std::optional<double> tpr;
    std::optional<double> fpr;
};
Rates tpr_fpr(const ConfusionCounts& c);

struct RocPoint {
    double threshold = 0.0;  // +inf for the first point
    double fpr = 0.0;
    double tpr = 0.0;
};

/// Points ordered from threshold +inf down to the lowest score; one point per
/// distinct score. Starts at (0, 0) and ends at (1, 1).
struct RocCurve {
    std::vector<RocPoint> points;
};

/// Throws unless both classes are present.
RocCurve roc_curve(std::span<const ScoredSample> samples);
double auc_trapezoid(const RocCurve& curve);
/// Mann-Whitney: fraction of (positive, negative) pairs ranked correctly,
/// ties counted as one half.
double auc_pair_count(std::span<const ScoredSample> samples);

/// Point nearest to (0, 1); ties go to the higher threshold.
RocPoint optimal_cutoff(const RocCurve& curve);

/// CSV with header "threshold,fpr,tpr" and 9 significant digits.
void write_roc_csv(std::ostream& os, const RocCurve& curve);

bool has_both_classes(std::span<const ScoredSample> samples);

}  // namespace sgf
