#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgf/tensor.hpp"

namespace sgf {

enum class SchemeKind {
    Ori,                 // the whole feature, one voter
    StripsH,             // x horizontal strips, no whole block (v3_h)
    StripsV,             // y vertical strips, no whole block (v3_v)
    QuadrantsPlusWhole,  // 2x2 grid + whole (v5)
    StripsPlusWholeH,    // x horizontal strips + whole (v7_h: x = 6)
    StripsPlusWholeV,    // y vertical strips + whole (v7_v: y = 6)
    GridPlusWhole,       // n x n grid + whole (v10, v17, v26, v37)
    Central,             // one centered block covering p% of the area (cenP)
};

/// Fixed-position slicing of a latent map into voter blocks.
struct SegmentationScheme {
    SchemeKind kind = SchemeKind::Ori;
    std::size_t count = 1;     // strips or grid side, where the kind has one
    std::size_t percent = 100; // Central only

    static SegmentationScheme ori() { return {}; }
    static SegmentationScheme strips_h(std::size_t x) { return {SchemeKind::StripsH, x, 100}; }
    static SegmentationScheme strips_v(std::size_t y) { return {SchemeKind::StripsV, y, 100}; }
    static SegmentationScheme quadrants_plus_whole() {
        return {SchemeKind::QuadrantsPlusWhole, 2, 100};
    }
    static SegmentationScheme strips_plus_whole_h(std::size_t x) {
        return {SchemeKind::StripsPlusWholeH, x, 100};
    }
    static SegmentationScheme strips_plus_whole_v(std::size_t y) {
        return {SchemeKind::StripsPlusWholeV, y, 100};
    }
    static SegmentationScheme grid_plus_whole(std::size_t n) {
        return {SchemeKind::GridPlusWhole, n, 100};
    }
    static SegmentationScheme central(std::size_t p) { return {SchemeKind::Central, 1, p}; }

    /// Canonical name: ori, v3_h, v3_v, v5, v7_h, v7_v, v10, v17, v26, v37,
    /// cen10 ... cen100. Non-canonical parameters fall back to a descriptive
    /// form such as "strips_h4" or "grid7".
    std::string name() const;
    std::size_t voter_count() const;

    friend bool operator==(const SegmentationScheme&, const SegmentationScheme&) = default;
};

/// Parses a canonical scheme name; throws ErrorCode::UnknownName listing the
/// valid names otherwise.
SegmentationScheme parse_scheme(std::string_view name);
const std::vector<std::string>& canonical_scheme_names();
std::string canonical_scheme_list();

struct Block {
    std::size_t row_start = 0, row_len = 0, col_start = 0, col_len = 0;
    bool is_whole = false;
    friend bool operator==(const Block&, const Block&) = default;
};

struct BlockPlan {
    std::vector<Block> blocks;
    std::size_t voter_count() const { return blocks.size(); }
};

/// Splits `total` into `parts` near-equal lengths; the remainder goes one
/// extra to each of the last (total % parts) parts: 32 into 3 is 10, 11, 11.
std::vector<std::size_t> split_lengths(std::size_t total, std::size_t parts);

/// Side of a centered crop covering p% of the area: round(D * sqrt(p / 100)).
std::size_t central_side(std::size_t dim, std::size_t percent);

BlockPlan plan_blocks(const SegmentationScheme& scheme, std::size_t rows, std::size_t cols);

/// One tensor per block of an [h, w, c] map; the whole block is the input.
std::vector<TensorF> split_feature(const TensorF& x, const BlockPlan& plan);

TensorF central_crop(const TensorF& x, std::size_t percent);

enum class Label { Fake = 0, Real = 1 };

inline Label label_from_prob(double prob_real) {
    return prob_real >= 0.5 ? Label::Real : Label::Fake;
}
std::string_view to_string(Label label);

struct Vote {
    Label label = Label::Fake;
    double prob_real = 0.0;
};

struct VoteResult {
    Label label = Label::Fake;
    std::vector<Vote> per_voter;
    std::size_t real_votes = 0;
    std::size_t fake_votes = 0;
    bool tiebreak_used = false;

    double mean_prob_real() const;
};

/// Majority label. On an exact tie the side whose voters carry more summed
/// probability for their own label wins; if that also ties, Fake wins.
VoteResult hard_vote(std::span<const Vote> per_voter);

}  // namespace sgf
