#include "sgf/segmentation.hpp"

#include <algorithm>
#include <cmath>

namespace sgf {

std::string SegmentationScheme::name() const {
    switch (kind) {
        case SchemeKind::Ori: return "ori";
        case SchemeKind::StripsH:
            return count == 3 ? "v3_h" : "strips_h" + std::to_string(count);
        case SchemeKind::StripsV:
            return count == 3 ? "v3_v" : "strips_v" + std::to_string(count);
        case SchemeKind::QuadrantsPlusWhole: return "v5";
        case SchemeKind::StripsPlusWholeH:
            return count == 6 ? "v7_h" : "strips_whole_h" + std::to_string(count);
        case SchemeKind::StripsPlusWholeV:
            return count == 6 ? "v7_v" : "strips_whole_v" + std::to_string(count);
        case SchemeKind::GridPlusWhole:
            if (count >= 3 && count <= 6) return "v" + std::to_string(count * count + 1);
            return "grid" + std::to_string(count);
        case SchemeKind::Central: return "cen" + std::to_string(percent);
    }
    return "unknown";
}

std::size_t SegmentationScheme::voter_count() const {
    switch (kind) {
        case SchemeKind::Ori:
        case SchemeKind::Central: return 1;
        case SchemeKind::StripsH:
        case SchemeKind::StripsV: return count;
        case SchemeKind::QuadrantsPlusWhole: return 5;
        case SchemeKind::StripsPlusWholeH:
        case SchemeKind::StripsPlusWholeV: return count + 1;
        case SchemeKind::GridPlusWhole: return count * count + 1;
    }
    return 0;
}

const std::vector<std::string>& canonical_scheme_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n{"ori", "v3_h", "v3_v", "v5", "v7_h", "v7_v",
                                   "v10", "v17", "v26", "v37"};
        for (int p = 10; p <= 90; p += 10) n.push_back("cen" + std::to_string(p));
        return n;
    }();
    return names;
}

std::string canonical_scheme_list() {
    std::string out;
    for (const auto& n : canonical_scheme_names()) {
        if (!out.empty()) out += ", ";
        out += n;
    }
    return out;
}

SegmentationScheme parse_scheme(std::string_view name) {
    if (name == "ori") return SegmentationScheme::ori();
    if (name == "v3_h") return SegmentationScheme::strips_h(3);
    if (name == "v3_v") return SegmentationScheme::strips_v(3);
    if (name == "v5") return SegmentationScheme::quadrants_plus_whole();
    if (name == "v7_h") return SegmentationScheme::strips_plus_whole_h(6);
    if (name == "v7_v") return SegmentationScheme::strips_plus_whole_v(6);
    if (name == "v10") return SegmentationScheme::grid_plus_whole(3);
    if (name == "v17") return SegmentationScheme::grid_plus_whole(4);
    if (name == "v26") return SegmentationScheme::grid_plus_whole(5);
    if (name == "v37") return SegmentationScheme::grid_plus_whole(6);
    if (name.starts_with("cen") && name.size() > 3) {
        const std::string digits(name.substr(3));
        if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
            digits.size() <= 3) {
            const auto p = static_cast<std::size_t>(std::stoul(digits));
            if (p >= 10 && p <= 100 && p % 10 == 0) return SegmentationScheme::central(p);
        }
    }
    fail(ErrorCode::UnknownName, "unknown segmentation scheme '" + std::string(name) +
                                     "'; valid schemes: " + canonical_scheme_list() + ", cen100");
}

std::vector<std::size_t> split_lengths(std::size_t total, std::size_t parts) {
    require(parts >= 1, ErrorCode::InvalidArgument, "split_lengths: zero parts");
    require(parts <= total, ErrorCode::InvalidArgument,
            "cannot split " + std::to_string(total) + " into " + std::to_string(parts) +
                " non-empty parts");
    const std::size_t base = total / parts;
    const std::size_t extra = total % parts;
    std::vector<std::size_t> out(parts, base);
    for (std::size_t i = parts - extra; i < parts; ++i) ++out[i];
    return out;
}

std::size_t central_side(std::size_t dim, std::size_t percent) {
    require(percent >= 10 && percent <= 100 && percent % 10 == 0, ErrorCode::InvalidArgument,
            "central crop percentage must be one of 10, 20, ..., 100; got " +
                std::to_string(percent));
    const double side = std::round(static_cast<double>(dim) *
                                   std::sqrt(static_cast<double>(percent) / 100.0));
    return std::clamp<std::size_t>(static_cast<std::size_t>(side), 1, dim);
}

namespace {

std::vector<std::size_t> starts_of(const std::vector<std::size_t>& lengths) {
    std::vector<std::size_t> starts(lengths.size());
    std::size_t acc = 0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        starts[i] = acc;
        acc += lengths[i];
    }
    return starts;
}

void add_grid(BlockPlan& plan, std::size_t rows, std::size_t cols, std::size_t row_parts,
              std::size_t col_parts) {
    const auto rl = split_lengths(rows, row_parts);
    const auto cl = split_lengths(cols, col_parts);
    const auto rs = starts_of(rl);
    const auto cs = starts_of(cl);
    for (std::size_t i = 0; i < row_parts; ++i)
        for (std::size_t j = 0; j < col_parts; ++j)
            plan.blocks.push_back({rs[i], rl[i], cs[j], cl[j], false});
}

}  // namespace

BlockPlan plan_blocks(const SegmentationScheme& scheme, std::size_t rows, std::size_t cols) {
    require(rows >= 1 && cols >= 1, ErrorCode::InvalidArgument, "plan_blocks: empty feature map");
    BlockPlan plan;
    const Block whole{0, rows, 0, cols, true};
    switch (scheme.kind) {
        case SchemeKind::Ori: plan.blocks.push_back(whole); break;
        case SchemeKind::StripsH: add_grid(plan, rows, cols, scheme.count, 1); break;
        case SchemeKind::StripsV: add_grid(plan, rows, cols, 1, scheme.count); break;
        case SchemeKind::QuadrantsPlusWhole:
            add_grid(plan, rows, cols, 2, 2);
            plan.blocks.push_back(whole);
            break;
        case SchemeKind::StripsPlusWholeH:
            add_grid(plan, rows, cols, scheme.count, 1);
            plan.blocks.push_back(whole);
            break;
        case SchemeKind::StripsPlusWholeV:
            add_grid(plan, rows, cols, 1, scheme.count);
            plan.blocks.push_back(whole);
            break;
        case SchemeKind::GridPlusWhole:
            add_grid(plan, rows, cols, scheme.count, scheme.count);
            plan.blocks.push_back(whole);
            break;
        case SchemeKind::Central: {
            const std::size_t h = central_side(rows, scheme.percent);
            const std::size_t w = central_side(cols, scheme.percent);
            plan.blocks.push_back({(rows - h) / 2, h, (cols - w) / 2, w, scheme.percent == 100});
            break;
        }
    }
    return plan;
}

std::vector<TensorF> split_feature(const TensorF& x, const BlockPlan& plan) {
    require(x.rank() == 3, ErrorCode::ShapeMismatch,
            "split_feature: expected [h, w, c], got " + to_string(x.shape()));
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    std::vector<TensorF> out;
    out.reserve(plan.blocks.size());
    for (const auto& b : plan.blocks) {
        require(b.row_len > 0 && b.col_len > 0 && b.row_start + b.row_len <= h &&
                    b.col_start + b.col_len <= w,
                ErrorCode::InvalidArgument,
                "split_feature: block outside " + to_string(x.shape()));
        if (b.is_whole && b.row_len == h && b.col_len == w) {
            out.push_back(x);
            continue;
        }
        TensorF part(Shape{b.row_len, b.col_len, c});
        for (std::size_t r = 0; r < b.row_len; ++r) {
            const float* src = x.ptr() + ((b.row_start + r) * w + b.col_start) * c;
            std::copy(src, src + b.col_len * c, part.ptr() + r * b.col_len * c);
        }
        out.push_back(std::move(part));
    }
    return out;
}

TensorF central_crop(const TensorF& x, std::size_t percent) {
    require(x.rank() == 3, ErrorCode::ShapeMismatch,
            "central_crop: expected [h, w, c], got " + to_string(x.shape()));
    const auto plan = plan_blocks(SegmentationScheme::central(percent), x.dim(0), x.dim(1));
    return split_feature(x, plan).front();
}

std::string_view to_string(Label label) { return label == Label::Real ? "REAL" : "FAKE"; }

double VoteResult::mean_prob_real() const {
    if (per_voter.empty()) return 0.0;
    double total = 0.0;
    for (const auto& v : per_voter) total += v.prob_real;
    return total / static_cast<double>(per_voter.size());
}

VoteResult hard_vote(std::span<const Vote> per_voter) {
    require(!per_voter.empty(), ErrorCode::InvalidArgument, "hard_vote: no voters");
    VoteResult result;
    result.per_voter.assign(per_voter.begin(), per_voter.end());
    std::vector<double> real_mass, fake_mass;
    for (const auto& v : per_voter) {
        require(v.prob_real >= 0.0 && v.prob_real <= 1.0, ErrorCode::InvalidArgument,
                "hard_vote: probability outside [0, 1]");
        if (v.label == Label::Real) {
            ++result.real_votes;
            real_mass.push_back(v.prob_real);
        } else {
            ++result.fake_votes;
            fake_mass.push_back(1.0 - v.prob_real);
        }
    }
    if (result.real_votes != result.fake_votes) {
        result.label = result.real_votes > result.fake_votes ? Label::Real : Label::Fake;
    } else {
        // Summed in sorted order so the outcome cannot depend on voter order.
        auto total = [](std::vector<double>& m) {
            std::sort(m.begin(), m.end());
            double t = 0.0;
            for (double v : m) t += v;
            return t;
        };
        result.tiebreak_used = true;
        result.label = total(real_mass) > total(fake_mass) ? Label::Real : Label::Fake;
    }
    return result;
}

}  // namespace sgf
