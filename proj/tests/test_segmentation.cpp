#include <algorithm>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "sgf/segmentation.hpp"

using namespace sgf;

TEST_CASE("scheme names round-trip and unknown names list the valid set") {
    for (const auto& name : canonical_scheme_names()) CHECK(parse_scheme(name).name() == name);
    CHECK(canonical_scheme_names().size() == 19);
    CHECK(parse_scheme("cen100").voter_count() == 1);
    try {
        parse_scheme("bogus");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownName);
        const std::string msg = e.what();
        for (const auto& name : canonical_scheme_names()) CHECK(msg.find(name) != std::string::npos);
    }
    CHECK_THROWS_AS(parse_scheme("cen15"), Error);
}

TEST_CASE("voter counts") {
    const std::vector<std::pair<std::string, std::size_t>> expected{
        {"ori", 1}, {"v3_h", 3}, {"v3_v", 3}, {"v5", 5}, {"v7_h", 7}, {"v7_v", 7},
        {"v10", 10}, {"v17", 17}, {"v26", 26}, {"v37", 37}, {"cen50", 1}};
    for (const auto& [name, n] : expected) {
        CHECK(parse_scheme(name).voter_count() == n);
        CHECK(plan_blocks(parse_scheme(name), 32, 32).voter_count() == n);
    }
}

TEST_CASE("split_lengths puts the remainder on the last parts") {
    CHECK(split_lengths(32, 3) == std::vector<std::size_t>{10, 11, 11});
    CHECK(split_lengths(32, 6) == std::vector<std::size_t>{5, 5, 5, 5, 6, 6});
    CHECK(split_lengths(8, 2) == std::vector<std::size_t>{4, 4});
    CHECK_THROWS_AS(split_lengths(2, 3), Error);
    CHECK_THROWS_AS(split_lengths(4, 0), Error);
}

TEST_CASE("v3_h on a 32x32 map is 10/11/11 horizontal strips") {
    const auto plan = plan_blocks(parse_scheme("v3_h"), 32, 32);
    REQUIRE(plan.blocks.size() == 3);
    CHECK(plan.blocks[0] == Block{0, 10, 0, 32, false});
    CHECK(plan.blocks[1] == Block{10, 11, 0, 32, false});
    CHECK(plan.blocks[2] == Block{21, 11, 0, 32, false});
    const auto v = plan_blocks(parse_scheme("v3_v"), 32, 32);
    CHECK(v.blocks[2] == Block{0, 32, 21, 11, false});
}

TEST_CASE("v5 is four quadrants plus the whole map, whole last") {
    const auto plan = plan_blocks(parse_scheme("v5"), 32, 32);
    REQUIRE(plan.blocks.size() == 5);
    CHECK(plan.blocks[0] == Block{0, 16, 0, 16, false});
    CHECK(plan.blocks[1] == Block{0, 16, 16, 16, false});
    CHECK(plan.blocks[2] == Block{16, 16, 0, 16, false});
    CHECK(plan.blocks[3] == Block{16, 16, 16, 16, false});
    CHECK(plan.blocks[4] == Block{0, 32, 0, 32, true});
}

TEST_CASE("central crops") {
    CHECK(central_side(32, 10) == 10);  // round(32 * sqrt(0.1)) = round(10.12)
    CHECK(central_side(32, 50) == 23);
    CHECK(central_side(32, 100) == 32);
    CHECK_THROWS_AS(central_side(32, 0), Error);
    CHECK_THROWS_AS(central_side(32, 55), Error);
    const auto plan = plan_blocks(parse_scheme("cen10"), 32, 32);
    REQUIRE(plan.blocks.size() == 1);
    CHECK(plan.blocks[0] == Block{11, 10, 11, 10, false});
    Rng rng(1);
    const TensorF x = testing::random_tensor_f(rng, {32, 32, 2});
    const TensorF c = central_crop(x, 10);
    CHECK(c.shape() == Shape{10, 10, 2});
    CHECK(c.at({0, 0, 1}) == x.at({11, 11, 1}));
}

TEST_CASE("grid schemes tile the map and reassemble it bit-exactly") {
    Rng rng(2);
    const TensorF x = testing::random_tensor_f(rng, {32, 32, 3});
    for (const char* name : {"v5", "v10", "v17", "v26", "v37", "v7_h", "v7_v", "v3_h", "v3_v"}) {
        const auto plan = plan_blocks(parse_scheme(name), 32, 32);
        const auto parts = split_feature(x, plan);
        REQUIRE(parts.size() == plan.blocks.size());
        TensorF rebuilt(x.shape(), -1.0f);
        std::vector<int> cover(32 * 32, 0);
        for (std::size_t b = 0; b < plan.blocks.size(); ++b) {
            const auto& blk = plan.blocks[b];
            CHECK(parts[b].shape() == Shape{blk.row_len, blk.col_len, 3});
            if (blk.is_whole) {
                CHECK(parts[b] == x);
                continue;
            }
            for (std::size_t i = 0; i < blk.row_len; ++i)
                for (std::size_t j = 0; j < blk.col_len; ++j) {
                    ++cover[(blk.row_start + i) * 32 + blk.col_start + j];
                    for (std::size_t c = 0; c < 3; ++c)
                        rebuilt.at({blk.row_start + i, blk.col_start + j, c}) = parts[b].at({i, j, c});
                }
        }
        CHECK(std::all_of(cover.begin(), cover.end(), [](int k) { return k == 1; }));
        CHECK(rebuilt == x);
    }
}

namespace {

/// Brute-force oracle of the voting rule.
Label oracle_vote(const std::vector<Vote>& votes) {
    int real = 0, fake = 0;
    long double real_mass = 0, fake_mass = 0;
    for (const auto& v : votes) {
        if (v.prob_real >= 0.5) {
            ++real;
            real_mass += v.prob_real;
        } else {
            ++fake;
            fake_mass += 1.0L - v.prob_real;
        }
    }
    if (real != fake) return real > fake ? Label::Real : Label::Fake;
    return real_mass > fake_mass ? Label::Real : Label::Fake;
}

}  // namespace

TEST_CASE("hard_vote majority and tie-breaks") {
    const std::vector<Vote> majority{{Label::Real, 0.9}, {Label::Real, 0.6}, {Label::Fake, 0.1}};
    auto r = hard_vote(majority);
    CHECK(r.label == Label::Real);
    CHECK(r.real_votes == 2);
    CHECK(r.fake_votes == 1);
    CHECK_FALSE(r.tiebreak_used);

    const std::vector<Vote> tie{{Label::Real, 0.55}, {Label::Fake, 0.05}};
    r = hard_vote(tie);
    CHECK(r.tiebreak_used);
    CHECK(r.label == Label::Fake);  // fake mass 0.95 beats real mass 0.55

    const std::vector<Vote> exact{{Label::Real, 0.75}, {Label::Fake, 0.25}};
    CHECK(hard_vote(exact).label == Label::Fake);
    CHECK_THROWS_AS(hard_vote({}), Error);
}

TEST_CASE("hard_vote matches an exhaustive oracle for up to 7 voters") {
    const std::vector<double> probs{0.0, 0.2, 0.4999, 0.5, 0.7, 1.0};
    for (std::size_t n = 1; n <= 7; ++n) {
        std::vector<std::size_t> idx(n, 0);
        while (true) {
            std::vector<Vote> votes;
            for (auto i : idx) votes.push_back({label_from_prob(probs[i]), probs[i]});
            const auto result = hard_vote(votes);
            REQUIRE(result.label == oracle_vote(votes));
            REQUIRE(result.real_votes + result.fake_votes == n);
            std::size_t k = 0;
            while (k < n && ++idx[k] == probs.size()) idx[k++] = 0;
            if (k == n) break;
        }
    }
}

TEST_CASE("hard_vote is invariant under voter permutation") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Vote> votes;
        const std::size_t n = 2 + 2 * rng.below(4);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = rng.uniform();
            votes.push_back({label_from_prob(p), p});
        }
        const Label base = hard_vote(votes).label;
        for (int k = 0; k < 5; ++k) {
            for (std::size_t i = n; i > 1; --i) std::swap(votes[i - 1], votes[rng.below(i)]);
            REQUIRE(hard_vote(votes).label == base);
        }
    }
}
