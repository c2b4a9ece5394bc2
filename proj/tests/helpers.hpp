#pragma once

#include <filesystem>
#include <string>

#include "sgf/tensor.hpp"

namespace testing {

inline sgf::TensorD random_tensor(sgf::Rng& rng, sgf::Shape shape, double lo = -1.0, double hi = 1.0) {
    sgf::TensorD t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

inline sgf::TensorF random_tensor_f(sgf::Rng& rng, sgf::Shape shape, double lo = -1.0, double hi = 1.0) {
    sgf::TensorF t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

/// Values bounded away from zero, so relu-style kinks stay out of reach of
/// finite-difference steps.
inline sgf::TensorD away_from_zero(sgf::Rng& rng, sgf::Shape shape, double gap = 0.05) {
    sgf::TensorD t(std::move(shape));
    for (auto& v : t.data()) {
        const double mag = rng.uniform(gap, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

/// Fresh scratch directory under the test working directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::current_path() / "scratch" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
