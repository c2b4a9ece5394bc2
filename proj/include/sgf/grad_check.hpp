#pragma once

#include <functional>
#include <vector>

#include "sgf/tape.hpp"

namespace sgf {

/// Builds the op under test on a fresh tape from the given input ids.
using GradCheckFn = std::function<VarId(Tape<double>&, const std::vector<VarId>&)>;

struct GradCheckReport {
    bool passed = false;
    double max_error = 0.0;       // relative, or absolute where both sides are tiny
    std::size_t worst_input = 0;  // which input tensor held the worst element
    std::size_t worst_index = 0;
    std::size_t checked = 0;      // number of scalar elements compared
};

struct GradCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-5;
    /// Below this magnitude on both sides the error is measured absolutely.
    double tiny = 1e-8;
    /// Seed of the fixed random projection that turns a tensor output into a
    /// scalar: loss = sum(output * w).
    std::uint64_t projection_seed = 0x5eed;
};

/// Compares tape gradients with central finite differences, element by element.
GradCheckReport grad_check(const GradCheckFn& op, const std::vector<TensorD>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace sgf
