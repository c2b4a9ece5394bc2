#include "sgf/grad_check.hpp"

#include <cmath>

#include "sgf/ops.hpp"

namespace sgf {
namespace {

double projected(const GradCheckFn& op, const std::vector<TensorD>& inputs,
                 const TensorD& weights_or_empty, TensorD* weights_out) {
    Tape<double> tape;
    std::vector<VarId> ids;
    ids.reserve(inputs.size());
    for (const auto& t : inputs) ids.push_back(tape.constant(t));
    const auto& out = tape.value(op(tape, ids));
    if (weights_out) {
        *weights_out = out;
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) total += out[i] * weights_or_empty[i];
    return total;
}

}  // namespace

GradCheckReport grad_check(const GradCheckFn& op, const std::vector<TensorD>& inputs,
                           const GradCheckOptions& options) {
    // Output shape first, so the projection weights can be drawn.
    TensorD probe;
    projected(op, inputs, {}, &probe);
    Rng rng(options.projection_seed);
    TensorD weights(probe.shape());
    for (auto& w : weights.data()) w = rng.uniform(-1.0, 1.0);

    Tape<double> tape;
    std::vector<VarId> ids;
    for (const auto& t : inputs) ids.push_back(tape.variable(t));
    const VarId out = op(tape, ids);
    const VarId w = tape.constant(weights);
    const VarId loss = sum(tape, mul(tape, out, w));
    const GradMap<double> grads = tape.backward(loss);

    GradCheckReport report;
    std::vector<TensorD> work = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const TensorD& analytic = grads[ids[k]];
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double original = work[k][i];
            work[k][i] = original + options.step;
            const double plus = projected(op, work, weights, nullptr);
            work[k][i] = original - options.step;
            const double minus = projected(op, work, weights, nullptr);
            work[k][i] = original;

            const double numeric = (plus - minus) / (2.0 * options.step);
            const double a = analytic[i];
            const double scale = std::max(std::abs(a), std::abs(numeric));
            const double err = scale < options.tiny ? std::abs(a - numeric)
                                                    : std::abs(a - numeric) / scale;
            ++report.checked;
            if (err > report.max_error || std::isnan(err)) {
                report.max_error = std::isnan(err) ? INFINITY : err;
                report.worst_input = k;
                report.worst_index = i;
            }
        }
    }
    report.passed = report.max_error <= options.tolerance;
    return report;
}

}  // namespace sgf
