#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sgf/tensor.hpp"

namespace sgf {

/// Handle to a value recorded on a Tape.
struct VarId {
    std::uint32_t index = 0;
    friend bool operator==(VarId, VarId) = default;
};

template <class T>
class Tape;

/// What a backward rule sees: the output gradient, the recorded values, and
/// accumulation buffers for the inputs that need a gradient (null otherwise).
template <class T>
class BackwardContext {
public:
    BackwardContext(const Tape<T>& tape, const std::vector<VarId>& inputs, VarId output,
                    const Tensor<T>& grad_output, std::vector<Tensor<T>*> grad_inputs)
        : tape_(tape),
          inputs_(inputs),
          output_(output),
          grad_output_(grad_output),
          grad_inputs_(std::move(grad_inputs)) {}

    const Tensor<T>& grad_output() const { return grad_output_; }
    const Tensor<T>& output() const;
    const Tensor<T>& input(std::size_t i) const;
    /// Accumulate into this buffer with +=; null when input i needs no gradient.
    Tensor<T>* grad_input(std::size_t i) const { return grad_inputs_[i]; }

private:
    const Tape<T>& tape_;
    const std::vector<VarId>& inputs_;
    VarId output_;
    const Tensor<T>& grad_output_;
    std::vector<Tensor<T>*> grad_inputs_;
};

template <class T>
using BackwardFn = std::function<void(const BackwardContext<T>&)>;

/// Gradients returned by Tape::backward, keyed by leaf VarId.
template <class T>
class GradMap {
public:
    bool contains(VarId id) const { return id.index < grads_.size() && grads_[id.index].has_value(); }
    const Tensor<T>& operator[](VarId id) const;

private:
    friend class Tape<T>;
    std::vector<std::optional<Tensor<T>>> grads_;
};

/// Records operations in execution order; backward replays them in reverse.
/// Single-session object: do not share a Tape between threads.
template <class T>
class Tape {
public:
    VarId constant(Tensor<T> value) { return push(std::move(value), false, {}, {}); }
    VarId variable(Tensor<T> value) { return push(std::move(value), true, {}, {}); }

    /// Records an op output. The node requires a gradient when any input does;
    /// otherwise the backward rule is dropped.
    VarId record(Tensor<T> value, std::vector<VarId> inputs, BackwardFn<T> backward);

    const Tensor<T>& value(VarId id) const;
    bool requires_grad(VarId id) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and returns the gradient of every
    /// requires_grad leaf. Leaves the loss does not depend on get zeros.
    GradMap<T> backward(VarId loss) const;

private:
    struct Node {
        Tensor<T> value;
        bool requires_grad = false;
        bool is_leaf = true;
        std::vector<VarId> inputs;
        BackwardFn<T> backward;
    };

    VarId push(Tensor<T> value, bool requires_grad, std::vector<VarId> inputs, BackwardFn<T> fn);
    void check(VarId id) const;

    std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace sgf
