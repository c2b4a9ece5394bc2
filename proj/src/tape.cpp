#include "sgf/tape.hpp"

#include <cassert>
#include <string>

namespace sgf {

template <class T>
const Tensor<T>& BackwardContext<T>::output() const {
    return tape_.value(output_);
}

template <class T>
const Tensor<T>& BackwardContext<T>::input(std::size_t i) const {
    return tape_.value(inputs_[i]);
}

template <class T>
const Tensor<T>& GradMap<T>::operator[](VarId id) const {
    require(contains(id), ErrorCode::InvalidArgument,
            "no gradient recorded for tape id " + std::to_string(id.index));
    return *grads_[id.index];
}

template <class T>
VarId Tape<T>::push(Tensor<T> value, bool requires_grad, std::vector<VarId> inputs,
                    BackwardFn<T> fn) {
#ifndef NDEBUG
    assert(value.all_finite());
#endif
    const VarId id{static_cast<std::uint32_t>(nodes_.size())};
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.is_leaf = inputs.empty();
    node.inputs = std::move(inputs);
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return id;
}

template <class T>
VarId Tape<T>::record(Tensor<T> value, std::vector<VarId> inputs, BackwardFn<T> backward) {
    bool needs_grad = false;
    for (auto in : inputs) {
        check(in);
        needs_grad = needs_grad || nodes_[in.index].requires_grad;
    }
    if (!needs_grad) backward = nullptr;
    return push(std::move(value), needs_grad, std::move(inputs), std::move(backward));
}

template <class T>
void Tape<T>::check(VarId id) const {
    require(id.index < nodes_.size(), ErrorCode::InvalidArgument,
            "tape id " + std::to_string(id.index) + " is not on this tape");
}

template <class T>
const Tensor<T>& Tape<T>::value(VarId id) const {
    check(id);
    return nodes_[id.index].value;
}

template <class T>
bool Tape<T>::requires_grad(VarId id) const {
    check(id);
    return nodes_[id.index].requires_grad;
}

template <class T>
GradMap<T> Tape<T>::backward(VarId loss) const {
    check(loss);
    const auto& loss_value = nodes_[loss.index].value;
    require(loss_value.size() == 1 && loss_value.rank() <= 1, ErrorCode::ShapeMismatch,
            "backward needs a scalar loss, got " + to_string(loss_value.shape()));

    std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
    grads[loss.index] = Tensor<T>(loss_value.shape(), T{1});

    for (std::size_t i = loss.index + 1; i-- > 0;) {
        const Node& node = nodes_[i];
        if (node.is_leaf || !node.backward || !grads[i]) continue;

        std::vector<Tensor<T>*> grad_inputs(node.inputs.size(), nullptr);
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const auto in = node.inputs[k].index;
            if (!nodes_[in].requires_grad) continue;
            if (!grads[in]) grads[in] = Tensor<T>(nodes_[in].value.shape());
            grad_inputs[k] = &*grads[in];
        }
        BackwardContext<T> ctx(*this, node.inputs, VarId{static_cast<std::uint32_t>(i)}, *grads[i],
                               std::move(grad_inputs));
        node.backward(ctx);
        // Interior gradients are consumed exactly once in reverse order.
        grads[i].reset();
    }

    GradMap<T> result;
    result.grads_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& node = nodes_[i];
        if (!node.is_leaf || !node.requires_grad) continue;
        if (grads[i])
            result.grads_[i] = std::move(grads[i]);
        else
            result.grads_[i] = Tensor<T>(node.value.shape());
    }
    if (nodes_[loss.index].is_leaf && nodes_[loss.index].requires_grad)
        result.grads_[loss.index] = Tensor<T>(loss_value.shape(), T{1});
    return result;
}

template class BackwardContext<float>;
template class BackwardContext<double>;
template class GradMap<float>;
template class GradMap<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace sgf
