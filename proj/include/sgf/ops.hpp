#pragma once

// Differentiable layer operations. Image tensors are channels-last:
// [n, h, w, c] for a batch or [h, w, c] for a single sample. Every
// convolution is stride 1 with "same" zero padding; downsampling happens
// only in pooling.

#include <optional>
#include <span>

#include "sgf/tape.hpp"

namespace sgf {

enum class Mode { Train, Infer };

/// Exact pooling rejects spatial dims that the window does not divide;
/// Floor drops the trailing rows/columns instead.
enum class PoolRounding { Exact, Floor };

template <class T>
struct BatchNormRunning {
    Tensor<T>* mean = nullptr;      // [c]
    Tensor<T>* variance = nullptr;  // [c]
    double momentum = 0.99;
    double epsilon = 1e-5;
};

inline constexpr double kLeakySlope = 0.1;
inline constexpr double kProbabilityFloor = 1e-12;

// elementwise / structural
template <class T> VarId add(Tape<T>& tape, VarId a, VarId b);
template <class T> VarId mul(Tape<T>& tape, VarId a, VarId b);
template <class T> VarId scale(Tape<T>& tape, VarId a, T factor);
template <class T> VarId sum(Tape<T>& tape, VarId a);
template <class T> VarId reshape(Tape<T>& tape, VarId a, Shape shape);
/// Keeps the leading (batch) axis and flattens the rest.
template <class T> VarId flatten(Tape<T>& tape, VarId x);
/// Spatial sub-rectangle of an image tensor; channels are preserved.
template <class T>
VarId crop(Tape<T>& tape, VarId x, std::size_t row0, std::size_t rows, std::size_t col0,
           std::size_t cols);

// activations
template <class T> VarId relu(Tape<T>& tape, VarId x);
template <class T> VarId leaky_relu(Tape<T>& tape, VarId x, T alpha = T(kLeakySlope));
/// Softmax over the last axis, max-subtracted.
template <class T> VarId softmax(Tape<T>& tape, VarId logits);

// layers
/// kernel [kh, kw, c_in, c_out], bias [c_out]; kh and kw odd.
template <class T>
VarId conv2d(Tape<T>& tape, VarId x, VarId kernel, std::optional<VarId> bias = std::nullopt);
/// kernel [kh, kw, c], bias [c]; each channel convolved on its own.
template <class T>
VarId depthwise_conv2d(Tape<T>& tape, VarId x, VarId kernel,
                       std::optional<VarId> bias = std::nullopt);
/// Pointwise 1x1 [1, 1, c_in, c_mid] first, then depthwise [kh, kw, c_mid],
/// then a single bias [c_mid].
template <class T>
VarId separable_conv2d(Tape<T>& tape, VarId x, VarId pointwise, VarId depthwise,
                       std::optional<VarId> bias = std::nullopt);
/// Normalizes over every axis but the last. Train mode uses batch statistics
/// and updates the running buffers; Infer mode reads the running buffers.
template <class T>
VarId batchnorm(Tape<T>& tape, VarId x, VarId gamma, VarId beta, BatchNormRunning<T> running,
                Mode mode);
/// Non-overlapping k x k max; gradient goes to the first maximum in
/// row-major window order.
template <class T>
VarId maxpool(Tape<T>& tape, VarId x, std::size_t k, PoolRounding rounding = PoolRounding::Exact);
/// [n, h, w, c] -> [n, c]; [h, w, c] -> [c].
template <class T> VarId global_avg_pool(Tape<T>& tape, VarId x);
/// x [d_in] or [n, d_in]; weights [d_in, d_out]; bias [d_out].
template <class T> VarId dense(Tape<T>& tape, VarId x, VarId weights, VarId bias);
/// Elementwise sum after an optional 1x1 projection of x onto y's channels.
template <class T>
VarId residual_add(Tape<T>& tape, VarId x, VarId y,
                   std::optional<VarId> projection = std::nullopt);

// loss
/// Mean over rows of -log(max(p[label], 1e-12)); probs [k] or [n, k].
template <class T>
VarId cross_entropy(Tape<T>& tape, VarId probs, std::span<const int> labels);

}  // namespace sgf
