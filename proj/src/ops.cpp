#include "sgf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sgf {
namespace {

struct ImageDims {
    std::size_t n, h, w, c;
};

ImageDims image_dims(const Shape& s, const char* op) {
    if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
    if (s.size() == 3) return {1, s[0], s[1], s[2]};
    fail(ErrorCode::ShapeMismatch,
         std::string(op) + ": expected [h, w, c] or [n, h, w, c], got " + to_string(s));
}

Shape image_shape(const Shape& like, std::size_t h, std::size_t w, std::size_t c) {
    if (like.size() == 4) return {like[0], h, w, c};
    return {h, w, c};
}

std::ptrdiff_t sdiff(std::size_t a, std::size_t b) {
    return static_cast<std::ptrdiff_t>(a) - static_cast<std::ptrdiff_t>(b);
}

// ---------------------------------------------------------------------------
// Convolution kernels (NHWC, stride 1, same padding). Parallel loops only
// split disjoint output elements; every sum runs in a fixed sequential order.

template <class T>
void conv_forward(const T* x, const T* k, const T* bias, T* out, ImageDims d, std::size_t kh,
                  std::size_t kw, std::size_t co) {
    const std::size_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const std::size_t ci = d.c;
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(d.n * d.h);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const std::size_t n = static_cast<std::size_t>(r) / d.h;
        const std::size_t y = static_cast<std::size_t>(r) % d.h;
        for (std::size_t xx = 0; xx < d.w; ++xx) {
            T* o = out + ((n * d.h + y) * d.w + xx) * co;
            for (std::size_t q = 0; q < co; ++q) o[q] = bias ? bias[q] : T{0};
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = sdiff(y + ky, ph);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t ix = sdiff(xx + kx, pw);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                    const T* in = x + ((n * d.h + iy) * d.w + ix) * ci;
                    const T* wk = k + (ky * kw + kx) * ci * co;
                    for (std::size_t c = 0; c < ci; ++c) {
                        const T v = in[c];
                        const T* wrow = wk + c * co;
                        for (std::size_t q = 0; q < co; ++q) o[q] += v * wrow[q];
                    }
                }
            }
        }
    }
}

template <class T>
void conv_backward_input(const T* dy, const T* k, T* dx, ImageDims d, std::size_t kh,
                         std::size_t kw, std::size_t co) {
    const std::size_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const std::size_t ci = d.c;
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(d.n * d.h);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const std::size_t n = static_cast<std::size_t>(r) / d.h;
        const std::size_t iy = static_cast<std::size_t>(r) % d.h;
        for (std::size_t ix = 0; ix < d.w; ++ix) {
            T* g_in = dx + ((n * d.h + iy) * d.w + ix) * ci;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t oy = sdiff(iy + ph, ky);
                if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t ox = sdiff(ix + pw, kx);
                    if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(d.w)) continue;
                    const T* g = dy + ((n * d.h + oy) * d.w + ox) * co;
                    const T* wk = k + (ky * kw + kx) * ci * co;
                    for (std::size_t c = 0; c < ci; ++c) {
                        const T* wrow = wk + c * co;
                        T s{0};
                        for (std::size_t q = 0; q < co; ++q) s += g[q] * wrow[q];
                        g_in[c] += s;
                    }
                }
            }
        }
    }
}

template <class T>
void conv_backward_kernel(const T* x, const T* dy, T* dk, ImageDims d, std::size_t kh,
                          std::size_t kw, std::size_t co) {
    const std::size_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const std::size_t ci = d.c;
    const std::ptrdiff_t taps = static_cast<std::ptrdiff_t>(kh * kw);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < taps; ++t) {
        const std::size_t ky = static_cast<std::size_t>(t) / kw;
        const std::size_t kx = static_cast<std::size_t>(t) % kw;
        T* dwk = dk + static_cast<std::size_t>(t) * ci * co;
        for (std::size_t n = 0; n < d.n; ++n) {
            for (std::size_t y = 0; y < d.h; ++y) {
                const std::ptrdiff_t iy = sdiff(y + ky, ph);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                for (std::size_t xx = 0; xx < d.w; ++xx) {
                    const std::ptrdiff_t ix = sdiff(xx + kx, pw);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                    const T* in = x + ((n * d.h + iy) * d.w + ix) * ci;
                    const T* g = dy + ((n * d.h + y) * d.w + xx) * co;
                    for (std::size_t c = 0; c < ci; ++c) {
                        const T v = in[c];
                        if (v == T{0}) continue;
                        T* row = dwk + c * co;
                        for (std::size_t q = 0; q < co; ++q) row[q] += v * g[q];
                    }
                }
            }
        }
    }
}

template <class T>
void depthwise_forward(const T* x, const T* k, const T* bias, T* out, ImageDims d, std::size_t kh,
                       std::size_t kw) {
    const std::size_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const std::size_t c = d.c;
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(d.n * d.h);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const std::size_t n = static_cast<std::size_t>(r) / d.h;
        const std::size_t y = static_cast<std::size_t>(r) % d.h;
        for (std::size_t xx = 0; xx < d.w; ++xx) {
            T* o = out + ((n * d.h + y) * d.w + xx) * c;
            for (std::size_t q = 0; q < c; ++q) o[q] = bias ? bias[q] : T{0};
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = sdiff(y + ky, ph);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t ix = sdiff(xx + kx, pw);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                    const T* in = x + ((n * d.h + iy) * d.w + ix) * c;
                    const T* wk = k + (ky * kw + kx) * c;
                    for (std::size_t q = 0; q < c; ++q) o[q] += in[q] * wk[q];
                }
            }
        }
    }
}

template <class T>
void depthwise_backward_input(const T* dy, const T* k, T* dx, ImageDims d, std::size_t kh,
                              std::size_t kw) {
    const std::size_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const std::size_t c = d.c;
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(d.n * d.h);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const std::size_t n = static_cast<std::size_t>(r) / d.h;
        const std::size_t iy = static_cast<std::size_t>(r) % d.h;
        for (std::size_t ix = 0; ix < d.w; ++ix) {
            T* g_in = dx + ((n * d.h + iy) * d.w + ix) * c;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t oy = sdiff(iy + ph, ky);
                if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t ox = sdiff(ix + pw, kx);
                    if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(d.w)) continue;
                    const T* g = dy + ((n * d.h + oy) * d.w + ox) * c;
                    const T* wk = k + (ky * kw + kx) * c;
                    for (std::size_t q = 0; q < c; ++q) g_in[q] += g[q] * wk[q];
                }
            }
        }
    }
}

template <class T>
void depthwise_backward_kernel(const T* x, const T* dy, T* dk, ImageDims d, std::size_t kh,
                               std::size_t kw) {
    const std::size_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const std::size_t c = d.c;
    const std::ptrdiff_t taps = static_cast<std::ptrdiff_t>(kh * kw);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < taps; ++t) {
        const std::size_t ky = static_cast<std::size_t>(t) / kw;
        const std::size_t kx = static_cast<std::size_t>(t) % kw;
        T* row = dk + static_cast<std::size_t>(t) * c;
        for (std::size_t n = 0; n < d.n; ++n) {
            for (std::size_t y = 0; y < d.h; ++y) {
                const std::ptrdiff_t iy = sdiff(y + ky, ph);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                for (std::size_t xx = 0; xx < d.w; ++xx) {
                    const std::ptrdiff_t ix = sdiff(xx + kx, pw);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                    const T* in = x + ((n * d.h + iy) * d.w + ix) * c;
                    const T* g = dy + ((n * d.h + y) * d.w + xx) * c;
                    for (std::size_t q = 0; q < c; ++q) row[q] += in[q] * g[q];
                }
            }
        }
    }
}

template <class T>
void bias_backward(const T* dy, T* db, std::size_t rows, std::size_t c) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* g = dy + r * c;
        for (std::size_t q = 0; q < c; ++q) db[q] += g[q];
    }
}

template <class T>
void accumulate(Tensor<T>* dst, const Tensor<T>& src) {
    if (!dst) return;
    T* d = dst->ptr();
    const T* s = src.ptr();
    for (std::size_t i = 0; i < src.size(); ++i) d[i] += s[i];
}

void check_odd_kernel(std::size_t kh, std::size_t kw, const char* op) {
    require(kh % 2 == 1 && kw % 2 == 1, ErrorCode::InvalidArgument,
            std::string(op) + ": kernel dims must be odd for same padding");
}

}  // namespace

// ---------------------------------------------------------------------------

template <class T>
VarId add(Tape<T>& tape, VarId a, VarId b) {
    const auto& va = tape.value(a);
    const auto& vb = tape.value(b);
    require(va.shape() == vb.shape(), ErrorCode::ShapeMismatch,
            "add: " + to_string(va.shape()) + " vs " + to_string(vb.shape()));
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
    return tape.record(std::move(out), {a, b}, [](const BackwardContext<T>& ctx) {
        accumulate(ctx.grad_input(0), ctx.grad_output());
        accumulate(ctx.grad_input(1), ctx.grad_output());
    });
}

template <class T>
VarId mul(Tape<T>& tape, VarId a, VarId b) {
    const auto& va = tape.value(a);
    const auto& vb = tape.value(b);
    require(va.shape() == vb.shape(), ErrorCode::ShapeMismatch,
            "mul: " + to_string(va.shape()) + " vs " + to_string(vb.shape()));
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    return tape.record(std::move(out), {a, b}, [](const BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_output();
        const auto& xa = ctx.input(0);
        const auto& xb = ctx.input(1);
        if (auto* ga = ctx.grad_input(0))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * xb[i];
        if (auto* gb = ctx.grad_input(1))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * xa[i];
    });
}

template <class T>
VarId scale(Tape<T>& tape, VarId a, T factor) {
    const auto& va = tape.value(a);
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * factor;
    return tape.record(std::move(out), {a}, [factor](const BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_output();
        auto* gx = ctx.grad_input(0);
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * factor;
    });
}

template <class T>
VarId sum(Tape<T>& tape, VarId a) {
    const auto& va = tape.value(a);
    T total{0};
    for (auto v : va.data()) total += v;
    return tape.record(Tensor<T>::scalar(total), {a}, [](const BackwardContext<T>& ctx) {
        const T g = ctx.grad_output()[0];
        auto* gx = ctx.grad_input(0);
        for (auto& v : gx->data()) v += g;
    });
}

template <class T>
VarId reshape(Tape<T>& tape, VarId a, Shape shape) {
    Tensor<T> out = tape.value(a).reshaped(std::move(shape));
    return tape.record(std::move(out), {a}, [](const BackwardContext<T>& ctx) {
        auto* gx = ctx.grad_input(0);
        const auto& g = ctx.grad_output();
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    });
}

template <class T>
VarId flatten(Tape<T>& tape, VarId x) {
    const auto& s = tape.value(x).shape();
    require(!s.empty(), ErrorCode::ShapeMismatch, "flatten: scalar input");
    std::size_t rest = 1;
    for (std::size_t i = 1; i < s.size(); ++i) rest *= s[i];
    return reshape(tape, x, Shape{s[0], rest});
}

template <class T>
VarId crop(Tape<T>& tape, VarId x, std::size_t row0, std::size_t rows, std::size_t col0,
           std::size_t cols) {
    const auto& vx = tape.value(x);
    const ImageDims d = image_dims(vx.shape(), "crop");
    require(rows > 0 && cols > 0 && row0 + rows <= d.h && col0 + cols <= d.w,
            ErrorCode::InvalidArgument,
            "crop: rectangle (" + std::to_string(row0) + "+" + std::to_string(rows) + ", " +
                std::to_string(col0) + "+" + std::to_string(cols) + ") outside " +
                to_string(vx.shape()));
    Tensor<T> out(image_shape(vx.shape(), rows, cols, d.c));
    const std::size_t span = cols * d.c;
    for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t r = 0; r < rows; ++r) {
            const T* src = vx.ptr() + ((n * d.h + row0 + r) * d.w + col0) * d.c;
            std::copy(src, src + span, out.ptr() + (n * rows + r) * span);
        }
    return tape.record(std::move(out), {x}, [=](const BackwardContext<T>& ctx) {
        auto* gx = ctx.grad_input(0);
        const auto& g = ctx.grad_output();
        for (std::size_t n = 0; n < d.n; ++n)
            for (std::size_t r = 0; r < rows; ++r) {
                T* dst = gx->ptr() + ((n * d.h + row0 + r) * d.w + col0) * d.c;
                const T* src = g.ptr() + (n * rows + r) * span;
                for (std::size_t i = 0; i < span; ++i) dst[i] += src[i];
            }
    });
}

template <class T>
VarId relu(Tape<T>& tape, VarId x) {
    const auto& vx = tape.value(x);
    Tensor<T> out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] > T{0} ? vx[i] : T{0};
    return tape.record(std::move(out), {x}, [](const BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_output();
        const auto& in = ctx.input(0);
        auto* gx = ctx.grad_input(0);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (in[i] > T{0}) (*gx)[i] += g[i];
    });
}

template <class T>
VarId leaky_relu(Tape<T>& tape, VarId x, T alpha) {
    const auto& vx = tape.value(x);
    Tensor<T> out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] > T{0} ? vx[i] : alpha * vx[i];
    return tape.record(std::move(out), {x}, [alpha](const BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_output();
        const auto& in = ctx.input(0);
        auto* gx = ctx.grad_input(0);
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += in[i] > T{0} ? g[i] : alpha * g[i];
    });
}

template <class T>
VarId softmax(Tape<T>& tape, VarId logits) {
    const auto& vx = tape.value(logits);
    require(vx.rank() >= 1 && vx.size() > 0, ErrorCode::ShapeMismatch, "softmax: empty input");
    const std::size_t k = vx.shape().back();
    const std::size_t rows = vx.size() / k;
    Tensor<T> out(vx.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = vx.ptr() + r * k;
        T* o = out.ptr() + r * k;
        const T mx = *std::max_element(in, in + k);
        T total{0};
        for (std::size_t j = 0; j < k; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        for (std::size_t j = 0; j < k; ++j) o[j] /= total;
    }
    return tape.record(std::move(out), {logits}, [k, rows](const BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_output();
        const auto& y = ctx.output();
        auto* gx = ctx.grad_input(0);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* gy = g.ptr() + r * k;
            const T* yy = y.ptr() + r * k;
            T dot{0};
            for (std::size_t j = 0; j < k; ++j) dot += gy[j] * yy[j];
            T* dx = gx->ptr() + r * k;
            for (std::size_t j = 0; j < k; ++j) dx[j] += yy[j] * (gy[j] - dot);
        }
    });
}

template <class T>
VarId conv2d(Tape<T>& tape, VarId x, VarId kernel, std::optional<VarId> bias) {
    const auto& vx = tape.value(x);
    const auto& vk = tape.value(kernel);
    const ImageDims d = image_dims(vx.shape(), "conv2d");
    require(vk.rank() == 4, ErrorCode::ShapeMismatch,
            "conv2d: kernel must be [kh, kw, c_in, c_out], got " + to_string(vk.shape()));
    const std::size_t kh = vk.dim(0), kw = vk.dim(1), co = vk.dim(3);
    check_odd_kernel(kh, kw, "conv2d");
    require(vk.dim(2) == d.c, ErrorCode::ShapeMismatch,
            "conv2d: input has " + std::to_string(d.c) + " channels, kernel expects " +
                std::to_string(vk.dim(2)));
    const T* bias_ptr = nullptr;
    std::vector<VarId> inputs{x, kernel};
    if (bias) {
        const auto& vb = tape.value(*bias);
        require(vb.shape() == Shape{co}, ErrorCode::ShapeMismatch,
                "conv2d: bias must be [" + std::to_string(co) + "]");
        bias_ptr = vb.ptr();
        inputs.push_back(*bias);
    }
    Tensor<T> out(image_shape(vx.shape(), d.h, d.w, co));
    conv_forward(vx.ptr(), vk.ptr(), bias_ptr, out.ptr(), d, kh, kw, co);
    const bool has_bias = bias.has_value();
    return tape.record(std::move(out), std::move(inputs), [=](const BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_output();
        if (auto* gx = ctx.grad_input(0))
            conv_backward_input(g.ptr(), ctx.input(1).ptr(), gx->ptr(), d, kh, kw, co);
        if (auto* gk = ctx.grad_input(1))
            conv_backward_kernel(ctx.input(0).ptr(), g.ptr(), gk->ptr(), d, kh, kw, co);
        if (has_bias)
            if (auto* gb = ctx.grad_input(2)) bias_backward(g.ptr(), gb->ptr(), d.n * d.h * d.w, co);
    });
}

template <class T>
VarId depthwise_conv2d(Tape<T>& tape, VarId x, VarId kernel, std::optional<VarId> bias) {
    const auto& vx = tape.value(x);
    const auto& vk = tape.value(kernel);
    const ImageDims d = image_dims(vx.shape(), "depthwise_conv2d");
    require(vk.rank() == 3, ErrorCode::ShapeMismatch,
            "depthwise_conv2d: kernel must be [kh, kw, c], got " + to_string(vk.shape()));
    const std::size_t kh = vk.dim(0), kw = vk.dim(1);
    check_odd_kernel(kh, kw, "depthwise_conv2d");
    require(vk.dim(2) == d.c, ErrorCode::ShapeMismatch,
            "depthwise_conv2d: input has " + std::to_string(d.c) + " channels, kernel expects " +
                std::to_string(vk.dim(2)));
    const T* bias_ptr = nullptr;
    std::vector<VarId> inputs{x, kernel};
    if (bias) {
        const auto& vb = tape.value(*bias);
        require(vb.shape() == Shape{d.c}, ErrorCode::ShapeMismatch,
                "depthwise_conv2d: bias must be [" + std::to_string(d.c) + "]");
        bias_ptr = vb.ptr();
        inputs.push_back(*bias);
    }
    Tensor<T> out(vx.shape());
    depthwise_forward(vx.ptr(), vk.ptr(), bias_ptr, out.ptr(), d, kh, kw);
    const bool has_bias = bias.has_value();
    return tape.record(std::move(out), std::move(inputs), [=](const BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_output();
        if (auto* gx = ctx.grad_input(0))
            depthwise_backward_input(g.ptr(), ctx.input(1).ptr(), gx->ptr(), d, kh, kw);
        if (auto* gk = ctx.grad_input(1))
            depthwise_backward_kernel(ctx.input(0).ptr(), g.ptr(), gk->ptr(), d, kh, kw);
        if (has_bias)
            if (auto* gb = ctx.grad_input(2)) bias_backward(g.ptr(), gb->ptr(), d.n * d.h * d.w, d.c);
    });
}

template <class T>
VarId separable_conv2d(Tape<T>& tape, VarId x, VarId pointwise, VarId depthwise,
                       std::optional<VarId> bias) {
    const auto& vp = tape.value(pointwise);
    require(vp.rank() == 4 && vp.dim(0) == 1 && vp.dim(1) == 1, ErrorCode::ShapeMismatch,
            "separable_conv2d: pointwise kernel must be [1, 1, c_in, c_mid], got " +
                to_string(vp.shape()));
    const VarId mixed = conv2d(tape, x, pointwise);
    return depthwise_conv2d(tape, mixed, depthwise, bias);
}

template <class T>
VarId batchnorm(Tape<T>& tape, VarId x, VarId gamma, VarId beta, BatchNormRunning<T> running,
                Mode mode) {
    const auto& vx = tape.value(x);
    require(vx.rank() >= 1, ErrorCode::ShapeMismatch, "batchnorm: scalar input");
    const std::size_t c = vx.shape().back();
    const std::size_t count = vx.size() / c;
    const auto& vg = tape.value(gamma);
    const auto& vb = tape.value(beta);
    require(vg.shape() == Shape{c} && vb.shape() == Shape{c}, ErrorCode::ShapeMismatch,
            "batchnorm: gamma/beta must be [" + std::to_string(c) + "]");
    require(running.mean && running.variance && running.mean->shape() == Shape{c} &&
                running.variance->shape() == Shape{c},
            ErrorCode::ShapeMismatch, "batchnorm: running statistics must be [c]");

    std::vector<T> mean(c), invstd(c);
    if (mode == Mode::Train) {
        require(count >= 2, ErrorCode::InvalidArgument,
                "batchnorm: train mode needs at least 2 values per channel, got " +
                    std::to_string(count));
        std::vector<double> acc(c, 0.0), acc2(c, 0.0);
        for (std::size_t r = 0; r < count; ++r) {
            const T* row = vx.ptr() + r * c;
            for (std::size_t q = 0; q < c; ++q) acc[q] += row[q];
        }
        for (std::size_t q = 0; q < c; ++q) acc[q] /= static_cast<double>(count);
        for (std::size_t r = 0; r < count; ++r) {
            const T* row = vx.ptr() + r * c;
            for (std::size_t q = 0; q < c; ++q) {
                const double dlt = row[q] - acc[q];
                acc2[q] += dlt * dlt;
            }
        }
        const double m = running.momentum;
        for (std::size_t q = 0; q < c; ++q) {
            const double var = acc2[q] / static_cast<double>(count);
            const double unbiased = acc2[q] / static_cast<double>(count - 1);
            mean[q] = static_cast<T>(acc[q]);
            invstd[q] = static_cast<T>(1.0 / std::sqrt(var + running.epsilon));
            (*running.mean)[q] = static_cast<T>(m * (*running.mean)[q] + (1.0 - m) * acc[q]);
            (*running.variance)[q] =
                static_cast<T>(m * (*running.variance)[q] + (1.0 - m) * unbiased);
        }
    } else {
        for (std::size_t q = 0; q < c; ++q) {
            mean[q] = (*running.mean)[q];
            invstd[q] = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>((*running.variance)[q]) + running.epsilon));
        }
    }

    Tensor<T> xhat(vx.shape());
    Tensor<T> out(vx.shape());
    for (std::size_t r = 0; r < count; ++r) {
        const T* row = vx.ptr() + r * c;
        T* h = xhat.ptr() + r * c;
        T* o = out.ptr() + r * c;
        for (std::size_t q = 0; q < c; ++q) {
            h[q] = (row[q] - mean[q]) * invstd[q];
            o[q] = vg[q] * h[q] + vb[q];
        }
    }
    const bool train = mode == Mode::Train;
    return tape.record(
        std::move(out), {x, gamma, beta},
        [xhat = std::move(xhat), invstd = std::move(invstd), c, count,
         train](const BackwardContext<T>& ctx) {
            const auto& g = ctx.grad_output();
            const auto& vgam = ctx.input(1);
            std::vector<double> sum_g(c, 0.0), sum_gh(c, 0.0);
            for (std::size_t r = 0; r < count; ++r) {
                const T* gr = g.ptr() + r * c;
                const T* hr = xhat.ptr() + r * c;
                for (std::size_t q = 0; q < c; ++q) {
                    sum_g[q] += gr[q];
                    sum_gh[q] += static_cast<double>(gr[q]) * hr[q];
                }
            }
            if (auto* gg = ctx.grad_input(1))
                for (std::size_t q = 0; q < c; ++q) (*gg)[q] += static_cast<T>(sum_gh[q]);
            if (auto* gb = ctx.grad_input(2))
                for (std::size_t q = 0; q < c; ++q) (*gb)[q] += static_cast<T>(sum_g[q]);
            auto* gx = ctx.grad_input(0);
            if (!gx) return;
            const double inv_count = 1.0 / static_cast<double>(count);
            for (std::size_t r = 0; r < count; ++r) {
                const T* gr = g.ptr() + r * c;
                const T* hr = xhat.ptr() + r * c;
                T* dx = gx->ptr() + r * c;
                for (std::size_t q = 0; q < c; ++q) {
                    const double scale_q = static_cast<double>(vgam[q]) * invstd[q];
                    if (train) {
                        dx[q] += static_cast<T>(scale_q * (gr[q] - inv_count * sum_g[q] -
                                                           hr[q] * inv_count * sum_gh[q]));
                    } else {
                        dx[q] += static_cast<T>(scale_q * gr[q]);
                    }
                }
            }
        });
}

template <class T>
VarId maxpool(Tape<T>& tape, VarId x, std::size_t k, PoolRounding rounding) {
    const auto& vx = tape.value(x);
    const ImageDims d = image_dims(vx.shape(), "maxpool");
    require(k >= 1, ErrorCode::InvalidArgument, "maxpool: window must be positive");
    if (rounding == PoolRounding::Exact)
        require(d.h % k == 0 && d.w % k == 0, ErrorCode::ShapeMismatch,
                "maxpool: " + to_string(vx.shape()) + " not divisible by window " +
                    std::to_string(k));
    const std::size_t oh = d.h / k, ow = d.w / k;
    require(oh > 0 && ow > 0, ErrorCode::ShapeMismatch,
            "maxpool: window " + std::to_string(k) + " larger than " + to_string(vx.shape()));
    Tensor<T> out(image_shape(vx.shape(), oh, ow, d.c));
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx)
                for (std::size_t q = 0; q < d.c; ++q) {
                    std::size_t best = ((n * d.h + y * k) * d.w + xx * k) * d.c + q;
                    for (std::size_t dy = 0; dy < k; ++dy)
                        for (std::size_t dx = 0; dx < k; ++dx) {
                            const std::size_t idx =
                                ((n * d.h + y * k + dy) * d.w + xx * k + dx) * d.c + q;
                            if (vx[idx] > vx[best]) best = idx;
                        }
                    const std::size_t o = ((n * oh + y) * ow + xx) * d.c + q;
                    out[o] = vx[best];
                    argmax[o] = best;
                }
    return tape.record(std::move(out), {x},
                       [argmax = std::move(argmax)](const BackwardContext<T>& ctx) {
                           const auto& g = ctx.grad_output();
                           auto* gx = ctx.grad_input(0);
                           for (std::size_t o = 0; o < g.size(); ++o) (*gx)[argmax[o]] += g[o];
                       });
}

template <class T>
VarId global_avg_pool(Tape<T>& tape, VarId x) {
    const auto& vx = tape.value(x);
    const ImageDims d = image_dims(vx.shape(), "global_avg_pool");
    require(d.h >= 1 && d.w >= 1, ErrorCode::ShapeMismatch, "global_avg_pool: empty spatial dims");
    const std::size_t area = d.h * d.w;
    Tensor<T> out(vx.rank() == 4 ? Shape{d.n, d.c} : Shape{d.c});
    std::vector<double> acc(d.c);
    for (std::size_t n = 0; n < d.n; ++n) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t p = 0; p < area; ++p) {
            const T* row = vx.ptr() + (n * area + p) * d.c;
            for (std::size_t q = 0; q < d.c; ++q) acc[q] += row[q];
        }
        for (std::size_t q = 0; q < d.c; ++q)
            out[n * d.c + q] = static_cast<T>(acc[q] / static_cast<double>(area));
    }
    return tape.record(std::move(out), {x}, [d, area](const BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_output();
        auto* gx = ctx.grad_input(0);
        const T inv = T(1) / static_cast<T>(area);
        for (std::size_t n = 0; n < d.n; ++n)
            for (std::size_t p = 0; p < area; ++p) {
                T* row = gx->ptr() + (n * area + p) * d.c;
                const T* gr = g.ptr() + n * d.c;
                for (std::size_t q = 0; q < d.c; ++q) row[q] += gr[q] * inv;
            }
    });
}

template <class T>
VarId dense(Tape<T>& tape, VarId x, VarId weights, VarId bias) {
    const auto& vx = tape.value(x);
    const auto& vw = tape.value(weights);
    const auto& vb = tape.value(bias);
    require(vx.rank() == 1 || vx.rank() == 2, ErrorCode::ShapeMismatch,
            "dense: input must be [d] or [n, d], got " + to_string(vx.shape()));
    require(vw.rank() == 2, ErrorCode::ShapeMismatch, "dense: weights must be [d_in, d_out]");
    const std::size_t din = vx.shape().back();
    const std::size_t rows = vx.rank() == 2 ? vx.dim(0) : 1;
    const std::size_t dout = vw.dim(1);
    require(vw.dim(0) == din, ErrorCode::ShapeMismatch,
            "dense: input width " + std::to_string(din) + " vs weights " + to_string(vw.shape()));
    require(vb.shape() == Shape{dout}, ErrorCode::ShapeMismatch,
            "dense: bias must be [" + std::to_string(dout) + "]");
    Tensor<T> out(vx.rank() == 2 ? Shape{rows, dout} : Shape{dout});
    for (std::size_t r = 0; r < rows; ++r) {
        T* o = out.ptr() + r * dout;
        std::copy(vb.ptr(), vb.ptr() + dout, o);
        const T* in = vx.ptr() + r * din;
        for (std::size_t i = 0; i < din; ++i) {
            const T v = in[i];
            const T* wrow = vw.ptr() + i * dout;
            for (std::size_t j = 0; j < dout; ++j) o[j] += v * wrow[j];
        }
    }
    return tape.record(std::move(out), {x, weights, bias},
                       [rows, din, dout](const BackwardContext<T>& ctx) {
                           const auto& g = ctx.grad_output();
                           const auto& in = ctx.input(0);
                           const auto& w = ctx.input(1);
                           if (auto* gx = ctx.grad_input(0)) {
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t i = 0; i < din; ++i) {
                                       const T* wrow = w.ptr() + i * dout;
                                       const T* gr = g.ptr() + r * dout;
                                       T s{0};
                                       for (std::size_t j = 0; j < dout; ++j) s += gr[j] * wrow[j];
                                       (*gx)[r * din + i] += s;
                                   }
                           }
                           if (auto* gw = ctx.grad_input(1)) {
                               const std::ptrdiff_t n_in = static_cast<std::ptrdiff_t>(din);
#pragma omp parallel for schedule(static)
                               for (std::ptrdiff_t i = 0; i < n_in; ++i) {
                                   T* wrow = gw->ptr() + static_cast<std::size_t>(i) * dout;
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       const T v = in[r * din + static_cast<std::size_t>(i)];
                                       const T* gr = g.ptr() + r * dout;
                                       for (std::size_t j = 0; j < dout; ++j) wrow[j] += v * gr[j];
                                   }
                               }
                           }
                           if (auto* gb = ctx.grad_input(2)) bias_backward(g.ptr(), gb->ptr(), rows, dout);
                       });
}

template <class T>
VarId residual_add(Tape<T>& tape, VarId x, VarId y, std::optional<VarId> projection) {
    const auto& sx = tape.value(x).shape();
    const auto& sy = tape.value(y).shape();
    const ImageDims dx = image_dims(sx, "residual_add");
    const ImageDims dy = image_dims(sy, "residual_add");
    require(sx.size() == sy.size() && dx.n == dy.n && dx.h == dy.h && dx.w == dy.w,
            ErrorCode::ShapeMismatch,
            "residual_add: spatial dims differ, " + to_string(sx) + " vs " + to_string(sy));
    if (!projection)
        require(dx.c == dy.c, ErrorCode::ShapeMismatch,
                "residual_add: channel counts differ and no projection was given");
    const VarId skip = projection ? conv2d(tape, x, *projection) : x;
    return add(tape, skip, y);
}

template <class T>
VarId cross_entropy(Tape<T>& tape, VarId probs, std::span<const int> labels) {
    const auto& vp = tape.value(probs);
    require(vp.rank() == 1 || vp.rank() == 2, ErrorCode::ShapeMismatch,
            "cross_entropy: probabilities must be [k] or [n, k]");
    const std::size_t k = vp.shape().back();
    const std::size_t rows = vp.rank() == 2 ? vp.dim(0) : 1;
    require(labels.size() == rows, ErrorCode::ShapeMismatch,
            "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                std::to_string(rows) + " rows");
    std::vector<int> lab(labels.begin(), labels.end());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        require(lab[r] >= 0 && static_cast<std::size_t>(lab[r]) < k, ErrorCode::InvalidArgument,
                "cross_entropy: label " + std::to_string(lab[r]) + " outside [0, " +
                    std::to_string(k) + ")");
        const double p = std::max(static_cast<double>(vp[r * k + lab[r]]), kProbabilityFloor);
        total -= std::log(p);
    }
    const double mean = total / static_cast<double>(rows);
    return tape.record(Tensor<T>::scalar(static_cast<T>(mean)), {probs},
                       [lab = std::move(lab), k, rows](const BackwardContext<T>& ctx) {
                           const T g = ctx.grad_output()[0];
                           const auto& p = ctx.input(0);
                           auto* gp = ctx.grad_input(0);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const std::size_t idx = r * k + static_cast<std::size_t>(lab[r]);
                               if (static_cast<double>(p[idx]) < kProbabilityFloor) continue;
                               (*gp)[idx] -= g / (static_cast<T>(rows) * p[idx]);
                           }
                       });
}

#define SGF_INSTANTIATE_OPS(T)                                                                   \
    template VarId add<T>(Tape<T>&, VarId, VarId);                                               \
    template VarId mul<T>(Tape<T>&, VarId, VarId);                                               \
    template VarId scale<T>(Tape<T>&, VarId, T);                                                 \
    template VarId sum<T>(Tape<T>&, VarId);                                                      \
    template VarId reshape<T>(Tape<T>&, VarId, Shape);                                           \
    template VarId flatten<T>(Tape<T>&, VarId);                                                  \
    template VarId crop<T>(Tape<T>&, VarId, std::size_t, std::size_t, std::size_t, std::size_t); \
    template VarId relu<T>(Tape<T>&, VarId);                                                     \
    template VarId leaky_relu<T>(Tape<T>&, VarId, T);                                            \
    template VarId softmax<T>(Tape<T>&, VarId);                                                  \
    template VarId conv2d<T>(Tape<T>&, VarId, VarId, std::optional<VarId>);                      \
    template VarId depthwise_conv2d<T>(Tape<T>&, VarId, VarId, std::optional<VarId>);            \
    template VarId separable_conv2d<T>(Tape<T>&, VarId, VarId, VarId, std::optional<VarId>);     \
    template VarId batchnorm<T>(Tape<T>&, VarId, VarId, VarId, BatchNormRunning<T>, Mode);       \
    template VarId maxpool<T>(Tape<T>&, VarId, std::size_t, PoolRounding);                       \
    template VarId global_avg_pool<T>(Tape<T>&, VarId);                                          \
    template VarId dense<T>(Tape<T>&, VarId, VarId, VarId);                                      \
    template VarId residual_add<T>(Tape<T>&, VarId, VarId, std::optional<VarId>);                \
    template VarId cross_entropy<T>(Tape<T>&, VarId, std::span<const int>);

SGF_INSTANTIATE_OPS(float)
SGF_INSTANTIATE_OPS(double)

#undef SGF_INSTANTIATE_OPS

}  // namespace sgf
