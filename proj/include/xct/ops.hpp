#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "xct/conv_kernels.hpp"
#include "xct/errors.hpp"
#include "xct/tape.hpp"

// Differentiable operations. Every function here registers a backward rule
// on the tape; gradients are accumulated (+=) into parent buffers so fan-out
// sums naturally. Broadcasting is limited to scalar-with-tensor; anything
// shaped (bias, concat, depth broadcast) is its own explicit op.

namespace xct {

namespace detail {

template <typename T>
inline Tape<T>& same_tape(const char* op, Node<T> a) {
    if (!a.valid()) throw GraphError(std::string(op) + ": invalid node handle");
    a.tape->check(a, op);
    return *a.tape;
}

template <typename T>
inline Tape<T>& same_tape(const char* op, Node<T> a, Node<T> b) {
    Tape<T>& t = same_tape(op, a);
    if (b.tape != a.tape)
        throw GraphError(std::string(op) + ": operands live on different tapes");
    t.check(b, op);
    return t;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

} // namespace detail

// ---------- elementwise ----------

template <typename T>
Node<T> add(Node<T> a, Node<T> b) {
    Tape<T>& t = detail::same_tape("add", a, b);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    detail::require(av.same_shape(bv), "add: shape mismatch " + shape_str(av.shape) + " vs " +
                                           shape_str(bv.shape));
    Tensor<T> out = av;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    const int pa = a.id, pb = b.id;
    return t.record("add", std::move(out), {a, b}, [pa, pb](Tape<T>& t, int self) {
        const auto& g = t.id_grad(self);
        if (t.id_requires_grad(pa)) {
            auto& ga = t.grad_buffer(pa);
            for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.id_requires_grad(pb)) {
            auto& gb = t.grad_buffer(pb);
            for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
        }
    });
}

template <typename T>
Node<T> sub(Node<T> a, Node<T> b) {
    Tape<T>& t = detail::same_tape("sub", a, b);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    detail::require(av.same_shape(bv), "sub: shape mismatch " + shape_str(av.shape) + " vs " +
                                           shape_str(bv.shape));
    Tensor<T> out = av;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
    const int pa = a.id, pb = b.id;
    return t.record("sub", std::move(out), {a, b}, [pa, pb](Tape<T>& t, int self) {
        const auto& g = t.id_grad(self);
        if (t.id_requires_grad(pa)) {
            auto& ga = t.grad_buffer(pa);
            for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.id_requires_grad(pb)) {
            auto& gb = t.grad_buffer(pb);
            for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
        }
    });
}

template <typename T>
Node<T> mul(Node<T> a, Node<T> b) {
    Tape<T>& t = detail::same_tape("mul", a, b);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    detail::require(av.same_shape(bv), "mul: shape mismatch " + shape_str(av.shape) + " vs " +
                                           shape_str(bv.shape));
    Tensor<T> out = av;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
    const int pa = a.id, pb = b.id;
    return t.record("mul", std::move(out), {a, b}, [pa, pb](Tape<T>& t, int self) {
        const auto& g = t.id_grad(self);
        const auto& av = t.id_value(pa);
        const auto& bv = t.id_value(pb);
        if (t.id_requires_grad(pa)) {
            auto& ga = t.grad_buffer(pa);
            for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
        }
        if (t.id_requires_grad(pb)) {
            auto& gb = t.grad_buffer(pb);
            for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
        }
    });
}

template <typename T>
Node<T> add_scalar(Node<T> a, double c) {
    Tape<T>& t = detail::same_tape("add_scalar", a);
    Tensor<T> out = t.value(a);
    const T tc = static_cast<T>(c);
    for (T& v : out.data) v += tc;
    const int pa = a.id;
    return t.record("add_scalar", std::move(out), {a}, [pa](Tape<T>& t, int self) {
        const auto& g = t.id_grad(self);
        if (!t.id_requires_grad(pa)) return;
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    });
}

template <typename T>
Node<T> mul_scalar(Node<T> a, double c) {
    Tape<T>& t = detail::same_tape("mul_scalar", a);
    Tensor<T> out = t.value(a);
    const T tc = static_cast<T>(c);
    for (T& v : out.data) v *= tc;
    const int pa = a.id;
    return t.record("mul_scalar", std::move(out), {a}, [pa, tc](Tape<T>& t, int self) {
        const auto& g = t.id_grad(self);
        if (!t.id_requires_grad(pa)) return;
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * tc;
    });
}

template <typename T>
Node<T> relu(Node<T> a) {
    Tape<T>& t = detail::same_tape("relu", a);
    Tensor<T> out = t.value(a);
    for (T& v : out.data)
        if (v < T(0)) v = T(0);
    const int pa = a.id;
    return t.record("relu", std::move(out), {a}, [pa](Tape<T>& t, int self) {
        if (!t.id_requires_grad(pa)) return;
        const auto& g = t.id_grad(self);
        const auto& x = t.id_value(pa);
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < g.data.size(); ++i)
            if (x.data[i] > T(0)) ga.data[i] += g.data[i];
    });
}

template <typename T>
Node<T> leaky_relu(Node<T> a, double slope) {
    Tape<T>& t = detail::same_tape("leaky_relu", a);
    const T s = static_cast<T>(slope);
    Tensor<T> out = t.value(a);
    for (T& v : out.data)
        if (v < T(0)) v *= s;
    const int pa = a.id;
    return t.record("leaky_relu", std::move(out), {a}, [pa, s](Tape<T>& t, int self) {
        if (!t.id_requires_grad(pa)) return;
        const auto& g = t.id_grad(self);
        const auto& x = t.id_value(pa);
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < g.data.size(); ++i)
            ga.data[i] += x.data[i] > T(0) ? g.data[i] : g.data[i] * s;
    });
}

template <typename T>
Node<T> sigmoid(Node<T> a) {
    Tape<T>& t = detail::same_tape("sigmoid", a);
    Tensor<T> out = t.value(a);
    for (T& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    const int pa = a.id;
    return t.record("sigmoid", std::move(out), {a}, [pa](Tape<T>& t, int self) {
        if (!t.id_requires_grad(pa)) return;
        const auto& g = t.id_grad(self);
        const auto& y = t.id_value(self);
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < g.data.size(); ++i)
            ga.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
    });
}

template <typename T>
Node<T> square(Node<T> a) {
    Tape<T>& t = detail::same_tape("square", a);
    Tensor<T> out = t.value(a);
    for (T& v : out.data) v *= v;
    const int pa = a.id;
    return t.record("square", std::move(out), {a}, [pa](Tape<T>& t, int self) {
        if (!t.id_requires_grad(pa)) return;
        const auto& g = t.id_grad(self);
        const auto& x = t.id_value(pa);
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < g.data.size(); ++i)
            ga.data[i] += T(2) * x.data[i] * g.data[i];
    });
}

// |x|; subgradient 0 at the kink.
template <typename T>
Node<T> abs_val(Node<T> a) {
    Tape<T>& t = detail::same_tape("abs_val", a);
    Tensor<T> out = t.value(a);
    for (T& v : out.data) v = std::abs(v);
    const int pa = a.id;
    return t.record("abs_val", std::move(out), {a}, [pa](Tape<T>& t, int self) {
        if (!t.id_requires_grad(pa)) return;
        const auto& g = t.id_grad(self);
        const auto& x = t.id_value(pa);
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < g.data.size(); ++i) {
            if (x.data[i] > T(0)) ga.data[i] += g.data[i];
            else if (x.data[i] < T(0)) ga.data[i] -= g.data[i];
        }
    });
}

// ---------- reductions ----------

template <typename T>
Node<T> sum_all(Node<T> a) {
    Tape<T>& t = detail::same_tape("sum_all", a);
    const auto& av = t.value(a);
    double acc = 0.0;
    for (const T& v : av.data) acc += static_cast<double>(v);
    const int pa = a.id;
    return t.record("sum_all", Tensor<T>::scalar(static_cast<T>(acc)), {a},
                    [pa](Tape<T>& t, int self) {
                        if (!t.id_requires_grad(pa)) return;
                        const T g0 = t.id_grad(self).data[0];
                        auto& ga = t.grad_buffer(pa);
                        for (T& v : ga.data) v += g0;
                    });
}

template <typename T>
Node<T> mean_all(Node<T> a) {
    Tape<T>& t = detail::same_tape("mean_all", a);
    const auto& av = t.value(a);
    detail::require(av.numel() > 0, "mean_all: empty tensor");
    double acc = 0.0;
    for (const T& v : av.data) acc += static_cast<double>(v);
    const double inv_n = 1.0 / static_cast<double>(av.numel());
    const int pa = a.id;
    return t.record("mean_all", Tensor<T>::scalar(static_cast<T>(acc * inv_n)), {a},
                    [pa, inv_n](Tape<T>& t, int self) {
                        if (!t.id_requires_grad(pa)) return;
                        const T g = static_cast<T>(static_cast<double>(t.id_grad(self).data[0]) * inv_n);
                        auto& ga = t.grad_buffer(pa);
                        for (T& v : ga.data) v += g;
                    });
}

// Mean over one axis; the axis is removed from the shape. The backward pass
// spreads the incoming gradient uniformly (1/len) along the collapsed axis.
template <typename T>
Node<T> mean_along_axis(Node<T> a, int axis) {
    Tape<T>& t = detail::same_tape("mean_along_axis", a);
    const auto& av = t.value(a);
    detail::require(axis >= 0 && axis < av.rank(),
                    "mean_along_axis: axis " + std::to_string(axis) + " out of range for rank " +
                        std::to_string(av.rank()));
    const int len = av.shape[axis];
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= av.shape[i];
    for (int i = axis + 1; i < av.rank(); ++i) inner *= av.shape[i];
    Shape out_shape;
    for (int i = 0; i < av.rank(); ++i)
        if (i != axis) out_shape.push_back(av.shape[i]);
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    const double inv = 1.0 / static_cast<double>(len);
    for (int64_t o = 0; o < outer; ++o) {
        const T* base = av.data.data() + o * len * inner;
        T* orow = out.data.data() + o * inner;
        for (int64_t i = 0; i < inner; ++i) {
            double acc = 0.0;
            for (int k = 0; k < len; ++k) acc += static_cast<double>(base[k * inner + i]);
            orow[i] = static_cast<T>(acc * inv);
        }
    }
    const int pa = a.id;
    return t.record("mean_along_axis", std::move(out), {a},
                    [pa, outer, inner, len, inv](Tape<T>& t, int self) {
                        if (!t.id_requires_grad(pa)) return;
                        const auto& g = t.id_grad(self);
                        auto& ga = t.grad_buffer(pa);
                        const T tinv = static_cast<T>(inv);
                        for (int64_t o = 0; o < outer; ++o) {
                            const T* grow = g.data.data() + o * inner;
                            T* base = ga.data.data() + o * len * inner;
                            for (int k = 0; k < len; ++k)
                                for (int64_t i = 0; i < inner; ++i)
                                    base[k * inner + i] += grow[i] * tinv;
                        }
                    });
}

// ---------- convolutions ----------

namespace detail {

template <typename T>
Node<T> conv_nd(const char* opname, Node<T> x, Node<T> w, int stride, int pad, bool two_d) {
    Tape<T>& t = same_tape(opname, x, w);
    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    const int want_rank = two_d ? 4 : 5;
    require(xv.rank() == want_rank, std::string(opname) + ": input must be rank " +
                                        std::to_string(want_rank) + ", got " + shape_str(xv.shape));
    require(wv.rank() == want_rank, std::string(opname) + ": kernel must be rank " +
                                        std::to_string(want_rank) + ", got " + shape_str(wv.shape));
    require(stride >= 1, std::string(opname) + ": stride must be >= 1");
    require(pad >= 0, std::string(opname) + ": padding must be >= 0");

    convk::ConvDims d;
    d.B = xv.shape[0];
    d.Ci = xv.shape[1];
    d.stride = stride;
    d.pad = pad;
    d.Co = wv.shape[0];
    require(wv.shape[1] == d.Ci, std::string(opname) + ": kernel ch_in " +
                                     std::to_string(wv.shape[1]) + " != input channels " +
                                     std::to_string(d.Ci));
    if (two_d) {
        d.Hi = xv.shape[2]; d.Wi = xv.shape[3];
        d.Kh = wv.shape[2]; d.Kw = wv.shape[3];
    } else {
        d.Di = xv.shape[2]; d.Hi = xv.shape[3]; d.Wi = xv.shape[4];
        d.Kd = wv.shape[2]; d.Kh = wv.shape[3]; d.Kw = wv.shape[4];
    }
    require(d.Kd <= d.Di + 2 * pad && d.Kh <= d.Hi + 2 * pad && d.Kw <= d.Wi + 2 * pad,
            std::string(opname) + ": kernel larger than padded input");
    d.Do = convk::conv_out_dim(d.Di, d.Kd, stride, pad);
    d.Ho = convk::conv_out_dim(d.Hi, d.Kh, stride, pad);
    d.Wo = convk::conv_out_dim(d.Wi, d.Kw, stride, pad);
    require(d.Do >= 1 && d.Ho >= 1 && d.Wo >= 1, std::string(opname) + ": empty output");

    Shape out_shape = two_d ? Shape{d.B, d.Co, d.Ho, d.Wo} : Shape{d.B, d.Co, d.Do, d.Ho, d.Wo};
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    convk::conv_forward(xv.data.data(), wv.data.data(), out.data.data(), d);

    const int px = x.id, pw = w.id;
    return t.record(opname, std::move(out), {x, w}, [px, pw, d](Tape<T>& t, int self) {
        const auto& g = t.id_grad(self);
        if (t.id_requires_grad(px)) {
            auto& gx = t.grad_buffer(px);
            convk::conv_backward_input(g.data.data(), t.id_value(pw).data.data(), gx.data.data(), d);
        }
        if (t.id_requires_grad(pw)) {
            auto& gw = t.grad_buffer(pw);
            convk::conv_backward_weight(t.id_value(px).data.data(), g.data.data(), gw.data.data(), d);
        }
    });
}

} // namespace detail

// Cross-correlation (no kernel flip). x: (B, Ci, H, W), w: (Co, Ci, Kh, Kw).
template <typename T>
Node<T> conv2d(Node<T> x, Node<T> w, int stride = 1, int pad = 0) {
    return detail::conv_nd("conv2d", x, w, stride, pad, true);
}

// x: (B, Ci, D, H, W), w: (Co, Ci, Kd, Kh, Kw).
template <typename T>
Node<T> conv3d(Node<T> x, Node<T> w, int stride = 1, int pad = 0) {
    return detail::conv_nd("conv3d", x, w, stride, pad, false);
}

// Transposed 3D convolution: inverts conv3d's shape map,
// out = (in - 1) * stride - 2 * pad + k. w: (Ci, Co, Kd, Kh, Kw).
// Realized through the conv adjoint kernels: the forward pass is
// conv_backward_input of the equivalent regular convolution.
template <typename T>
Node<T> conv3d_transposed(Node<T> x, Node<T> w, int stride = 1, int pad = 0) {
    Tape<T>& t = detail::same_tape("conv3d_transposed", x, w);
    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    detail::require(xv.rank() == 5, "conv3d_transposed: input must be rank 5, got " +
                                        shape_str(xv.shape));
    detail::require(wv.rank() == 5, "conv3d_transposed: kernel must be rank 5, got " +
                                        shape_str(wv.shape));
    detail::require(stride >= 1 && pad >= 0, "conv3d_transposed: bad stride/pad");
    detail::require(wv.shape[0] == xv.shape[1],
                    "conv3d_transposed: kernel ch_in " + std::to_string(wv.shape[0]) +
                        " != input channels " + std::to_string(xv.shape[1]));

    convk::ConvDims d; // geometry of the equivalent forward conv (output -> input)
    d.B = xv.shape[0];
    d.Co = xv.shape[1];             // conv-output channels = our input channels
    d.Ci = wv.shape[1];             // conv-input channels  = our output channels
    d.Kd = wv.shape[2]; d.Kh = wv.shape[3]; d.Kw = wv.shape[4];
    d.stride = stride; d.pad = pad;
    d.Do = xv.shape[2]; d.Ho = xv.shape[3]; d.Wo = xv.shape[4];
    d.Di = convk::conv_transposed_out_dim(d.Do, d.Kd, stride, pad);
    d.Hi = convk::conv_transposed_out_dim(d.Ho, d.Kh, stride, pad);
    d.Wi = convk::conv_transposed_out_dim(d.Wo, d.Kw, stride, pad);
    detail::require(d.Di >= 1 && d.Hi >= 1 && d.Wi >= 1, "conv3d_transposed: empty output");

    Tensor<T> out = Tensor<T>::zeros({d.B, d.Ci, d.Di, d.Hi, d.Wi});
    convk::conv_backward_input(xv.data.data(), wv.data.data(), out.data.data(), d);

    const int px = x.id, pw = w.id;
    return t.record("conv3d_transposed", std::move(out), {x, w}, [px, pw, d](Tape<T>& t, int self) {
        const auto& g = t.id_grad(self);
        if (t.id_requires_grad(px)) {
            auto& gx = t.grad_buffer(px);
            convk::conv_forward(g.data.data(), t.id_value(pw).data.data(), gx.data.data(), d);
        }
        if (t.id_requires_grad(pw)) {
            auto& gw = t.grad_buffer(pw);
            convk::conv_backward_weight(g.data.data(), t.id_value(px).data.data(), gw.data.data(), d);
        }
    });
}

// ---------- structural ----------

// Per-channel bias over axis 1 of a rank-4/5 activation. b: rank 1, length C.
template <typename T>
Node<T> bias_add(Node<T> x, Node<T> b) {
    Tape<T>& t = detail::same_tape("bias_add", x, b);
    const auto& xv = t.value(x);
    const auto& bv = t.value(b);
    detail::require(xv.rank() == 4 || xv.rank() == 5,
                    "bias_add: activation must be rank 4 or 5, got " + shape_str(xv.shape));
    detail::require(bv.rank() == 1 && bv.shape[0] == xv.shape[1],
                    "bias_add: bias shape " + shape_str(bv.shape) + " does not match channels " +
                        std::to_string(xv.shape[1]));
    const int64_t batch = xv.shape[0];
    const int64_t chans = xv.shape[1];
    const int64_t spatial = xv.numel() / (batch * chans);
    Tensor<T> out = xv;
    for (int64_t n = 0; n < batch; ++n)
        for (int64_t c = 0; c < chans; ++c) {
            T* row = out.data.data() + (n * chans + c) * spatial;
            const T bc = bv.data[static_cast<size_t>(c)];
            for (int64_t i = 0; i < spatial; ++i) row[i] += bc;
        }
    const int px = x.id, pb = b.id;
    return t.record("bias_add", std::move(out), {x, b},
                    [px, pb, batch, chans, spatial](Tape<T>& t, int self) {
                        const auto& g = t.id_grad(self);
                        if (t.id_requires_grad(px)) {
                            auto& gx = t.grad_buffer(px);
                            for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
                        }
                        if (t.id_requires_grad(pb)) {
                            auto& gb = t.grad_buffer(pb);
                            for (int64_t n = 0; n < batch; ++n)
                                for (int64_t c = 0; c < chans; ++c) {
                                    const T* row = g.data.data() + (n * chans + c) * spatial;
                                    T acc = T(0);
                                    for (int64_t i = 0; i < spatial; ++i) acc += row[i];
                                    gb.data[static_cast<size_t>(c)] += acc;
                                }
                        }
                    });
}

// Concatenate along the channel axis (axis 1) of rank-4/5 tensors.
template <typename T>
Node<T> concat_channels(Node<T> a, Node<T> b) {
    Tape<T>& t = detail::same_tape("concat_channels", a, b);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    detail::require(av.rank() == bv.rank() && (av.rank() == 4 || av.rank() == 5),
                    "concat_channels: operands must both be rank 4 or rank 5");
    for (int i = 0; i < av.rank(); ++i)
        if (i != 1)
            detail::require(av.shape[i] == bv.shape[i],
                            "concat_channels: shapes differ outside axis 1: " +
                                shape_str(av.shape) + " vs " + shape_str(bv.shape));
    const int64_t batch = av.shape[0];
    const int64_t ca = av.shape[1], cb = bv.shape[1];
    const int64_t spatial = av.numel() / (batch * ca);
    Shape out_shape = av.shape;
    out_shape[1] = static_cast<int>(ca + cb);
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    for (int64_t n = 0; n < batch; ++n) {
        T* dst = out.data.data() + n * (ca + cb) * spatial;
        std::memcpy(dst, av.data.data() + n * ca * spatial, sizeof(T) * ca * spatial);
        std::memcpy(dst + ca * spatial, bv.data.data() + n * cb * spatial,
                    sizeof(T) * cb * spatial);
    }
    const int pa = a.id, pb = b.id;
    return t.record("concat_channels", std::move(out), {a, b},
                    [pa, pb, batch, ca, cb, spatial](Tape<T>& t, int self) {
                        const auto& g = t.id_grad(self);
                        if (t.id_requires_grad(pa)) {
                            auto& ga = t.grad_buffer(pa);
                            for (int64_t n = 0; n < batch; ++n) {
                                const T* src = g.data.data() + n * (ca + cb) * spatial;
                                T* dst = ga.data.data() + n * ca * spatial;
                                for (int64_t i = 0; i < ca * spatial; ++i) dst[i] += src[i];
                            }
                        }
                        if (t.id_requires_grad(pb)) {
                            auto& gb = t.grad_buffer(pb);
                            for (int64_t n = 0; n < batch; ++n) {
                                const T* src = g.data.data() + n * (ca + cb) * spatial + ca * spatial;
                                T* dst = gb.data.data() + n * cb * spatial;
                                for (int64_t i = 0; i < cb * spatial; ++i) dst[i] += src[i];
                            }
                        }
                    });
}

// Broadcast a (B, C, H, W) map along a new depth axis: (B, C, depth, H, W).
// Backward sums over the replicated axis.
template <typename T>
Node<T> repeat_depth(Node<T> a, int depth) {
    Tape<T>& t = detail::same_tape("repeat_depth", a);
    const auto& av = t.value(a);
    detail::require(av.rank() == 4, "repeat_depth: input must be rank 4, got " +
                                        shape_str(av.shape));
    detail::require(depth >= 1, "repeat_depth: depth must be >= 1");
    const int64_t planes = av.shape[0] * static_cast<int64_t>(av.shape[1]);
    const int64_t plane = static_cast<int64_t>(av.shape[2]) * av.shape[3];
    Tensor<T> out = Tensor<T>::zeros({av.shape[0], av.shape[1], depth, av.shape[2], av.shape[3]});
    for (int64_t pc = 0; pc < planes; ++pc) {
        const T* src = av.data.data() + pc * plane;
        T* dst = out.data.data() + pc * depth * plane;
        for (int d = 0; d < depth; ++d) std::memcpy(dst + d * plane, src, sizeof(T) * plane);
    }
    const int pa = a.id;
    return t.record("repeat_depth", std::move(out), {a},
                    [pa, planes, plane, depth](Tape<T>& t, int self) {
                        if (!t.id_requires_grad(pa)) return;
                        const auto& g = t.id_grad(self);
                        auto& ga = t.grad_buffer(pa);
                        for (int64_t pc = 0; pc < planes; ++pc) {
                            const T* src = g.data.data() + pc * depth * plane;
                            T* dst = ga.data.data() + pc * plane;
                            for (int d = 0; d < depth; ++d)
                                for (int64_t i = 0; i < plane; ++i) dst[i] += src[d * plane + i];
                        }
                    });
}

template <typename T>
Node<T> reshape(Node<T> a, Shape new_shape) {
    Tape<T>& t = detail::same_tape("reshape", a);
    const auto& av = t.value(a);
    detail::require(shape_numel(new_shape) == av.numel(),
                    "reshape: element count mismatch " + shape_str(av.shape) + " -> " +
                        shape_str(new_shape));
    Tensor<T> out(new_shape, av.data);
    const int pa = a.id;
    return t.record("reshape", std::move(out), {a}, [pa](Tape<T>& t, int self) {
        if (!t.id_requires_grad(pa)) return;
        const auto& g = t.id_grad(self);
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    });
}

// ---------- classification heads ----------

// Row-wise softmax of (B, K) logits, max-shifted for stability.
template <typename T>
Node<T> softmax(Node<T> a) {
    Tape<T>& t = detail::same_tape("softmax", a);
    const auto& av = t.value(a);
    detail::require(av.rank() == 2, "softmax: input must be rank 2, got " + shape_str(av.shape));
    const int B = av.shape[0], K = av.shape[1];
    Tensor<T> out = Tensor<T>::zeros({B, K});
    for (int b = 0; b < B; ++b) {
        const T* row = av.data.data() + static_cast<size_t>(b) * K;
        T* orow = out.data.data() + static_cast<size_t>(b) * K;
        double m = static_cast<double>(row[0]);
        for (int k = 1; k < K; ++k) m = std::max(m, static_cast<double>(row[k]));
        double s = 0.0;
        for (int k = 0; k < K; ++k) s += std::exp(static_cast<double>(row[k]) - m);
        for (int k = 0; k < K; ++k)
            orow[k] = static_cast<T>(std::exp(static_cast<double>(row[k]) - m) / s);
    }
    const int pa = a.id;
    return t.record("softmax", std::move(out), {a}, [pa, B, K](Tape<T>& t, int self) {
        if (!t.id_requires_grad(pa)) return;
        const auto& g = t.id_grad(self);
        const auto& y = t.id_value(self);
        auto& ga = t.grad_buffer(pa);
        for (int b = 0; b < B; ++b) {
            const T* grow = g.data.data() + static_cast<size_t>(b) * K;
            const T* yrow = y.data.data() + static_cast<size_t>(b) * K;
            T* garow = ga.data.data() + static_cast<size_t>(b) * K;
            double dot = 0.0;
            for (int k = 0; k < K; ++k) dot += static_cast<double>(grow[k]) * yrow[k];
            for (int k = 0; k < K; ++k)
                garow[k] += static_cast<T>(yrow[k] * (static_cast<double>(grow[k]) - dot));
        }
    });
}

// Mean negative log-likelihood of the labelled class under row-wise softmax.
// Fused for numerical stability; gradient is (softmax - onehot) / B.
template <typename T>
Node<T> softmax_cross_entropy(Node<T> logits, const std::vector<int>& labels) {
    Tape<T>& t = detail::same_tape("softmax_cross_entropy", logits);
    const auto& lv = t.value(logits);
    detail::require(lv.rank() == 2, "softmax_cross_entropy: logits must be rank 2");
    const int B = lv.shape[0], K = lv.shape[1];
    detail::require(static_cast<int>(labels.size()) == B,
                    "softmax_cross_entropy: label count != batch size");
    for (int y : labels)
        detail::require(y >= 0 && y < K, "softmax_cross_entropy: label out of range");
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        const T* row = lv.data.data() + static_cast<size_t>(b) * K;
        double m = static_cast<double>(row[0]);
        for (int k = 1; k < K; ++k) m = std::max(m, static_cast<double>(row[k]));
        double s = 0.0;
        for (int k = 0; k < K; ++k) s += std::exp(static_cast<double>(row[k]) - m);
        loss -= (static_cast<double>(row[labels[static_cast<size_t>(b)]]) - m) - std::log(s);
    }
    loss /= B;
    const int pa = logits.id;
    const std::vector<int> ys = labels;
    return t.record("softmax_cross_entropy", Tensor<T>::scalar(static_cast<T>(loss)), {logits},
                    [pa, B, K, ys](Tape<T>& t, int self) {
                        if (!t.id_requires_grad(pa)) return;
                        const double g0 = static_cast<double>(t.id_grad(self).data[0]) / B;
                        const auto& lv = t.id_value(pa);
                        auto& ga = t.grad_buffer(pa);
                        for (int b = 0; b < B; ++b) {
                            const T* row = lv.data.data() + static_cast<size_t>(b) * K;
                            T* garow = ga.data.data() + static_cast<size_t>(b) * K;
                            double m = static_cast<double>(row[0]);
                            for (int k = 1; k < K; ++k) m = std::max(m, static_cast<double>(row[k]));
                            double s = 0.0;
                            for (int k = 0; k < K; ++k) s += std::exp(static_cast<double>(row[k]) - m);
                            for (int k = 0; k < K; ++k) {
                                double p = std::exp(static_cast<double>(row[k]) - m) / s;
                                if (k == ys[static_cast<size_t>(b)]) p -= 1.0;
                                garow[k] += static_cast<T>(p * g0);
                            }
                        }
                    });
}

// ---------- composites ----------

template <typename T>
Node<T> mse(Node<T> a, Node<T> b) {
    return mean_all(square(sub(a, b)));
}

template <typename T>
Node<T> mean_abs_diff(Node<T> a, Node<T> b) {
    return mean_all(abs_val(sub(a, b)));
}

} // namespace xct
