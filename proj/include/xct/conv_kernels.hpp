#pragma once

#include <cstdint>

namespace xct::convk {

// Geometry of a (possibly strided, zero-padded) cross-correlation between
// an input (B, Ci, Di, Hi, Wi) and a kernel (Co, Ci, Kd, Kh, Kw), producing
// (B, Co, Do, Ho, Wo). 2D cases are expressed with Di = Kd = Do = 1.
struct ConvDims {
    int B = 1;
    int Ci = 1, Di = 1, Hi = 1, Wi = 1;
    int Co = 1, Kd = 1, Kh = 1, Kw = 1;
    int stride = 1, pad = 0;
    int Do = 1, Ho = 1, Wo = 1;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

inline int conv_transposed_out_dim(int in, int k, int stride, int pad) {
    return (in - 1) * stride - 2 * pad + k;
}

// All kernels accumulate (+=) into their destination; callers zero it first
// when overwrite semantics are needed. Deterministic for any worker count:
// parallel loops only ever split over disjoint output slices.

// out[b,co,zo,yo,xo] += sum_{ci,k} in[b,ci,zo*s-p+kz, ...] * w[co,ci,kz,ky,kx]
template <typename T>
void conv_forward(const T* in, const T* w, T* out, const ConvDims& d);

// gx[b,ci,...] += sum_{co,k} w[co,ci,k] * gy[b,co,...]   (adjoint of conv_forward)
template <typename T>
void conv_backward_input(const T* gy, const T* w, T* gx, const ConvDims& d);

// gw[co,ci,k] += sum_{b,out pos} gy[b,co,...] * in[b,ci,...]
template <typename T>
void conv_backward_weight(const T* in, const T* gy, T* gw, const ConvDims& d);

} // namespace xct::convk
