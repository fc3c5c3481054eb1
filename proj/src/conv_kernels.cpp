#include "xct/conv_kernels.hpp"

#include <algorithm>
#include <vector>

#include "xct/parallel.hpp"

namespace xct::convk {

namespace {

// Valid output range [lo, hi) along one axis for a fixed kernel offset k:
// the positions o where o*stride - pad + k lands inside [0, in_dim).
inline void out_range(int out_dim, int in_dim, int k, int stride, int pad, int& lo, int& hi) {
    const int shift = pad - k;
    lo = shift <= 0 ? 0 : (shift + stride - 1) / stride;
    const int last = in_dim - 1 - k + pad;
    hi = last < 0 ? 0 : std::min(out_dim, last / stride + 1);
    if (lo > hi) lo = hi;
}

} // namespace

template <typename T>
void conv_forward(const T* in, const T* w, T* out, const ConvDims& d) {
    const int64_t in_chan = static_cast<int64_t>(d.Di) * d.Hi * d.Wi;
    const int64_t out_chan = static_cast<int64_t>(d.Do) * d.Ho * d.Wo;
    const int64_t w_chan = static_cast<int64_t>(d.Kd) * d.Kh * d.Kw;
    const int s = d.stride, p = d.pad;

    parallel_for(static_cast<size_t>(d.B) * d.Co, [&](size_t bc) {
        const int b = static_cast<int>(bc) / d.Co;
        const int co = static_cast<int>(bc) % d.Co;
        T* out_c = out + (static_cast<int64_t>(b) * d.Co + co) * out_chan;
        for (int ci = 0; ci < d.Ci; ++ci) {
            const T* in_c = in + (static_cast<int64_t>(b) * d.Ci + ci) * in_chan;
            const T* w_c = w + (static_cast<int64_t>(co) * d.Ci + ci) * w_chan;
            for (int kz = 0; kz < d.Kd; ++kz) {
                int zlo, zhi;
                out_range(d.Do, d.Di, kz, s, p, zlo, zhi);
                for (int ky = 0; ky < d.Kh; ++ky) {
                    int ylo, yhi;
                    out_range(d.Ho, d.Hi, ky, s, p, ylo, yhi);
                    for (int kx = 0; kx < d.Kw; ++kx) {
                        int xlo, xhi;
                        out_range(d.Wo, d.Wi, kx, s, p, xlo, xhi);
                        if (xlo >= xhi) continue;
                        const T wv = w_c[(kz * d.Kh + ky) * d.Kw + kx];
                        for (int zo = zlo; zo < zhi; ++zo) {
                            const int zi = zo * s - p + kz;
                            for (int yo = ylo; yo < yhi; ++yo) {
                                const int yi = yo * s - p + ky;
                                const T* irow = in_c + (static_cast<int64_t>(zi) * d.Hi + yi) * d.Wi;
                                T* orow = out_c + (static_cast<int64_t>(zo) * d.Ho + yo) * d.Wo;
                                const int off = kx - p;
                                if (s == 1) {
                                    for (int xo = xlo; xo < xhi; ++xo)
                                        orow[xo] += wv * irow[xo + off];
                                } else {
                                    for (int xo = xlo; xo < xhi; ++xo)
                                        orow[xo] += wv * irow[static_cast<int64_t>(xo) * s + off];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

template <typename T>
void conv_backward_input(const T* gy, const T* w, T* gx, const ConvDims& d) {
    const int64_t in_chan = static_cast<int64_t>(d.Di) * d.Hi * d.Wi;
    const int64_t out_chan = static_cast<int64_t>(d.Do) * d.Ho * d.Wo;
    const int64_t w_chan = static_cast<int64_t>(d.Kd) * d.Kh * d.Kw;
    const int s = d.stride, p = d.pad;

    parallel_for(static_cast<size_t>(d.B), [&](size_t bi) {
        const int b = static_cast<int>(bi);
        for (int ci = 0; ci < d.Ci; ++ci) {
            T* gx_c = gx + (static_cast<int64_t>(b) * d.Ci + ci) * in_chan;
            for (int co = 0; co < d.Co; ++co) {
                const T* gy_c = gy + (static_cast<int64_t>(b) * d.Co + co) * out_chan;
                const T* w_c = w + (static_cast<int64_t>(co) * d.Ci + ci) * w_chan;
                for (int kz = 0; kz < d.Kd; ++kz) {
                    int zlo, zhi;
                    out_range(d.Do, d.Di, kz, s, p, zlo, zhi);
                    for (int ky = 0; ky < d.Kh; ++ky) {
                        int ylo, yhi;
                        out_range(d.Ho, d.Hi, ky, s, p, ylo, yhi);
                        for (int kx = 0; kx < d.Kw; ++kx) {
                            int xlo, xhi;
                            out_range(d.Wo, d.Wi, kx, s, p, xlo, xhi);
                            if (xlo >= xhi) continue;
                            const T wv = w_c[(kz * d.Kh + ky) * d.Kw + kx];
                            for (int zo = zlo; zo < zhi; ++zo) {
                                const int zi = zo * s - p + kz;
                                for (int yo = ylo; yo < yhi; ++yo) {
                                    const int yi = yo * s - p + ky;
                                    T* grow = gx_c + (static_cast<int64_t>(zi) * d.Hi + yi) * d.Wi;
                                    const T* gyrow = gy_c + (static_cast<int64_t>(zo) * d.Ho + yo) * d.Wo;
                                    const int off = kx - p;
                                    if (s == 1) {
                                        for (int xo = xlo; xo < xhi; ++xo)
                                            grow[xo + off] += wv * gyrow[xo];
                                    } else {
                                        for (int xo = xlo; xo < xhi; ++xo)
                                            grow[static_cast<int64_t>(xo) * s + off] += wv * gyrow[xo];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

template <typename T>
void conv_backward_weight(const T* in, const T* gy, T* gw, const ConvDims& d) {
    const int64_t in_chan = static_cast<int64_t>(d.Di) * d.Hi * d.Wi;
    const int64_t out_chan = static_cast<int64_t>(d.Do) * d.Ho * d.Wo;
    const int64_t w_chan = static_cast<int64_t>(d.Kd) * d.Kh * d.Kw;
    const int s = d.stride, p = d.pad;
    constexpr int kLanes = 8;

    // Each worker owns a co slice of gw, so accumulation order is fixed
    // (b outermost, then output position) regardless of worker count.
    parallel_for(static_cast<size_t>(d.Co), [&](size_t coi) {
        const int co = static_cast<int>(coi);
        for (int b = 0; b < d.B; ++b) {
            const T* gy_c = gy + (static_cast<int64_t>(b) * d.Co + co) * out_chan;
            for (int ci = 0; ci < d.Ci; ++ci) {
                const T* in_c = in + (static_cast<int64_t>(b) * d.Ci + ci) * in_chan;
                T* gw_c = gw + (static_cast<int64_t>(co) * d.Ci + ci) * w_chan;
                for (int kz = 0; kz < d.Kd; ++kz) {
                    int zlo, zhi;
                    out_range(d.Do, d.Di, kz, s, p, zlo, zhi);
                    for (int ky = 0; ky < d.Kh; ++ky) {
                        int ylo, yhi;
                        out_range(d.Ho, d.Hi, ky, s, p, ylo, yhi);
                        for (int kx = 0; kx < d.Kw; ++kx) {
                            int xlo, xhi;
                            out_range(d.Wo, d.Wi, kx, s, p, xlo, xhi);
                            if (xlo >= xhi) continue;
                            T lanes[kLanes] = {};
                            T acc = T(0);
                            for (int zo = zlo; zo < zhi; ++zo) {
                                const int zi = zo * s - p + kz;
                                for (int yo = ylo; yo < yhi; ++yo) {
                                    const int yi = yo * s - p + ky;
                                    const T* irow = in_c + (static_cast<int64_t>(zi) * d.Hi + yi) * d.Wi;
                                    const T* gyrow = gy_c + (static_cast<int64_t>(zo) * d.Ho + yo) * d.Wo;
                                    const int off = kx - p;
                                    int xo = xlo;
                                    if (s == 1) {
                                        for (; xo + kLanes <= xhi; xo += kLanes)
                                            for (int l = 0; l < kLanes; ++l)
                                                lanes[l] += gyrow[xo + l] * irow[xo + l + off];
                                        for (; xo < xhi; ++xo)
                                            acc += gyrow[xo] * irow[xo + off];
                                    } else {
                                        for (; xo < xhi; ++xo)
                                            acc += gyrow[xo] * irow[static_cast<int64_t>(xo) * s + off];
                                    }
                                }
                            }
                            for (int l = 0; l < kLanes; ++l) acc += lanes[l];
                            gw_c[(kz * d.Kh + ky) * d.Kw + kx] += acc;
                        }
                    }
                }
            }
        }
    });
}

template void conv_forward<float>(const float*, const float*, float*, const ConvDims&);
template void conv_forward<double>(const double*, const double*, double*, const ConvDims&);
template void conv_backward_input<float>(const float*, const float*, float*, const ConvDims&);
template void conv_backward_input<double>(const double*, const double*, double*, const ConvDims&);
template void conv_backward_weight<float>(const float*, const float*, float*, const ConvDims&);
template void conv_backward_weight<double>(const double*, const double*, double*, const ConvDims&);

} // namespace xct::convk
