#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "puncta/errors.hpp"
#include "puncta/grid.hpp"
#include "puncta/io.hpp"
#include "puncta/losses.hpp"
#include "puncta/rng.hpp"

namespace puncta {

template <typename T>
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int channels, int height, int width)
        : c(channels), h(height), w(width),
          v(static_cast<std::size_t>(channels) * height * width, T(0)) {}

    T* ch(int ci) { return v.data() + static_cast<std::size_t>(ci) * h * w; }
    const T* ch(int ci) const { return v.data() + static_cast<std::size_t>(ci) * h * w; }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
};

template <typename T>
struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<T> v;

    std::size_t size() const { return v.size(); }
};

// Ordered named parameter collection for one network.
template <typename T>
struct Params {
    std::string role; // "segmentor" | "velocity" | derived tags
    std::vector<ParamTensor<T>> tensors;

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }

    static Params zeros_like(const Params& other) {
        Params z;
        z.role = other.role;
        z.tensors.reserve(other.tensors.size());
        for (const auto& t : other.tensors)
            z.tensors.push_back({t.name, t.shape, std::vector<T>(t.v.size(), T(0))});
        return z;
    }
};

template <typename T>
bool params_shapes_match(const Params<T>& a, const Params<T>& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i)
        if (a.tensors[i].name != b.tensors[i].name || a.tensors[i].shape != b.tensors[i].shape)
            return false;
    return true;
}

namespace detail {

// Zero-padded 2-D convolution, pad = k/2.
template <typename T>
void conv_fwd(const Tensor<T>& in, const ParamTensor<T>& w, const ParamTensor<T>& b, int stride,
              Tensor<T>& out) {
    const int co_n = w.shape[0], ci_n = w.shape[1], k = w.shape[2];
    const int pad = k / 2;
    const int oh = (in.h + 2 * pad - k) / stride + 1;
    const int ow = (in.w + 2 * pad - k) / stride + 1;
    out = Tensor<T>(co_n, oh, ow);
    for (int co = 0; co < co_n; ++co) {
        T* oplane = out.ch(co);
        const T bias = b.v[co];
        for (std::size_t i = 0; i < out.plane(); ++i) oplane[i] = bias;
        for (int ci = 0; ci < ci_n; ++ci) {
            const T* iplane = in.ch(ci);
            const T* wbase = w.v.data() + (static_cast<std::size_t>(co) * ci_n + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = wbase[ky * k + kx];
                    const int off = kx - pad;
                    int ox_lo = 0;
                    while (ox_lo * stride + off < 0) ++ox_lo;
                    int ox_hi = (in.w - 1 - off) / stride;
                    if (ox_hi > ow - 1) ox_hi = ow - 1;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= in.h) continue;
                        const T* irow = iplane + static_cast<std::size_t>(iy) * in.w;
                        T* orow = oplane + static_cast<std::size_t>(oy) * ow;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                orow[ox] += wv * irow[ox + off];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                orow[ox] += wv * irow[ox * stride + off];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_bwd_input(const Tensor<T>& dout, const ParamTensor<T>& w, int stride, Tensor<T>& din) {
    const int co_n = w.shape[0], ci_n = w.shape[1], k = w.shape[2];
    const int pad = k / 2;
    for (int co = 0; co < co_n; ++co) {
        const T* dplane = dout.ch(co);
        for (int ci = 0; ci < ci_n; ++ci) {
            T* iplane = din.ch(ci);
            const T* wbase = w.v.data() + (static_cast<std::size_t>(co) * ci_n + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = wbase[ky * k + kx];
                    const int off = kx - pad;
                    int ox_lo = 0;
                    while (ox_lo * stride + off < 0) ++ox_lo;
                    int ox_hi = (din.w - 1 - off) / stride;
                    if (ox_hi > dout.w - 1) ox_hi = dout.w - 1;
                    for (int oy = 0; oy < dout.h; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= din.h) continue;
                        T* irow = iplane + static_cast<std::size_t>(iy) * din.w;
                        const T* drow = dplane + static_cast<std::size_t>(oy) * dout.w;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                irow[ox + off] += wv * drow[ox];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                irow[ox * stride + off] += wv * drow[ox];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_bwd_params(const Tensor<T>& in, const Tensor<T>& dout, int stride, int k,
                     ParamTensor<T>& dw, ParamTensor<T>& db) {
    const int co_n = dout.c, ci_n = in.c;
    const int pad = k / 2;
    for (int co = 0; co < co_n; ++co) {
        const T* dplane = dout.ch(co);
        T bacc = T(0);
        for (std::size_t i = 0; i < dout.plane(); ++i) bacc += dplane[i];
        db.v[co] += bacc;
        for (int ci = 0; ci < ci_n; ++ci) {
            const T* iplane = in.ch(ci);
            T* wbase = dw.v.data() + (static_cast<std::size_t>(co) * ci_n + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const int off = kx - pad;
                    int ox_lo = 0;
                    while (ox_lo * stride + off < 0) ++ox_lo;
                    int ox_hi = (in.w - 1 - off) / stride;
                    if (ox_hi > dout.w - 1) ox_hi = dout.w - 1;
                    T acc = T(0);
                    for (int oy = 0; oy < dout.h; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= in.h) continue;
                        const T* irow = iplane + static_cast<std::size_t>(iy) * in.w;
                        const T* drow = dplane + static_cast<std::size_t>(oy) * dout.w;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                acc += drow[ox] * irow[ox + off];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                acc += drow[ox] * irow[ox * stride + off];
                        }
                    }
                    wbase[ky * k + kx] += acc;
                }
            }
        }
    }
}

template <typename T>
void lrelu_inplace(Tensor<T>& t, T slope) {
    for (auto& x : t.v)
        if (x < T(0)) x *= slope;
}

// Uses the sign of the activation; valid because lrelu preserves sign.
template <typename T>
void lrelu_bwd_inplace(const Tensor<T>& act, Tensor<T>& grad, T slope) {
    for (std::size_t i = 0; i < act.v.size(); ++i)
        if (!(act.v[i] > T(0))) grad.v[i] *= slope;
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& in) {
    Tensor<T> out(in.c, in.h * 2, in.w * 2);
    for (int ci = 0; ci < in.c; ++ci) {
        const T* ip = in.ch(ci);
        T* op = out.ch(ci);
        for (int y = 0; y < out.h; ++y) {
            const T* irow = ip + static_cast<std::size_t>(y / 2) * in.w;
            T* orow = op + static_cast<std::size_t>(y) * out.w;
            for (int x = 0; x < out.w; ++x) orow[x] = irow[x / 2];
        }
    }
    return out;
}

template <typename T>
Tensor<T> upsample2_bwd(const Tensor<T>& dout) {
    Tensor<T> din(dout.c, dout.h / 2, dout.w / 2);
    for (int ci = 0; ci < dout.c; ++ci) {
        const T* dp = dout.ch(ci);
        T* ip = din.ch(ci);
        for (int y = 0; y < dout.h; ++y) {
            const T* drow = dp + static_cast<std::size_t>(y) * dout.w;
            T* irow = ip + static_cast<std::size_t>(y / 2) * din.w;
            for (int x = 0; x < dout.w; ++x) irow[x / 2] += drow[x];
        }
    }
    return din;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

} // namespace detail

// Small encoder-decoder: two stride-2 downsamplings with widths
// (W, 2W, 4W), nearest-neighbour upsampling, additive skip per scale,
// leaky rectifier (slope 0.1), zero-initialized 1x1 head.
template <typename T>
class UNet {
public:
    static constexpr T kSlope = T(0.1);

    struct Cache {
        Tensor<T> x, e0, e1, e2, u1, u2, d1, d0, f;
    };

    explicit UNet(int in_channels, int width = 16) : in_ch_(in_channels), width_(width) {
        if (in_channels < 1 || width < 1) throw validation_error("UNet: bad dimensions");
    }

    static UNet from_params(const Params<T>& p) {
        if (p.tensors.size() != 14 || p.tensors[0].name != "enc0.w")
            throw validation_error("UNet: unrecognized parameter collection");
        const auto& s = p.tensors[0].shape;
        UNet net(s[1], s[0]);
        net.check_params(p);
        return net;
    }

    int in_channels() const { return in_ch_; }
    int width() const { return width_; }

    Params<T> init_params(Rng& rng, const std::string& role) const {
        Params<T> p;
        p.role = role;
        auto conv = [&](const std::string& name, int co, int ci, int k, bool zero) {
            ParamTensor<T> w{name + ".w", {co, ci, k, k}, {}};
            w.v.resize(static_cast<std::size_t>(co) * ci * k * k);
            if (!zero) {
                const T stdev = std::sqrt(T(2) / (T(ci) * k * k));
                for (auto& x : w.v) x = static_cast<T>(rng.normal()) * stdev;
            }
            p.tensors.push_back(std::move(w));
            p.tensors.push_back({name + ".b", {co}, std::vector<T>(co, T(0))});
        };
        conv("enc0", width_, in_ch_, 3, false);
        conv("down1", 2 * width_, width_, 3, false);
        conv("down2", 4 * width_, 2 * width_, 3, false);
        conv("up1", 2 * width_, 4 * width_, 3, false);
        conv("up2", width_, 2 * width_, 3, false);
        conv("fuse", width_, width_, 3, false);
        conv("head", 1, width_, 1, true);
        return p;
    }

    Grid<T> forward(const Params<T>& p, const Tensor<T>& input, Cache* cache = nullptr) const {
        check_params(p);
        if (input.c != in_ch_) throw validation_error("UNet: input channel mismatch");
        if (input.h % 4 != 0 || input.w % 4 != 0 || input.h < 4 || input.w < 4)
            throw validation_error("UNet: spatial dims must be multiples of 4");
        using namespace detail;
        Tensor<T> e0, e1, e2, u1p, u2p, f, out;
        conv_fwd(input, p.tensors[0], p.tensors[1], 1, e0);
        lrelu_inplace(e0, kSlope);
        conv_fwd(e0, p.tensors[2], p.tensors[3], 2, e1);
        lrelu_inplace(e1, kSlope);
        conv_fwd(e1, p.tensors[4], p.tensors[5], 2, e2);
        lrelu_inplace(e2, kSlope);
        conv_fwd(e2, p.tensors[6], p.tensors[7], 1, u1p);
        lrelu_inplace(u1p, kSlope);
        Tensor<T> d1 = upsample2(u1p);
        add_inplace(d1, e1);
        conv_fwd(d1, p.tensors[8], p.tensors[9], 1, u2p);
        lrelu_inplace(u2p, kSlope);
        Tensor<T> d0 = upsample2(u2p);
        add_inplace(d0, e0);
        conv_fwd(d0, p.tensors[10], p.tensors[11], 1, f);
        lrelu_inplace(f, kSlope);
        conv_fwd(f, p.tensors[12], p.tensors[13], 1, out);
        Grid<T> logits(input.h, input.w);
        for (std::size_t i = 0; i < logits.size(); ++i) logits.v[i] = out.v[i];
        if (cache) {
            cache->x = input;
            cache->e0 = std::move(e0);
            cache->e1 = std::move(e1);
            cache->e2 = std::move(e2);
            cache->u1 = std::move(u1p);
            cache->u2 = std::move(u2p);
            cache->d1 = std::move(d1);
            cache->d0 = std::move(d0);
            cache->f = std::move(f);
        }
        return logits;
    }

    Grid<T> forward(const Params<T>& p, const Grid<T>& x, Cache* cache = nullptr) const {
        if (in_ch_ != 1) throw validation_error("UNet: single-channel overload on multi-channel net");
        Tensor<T> input(1, x.h, x.w);
        input.v = x.v;
        return forward(p, input, cache);
    }

    // Accumulates parameter gradients into `grads` (shape of init_params).
    // When dinput is non-null the gradient w.r.t. the input tensor is stored there.
    void backward(const Params<T>& p, const Cache& cache, const Grid<T>& dout, Params<T>& grads,
                  Tensor<T>* dinput = nullptr) const {
        using namespace detail;
        Tensor<T> d_out(1, dout.h, dout.w);
        d_out.v = dout.v;

        Tensor<T> d_f(cache.f.c, cache.f.h, cache.f.w);
        conv_bwd_params(cache.f, d_out, 1, 1, grads.tensors[12], grads.tensors[13]);
        conv_bwd_input(d_out, p.tensors[12], 1, d_f);

        lrelu_bwd_inplace(cache.f, d_f, kSlope);
        Tensor<T> d_d0(cache.d0.c, cache.d0.h, cache.d0.w);
        conv_bwd_params(cache.d0, d_f, 1, 3, grads.tensors[10], grads.tensors[11]);
        conv_bwd_input(d_f, p.tensors[10], 1, d_d0);

        // d0 = upsample(u2) + e0
        Tensor<T> d_e0 = d_d0; // skip branch
        Tensor<T> d_u2 = upsample2_bwd(d_d0);
        lrelu_bwd_inplace(cache.u2, d_u2, kSlope);
        Tensor<T> d_d1(cache.d1.c, cache.d1.h, cache.d1.w);
        conv_bwd_params(cache.d1, d_u2, 1, 3, grads.tensors[8], grads.tensors[9]);
        conv_bwd_input(d_u2, p.tensors[8], 1, d_d1);

        // d1 = upsample(u1) + e1
        Tensor<T> d_e1 = d_d1;
        Tensor<T> d_u1 = upsample2_bwd(d_d1);
        lrelu_bwd_inplace(cache.u1, d_u1, kSlope);
        Tensor<T> d_e2(cache.e2.c, cache.e2.h, cache.e2.w);
        conv_bwd_params(cache.e2, d_u1, 1, 3, grads.tensors[6], grads.tensors[7]);
        conv_bwd_input(d_u1, p.tensors[6], 1, d_e2);

        lrelu_bwd_inplace(cache.e2, d_e2, kSlope);
        conv_bwd_params(cache.e1, d_e2, 2, 3, grads.tensors[4], grads.tensors[5]);
        conv_bwd_input(d_e2, p.tensors[4], 2, d_e1);

        lrelu_bwd_inplace(cache.e1, d_e1, kSlope);
        conv_bwd_params(cache.e0, d_e1, 2, 3, grads.tensors[2], grads.tensors[3]);
        conv_bwd_input(d_e1, p.tensors[2], 2, d_e0);

        lrelu_bwd_inplace(cache.e0, d_e0, kSlope);
        conv_bwd_params(cache.x, d_e0, 1, 3, grads.tensors[0], grads.tensors[1]);
        if (dinput) {
            *dinput = Tensor<T>(cache.x.c, cache.x.h, cache.x.w);
            conv_bwd_input(d_e0, p.tensors[0], 1, *dinput);
        }
    }

private:
    void check_params(const Params<T>& p) const {
        if (p.tensors.size() != 14) throw validation_error("UNet: wrong tensor count");
        const int W = width_;
        const std::vector<std::pair<std::string, std::vector<int>>> expect = {
            {"enc0.w", {W, in_ch_, 3, 3}},  {"enc0.b", {W}},
            {"down1.w", {2 * W, W, 3, 3}},  {"down1.b", {2 * W}},
            {"down2.w", {4 * W, 2 * W, 3, 3}}, {"down2.b", {4 * W}},
            {"up1.w", {2 * W, 4 * W, 3, 3}},   {"up1.b", {2 * W}},
            {"up2.w", {W, 2 * W, 3, 3}},    {"up2.b", {W}},
            {"fuse.w", {W, W, 3, 3}},       {"fuse.b", {W}},
            {"head.w", {1, W, 1, 1}},       {"head.b", {1}},
        };
        for (std::size_t i = 0; i < expect.size(); ++i)
            if (p.tensors[i].name != expect[i].first || p.tensors[i].shape != expect[i].second)
                throw validation_error("UNet: parameter " + p.tensors[i].name +
                                       " has unexpected name or shape");
    }

    int in_ch_;
    int width_;
};

// l = S_theta(x): single-channel patch in, logit grid out.
template <typename T>
Grid<T> segmentor_forward(const Params<T>& theta, const Grid<T>& x) {
    const UNet<T> net = UNet<T>::from_params(theta);
    return net.forward(theta, x);
}

// Conditional velocity field; conditioning is channel concatenation of the
// interpolated state, the seed mask, and a constant-t plane.
template <typename T>
Tensor<T> velocity_input(const Grid<T>& m, T t, const MaskGrid& s) {
    if (m.h != s.h || m.w != s.w) throw validation_error("velocity_input: shape mismatch");
    Tensor<T> in(3, m.h, m.w);
    T* c0 = in.ch(0);
    T* c1 = in.ch(1);
    T* c2 = in.ch(2);
    for (std::size_t i = 0; i < m.size(); ++i) {
        c0[i] = m.v[i];
        c1[i] = T(s.v[i]);
        c2[i] = t;
    }
    return in;
}

template <typename T>
Grid<T> velocity_forward(const Params<T>& phi, const Grid<T>& m, T t, const MaskGrid& s) {
    if (t < T(0) || t > T(1)) throw validation_error("velocity_forward: t outside [0,1]");
    const UNet<T> net = UNet<T>::from_params(phi);
    return net.forward(phi, velocity_input(m, t, s));
}

template <typename T>
T flow_matching_loss(const Params<T>& phi, const Grid<T>& xs, const MaskGrid& ss,
                     const Grid<T>& z, T t) {
    return flow_matching_loss_fn(
        [&](const Grid<T>& mt, T tt, const MaskGrid& seed) {
            return velocity_forward(phi, mt, tt, seed);
        },
        xs, ss, z, t);
}

// Adaptive-moment optimizer with decoupled weight decay.
template <typename T>
struct OptimizerState {
    std::int64_t step = 0;
    T lr = T(2e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(1e-4);
    Params<T> m, v;

    static OptimizerState for_params(const Params<T>& p, T lr, T weight_decay) {
        OptimizerState s;
        s.lr = lr;
        s.weight_decay = weight_decay;
        s.m = Params<T>::zeros_like(p);
        s.v = Params<T>::zeros_like(p);
        return s;
    }
};

template <typename T>
void optimizer_step(OptimizerState<T>& state, Params<T>& params, const Params<T>& grads) {
    if (!params_shapes_match(params, grads) || !params_shapes_match(params, state.m))
        throw validation_error("optimizer_step: shape mismatch");
    for (const auto& g : grads.tensors)
        for (const auto& x : g.v)
            if (!std::isfinite(x)) throw validation_error("optimizer_step: non-finite gradient");
    ++state.step;
    const T bc1 = T(1) - std::pow(state.beta1, T(state.step));
    const T bc2 = T(1) - std::pow(state.beta2, T(state.step));
    for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
        T* p = params.tensors[ti].v.data();
        const T* g = grads.tensors[ti].v.data();
        T* m = state.m.tensors[ti].v.data();
        T* v = state.v.tensors[ti].v.data();
        const std::size_t n = params.tensors[ti].size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g[i] * g[i];
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            p[i] -= state.lr * (mhat / (std::sqrt(vhat) + state.eps) + state.weight_decay * p[i]);
        }
    }
}

template <typename T>
struct EmaParams {
    Params<T> shadow;
    T decay = T(0.999);

    static EmaParams tracking(const Params<T>& p, T decay) {
        EmaParams e;
        e.shadow = p;
        e.shadow.role = p.role + "_ema";
        e.decay = decay;
        return e;
    }
};

template <typename T>
void ema_update(EmaParams<T>& ema, const Params<T>& params) {
    if (!params_shapes_match(ema.shadow, params))
        throw validation_error("ema_update: shape mismatch");
    for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
        T* s = ema.shadow.tensors[ti].v.data();
        const T* p = params.tensors[ti].v.data();
        const std::size_t n = params.tensors[ti].size();
        for (std::size_t i = 0; i < n; ++i)
            s[i] = ema.decay * s[i] + (T(1) - ema.decay) * p[i];
    }
}

// MCW1 checkpoint: magic "MCW1", u32 entry count, then per entry u32 name
// length, name bytes, u32 ndim, u32 dims, f32 little-endian values.
template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Params<T>*>>& groups) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os.write("MCW1", 4);
    std::uint32_t count = 0;
    for (const auto& [prefix, p] : groups) count += static_cast<std::uint32_t>(p->tensors.size());
    detail::write_u32le(os, count);
    for (const auto& [prefix, p] : groups) {
        for (const auto& t : p->tensors) {
            const std::string name = prefix.empty() ? t.name : prefix + "." + t.name;
            detail::write_u32le(os, static_cast<std::uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            detail::write_u32le(os, static_cast<std::uint32_t>(t.shape.size()));
            for (const int d : t.shape) detail::write_u32le(os, static_cast<std::uint32_t>(d));
            for (const T x : t.v) detail::write_f32le(os, static_cast<float>(x));
        }
    }
    if (!os) throw io_error("write failed: " + path);
}

inline std::vector<ParamTensor<float>> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "MCW1", 4) != 0)
        throw io_error("not an MCW1 checkpoint: " + path);
    const std::uint32_t count = detail::read_u32le(is, path.c_str());
    std::vector<ParamTensor<float>> out;
    out.reserve(count);
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint32_t name_len = detail::read_u32le(is, path.c_str());
        if (name_len > 4096) throw io_error("implausible name length in " + path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw io_error("truncated checkpoint: " + path);
        const std::uint32_t ndim = detail::read_u32le(is, path.c_str());
        if (ndim > 8) throw io_error("implausible ndim in " + path);
        ParamTensor<float> t;
        t.name = std::move(name);
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            t.shape.push_back(static_cast<int>(detail::read_u32le(is, path.c_str())));
            n *= static_cast<std::size_t>(t.shape.back());
        }
        t.v.resize(n);
        for (std::size_t i = 0; i < n; ++i) t.v[i] = detail::read_f32le(is, path.c_str());
        out.push_back(std::move(t));
    }
    return out;
}

// Collects entries under "<prefix>." (file order preserved, prefix stripped).
template <typename T>
Params<T> params_from_checkpoint(const std::vector<ParamTensor<float>>& entries,
                                 const std::string& prefix, const std::string& role) {
    Params<T> p;
    p.role = role;
    const std::string full = prefix + ".";
    for (const auto& e : entries) {
        if (e.name.rfind(full, 0) != 0) continue;
        ParamTensor<T> t;
        t.name = e.name.substr(full.size());
        t.shape = e.shape;
        t.v.resize(e.v.size());
        for (std::size_t i = 0; i < e.v.size(); ++i) t.v[i] = static_cast<T>(e.v[i]);
        p.tensors.push_back(std::move(t));
    }
    if (p.tensors.empty())
        throw validation_error("checkpoint has no entries under prefix '" + prefix + "'");
    return p;
}

} // namespace puncta
