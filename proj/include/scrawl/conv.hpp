#pragma once

#include <memory>
#include <vector>

#include "scrawl/ops.hpp"

namespace scrawl {

// conv2d uses the cross-correlation convention (no kernel flip), zero padding,
// output extent (H + 2*pad - kh) / stride + 1.
template <typename T>
TensorT<T> conv2d(TapeT<T>& tape, const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& bias,
                  int stride = 1, int pad = 0) {
    if (input.rank() != 4 || kernel.rank() != 4)
        throw std::runtime_error("conv2d: need NCHW input and FCKhKw kernel, got " + shape_str(input.shape()) +
                                 " and " + shape_str(kernel.shape()));
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int F = kernel.dim(0), KC = kernel.dim(1), KH = kernel.dim(2), KW = kernel.dim(3);
    if (KC != C) throw std::runtime_error("conv2d: channel mismatch " + shape_str(input.shape()) + " vs " +
                                          shape_str(kernel.shape()));
    if (bias.rank() != 1 || bias.dim(0) != F) throw std::runtime_error("conv2d: bias must be [F]");
    if (stride < 1) throw std::runtime_error("conv2d: stride must be >= 1");
    if (KH > H + 2 * pad || KW > W + 2 * pad) throw std::runtime_error("conv2d: kernel larger than padded input");
    const int OH = (H + 2 * pad - KH) / stride + 1;
    const int OW = (W + 2 * pad - KW) / stride + 1;
    if (OH <= 0 || OW <= 0) throw std::runtime_error("conv2d: non-positive output extent");

    TensorT<T> out({N, F, OH, OW});
    const T* in = input.data();
    const T* k = kernel.data();
    const T* b = bias.data();
    T* o = out.data();
    auto in_at = [&](int n, int c) { return in + (static_cast<size_t>(n) * C + c) * H * W; };
    auto out_at = [&](int n, int f) { return o + (static_cast<size_t>(n) * F + f) * OH * OW; };
    for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f) {
            T* orow = out_at(n, f);
            for (int i = 0; i < OH * OW; ++i) orow[i] = b[f];
            for (int c = 0; c < C; ++c) {
                const T* irow = in_at(n, c);
                const T* kf = k + ((static_cast<size_t>(f) * C + c) * KH) * KW;
                for (int kh = 0; kh < KH; ++kh)
                    for (int kw = 0; kw < KW; ++kw) {
                        const T kv = kf[kh * KW + kw];
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * stride + kh - pad;
                            if (ih < 0 || ih >= H) continue;
                            const T* src = irow + static_cast<size_t>(ih) * W;
                            T* dst = orow + static_cast<size_t>(oh) * OW;
                            // valid ow range so that iw = ow*stride + kw - pad lands in [0, W)
                            int ow = 0, iw = kw - pad;
                            while (iw < 0) { iw += stride; ++ow; }
                            for (; ow < OW && iw < W; ++ow, iw += stride) dst[ow] += kv * src[iw];
                        }
                    }
            }
        }

    if (tape.recording() && (input.requires_grad() || kernel.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        TensorT<T> ic = input, kc = kernel, bc = bias, oc = out;
        tape.record([ic, kc, bc, oc, N, C, H, W, F, KH, KW, OH, OW, stride, pad]() mutable {
            const T* go = oc.grad();
            auto go_at = [&](int n, int f) { return go + (static_cast<size_t>(n) * F + f) * OH * OW; };
            if (bc.requires_grad()) {
                T* gb = bc.grad();
                for (int n = 0; n < N; ++n)
                    for (int f = 0; f < F; ++f) {
                        const T* g = go_at(n, f);
                        T acc = 0;
                        for (int i = 0; i < OH * OW; ++i) acc += g[i];
                        gb[f] += acc;
                    }
            }
            if (ic.requires_grad()) {
                T* gi = ic.grad();
                const T* k2 = kc.data();
                for (int n = 0; n < N; ++n)
                    for (int f = 0; f < F; ++f) {
                        const T* g = go_at(n, f);
                        for (int c = 0; c < C; ++c) {
                            T* girow = gi + (static_cast<size_t>(n) * C + c) * H * W;
                            const T* kf = k2 + ((static_cast<size_t>(f) * C + c) * KH) * KW;
                            for (int kh = 0; kh < KH; ++kh)
                                for (int kw = 0; kw < KW; ++kw) {
                                    const T kv = kf[kh * KW + kw];
                                    for (int oh = 0; oh < OH; ++oh) {
                                        const int ih = oh * stride + kh - pad;
                                        if (ih < 0 || ih >= H) continue;
                                        T* dst = girow + static_cast<size_t>(ih) * W;
                                        const T* src = g + static_cast<size_t>(oh) * OW;
                                        int ow = 0, iw = kw - pad;
                                        while (iw < 0) { iw += stride; ++ow; }
                                        for (; ow < OW && iw < W; ++ow, iw += stride) dst[iw] += kv * src[ow];
                                    }
                                }
                        }
                    }
            }
            if (kc.requires_grad()) {
                T* gk = kc.grad();
                const T* in2 = ic.data();
                for (int n = 0; n < N; ++n)
                    for (int f = 0; f < F; ++f) {
                        const T* g = go_at(n, f);
                        for (int c = 0; c < C; ++c) {
                            const T* irow = in2 + (static_cast<size_t>(n) * C + c) * H * W;
                            T* kf = gk + ((static_cast<size_t>(f) * C + c) * KH) * KW;
                            for (int kh = 0; kh < KH; ++kh)
                                for (int kw = 0; kw < KW; ++kw) {
                                    T acc = 0;
                                    for (int oh = 0; oh < OH; ++oh) {
                                        const int ih = oh * stride + kh - pad;
                                        if (ih < 0 || ih >= H) continue;
                                        const T* src = irow + static_cast<size_t>(ih) * W;
                                        const T* gr = g + static_cast<size_t>(oh) * OW;
                                        int ow = 0, iw = kw - pad;
                                        while (iw < 0) { iw += stride; ++ow; }
                                        for (; ow < OW && iw < W; ++ow, iw += stride) acc += gr[ow] * src[iw];
                                    }
                                    kf[kh * KW + kw] += acc;
                                }
                        }
                    }
            }
        });
    }
    return out;
}

template <typename T>
struct PoolResult {
    TensorT<T> out;
    // flat input offset of each window maximum; exact backward routing
    std::shared_ptr<std::vector<int>> argmax;
};

// disjoint 2x2 windows, odd trailing row/column dropped; within-window ties
// resolve to the first element in row-major scan order
template <typename T>
PoolResult<T> maxpool2x2(TapeT<T>& tape, const TensorT<T>& input) {
    if (input.rank() != 4) throw std::runtime_error("maxpool2x2: need NCHW input");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (H < 2 || W < 2)
        throw std::runtime_error("maxpool2x2: spatial extent below 2 in " + shape_str(input.shape()));
    const int OH = H / 2, OW = W / 2;
    TensorT<T> out({N, C, OH, OW});
    auto argmax = std::make_shared<std::vector<int>>(out.numel());
    const T* in = input.data();
    T* o = out.data();
    size_t oi = 0;
    for (int nc = 0; nc < N * C; ++nc) {
        const T* plane = in + static_cast<size_t>(nc) * H * W;
        for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow, ++oi) {
                const int base = (oh * 2) * W + ow * 2;
                int best = base;
                T bv = plane[base];
                const int cand[3] = {base + 1, base + W, base + W + 1};
                for (int c : cand)
                    if (plane[c] > bv) { bv = plane[c]; best = c; }
                o[oi] = bv;
                (*argmax)[oi] = nc * H * W + best;
            }
    }
    if (tape.recording() && input.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<T> ic = input, oc = out;
        auto am = argmax;
        tape.record([ic, oc, am]() mutable {
            const T* go = oc.grad();
            T* g = ic.grad();
            for (size_t i = 0; i < oc.numel(); ++i) g[(*am)[i]] += go[i];
        });
    }
    return {out, argmax};
}

struct BatchNormStats {
    // running mean/var per channel; mutated during train-mode forward
    template <typename T>
    static std::pair<TensorT<T>, TensorT<T>> init(int channels) {
        return {TensorT<T>({channels}), TensorT<T>::full({channels}, T(1))};
    }
};

// Per-channel batch normalization over the N,H,W extents.
// Train mode normalizes by batch statistics (population variance) and blends
// running stats with `momentum` kept mass on the old value; infer mode uses
// the running stats. Variance stabilized by eps, never an error.
template <typename T>
TensorT<T> batch_norm(TapeT<T>& tape, const TensorT<T>& input, const TensorT<T>& gamma, const TensorT<T>& beta,
                      TensorT<T>& running_mean, TensorT<T>& running_var, Mode mode, T momentum = T(0.9),
                      T eps = T(1e-5)) {
    if (input.rank() != 4) throw std::runtime_error("batch_norm: need NCHW input");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (gamma.dim(0) != C || beta.dim(0) != C || running_mean.dim(0) != C || running_var.dim(0) != C)
        throw std::runtime_error("batch_norm: channel mismatch");
    const size_t M = static_cast<size_t>(N) * H * W;
    if (mode == Mode::train && M < 2) throw std::runtime_error("batch_norm: train mode needs N*H*W >= 2");

    const size_t plane = static_cast<size_t>(H) * W;
    auto channel_ptr = [&](const T* base, int n, int c) {
        return base + (static_cast<size_t>(n) * C + c) * plane;
    };

    std::vector<T> mean(C), var(C);
    if (mode == Mode::train) {
        for (int c = 0; c < C; ++c) {
            T s = 0;
            for (int n = 0; n < N; ++n) {
                const T* p = channel_ptr(input.data(), n, c);
                for (size_t i = 0; i < plane; ++i) s += p[i];
            }
            mean[c] = s / static_cast<T>(M);
            T v = 0;
            for (int n = 0; n < N; ++n) {
                const T* p = channel_ptr(input.data(), n, c);
                for (size_t i = 0; i < plane; ++i) {
                    const T d = p[i] - mean[c];
                    v += d * d;
                }
            }
            var[c] = v / static_cast<T>(M);
            running_mean.data()[c] = momentum * running_mean.data()[c] + (T(1) - momentum) * mean[c];
            running_var.data()[c] = momentum * running_var.data()[c] + (T(1) - momentum) * var[c];
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = running_mean.data()[c];
            var[c] = running_var.data()[c];
        }
    }

    TensorT<T> out(input.shape());
    for (int c = 0; c < C; ++c) {
        const T inv_std = T(1) / std::sqrt(var[c] + eps);
        const T gc = gamma.data()[c], bc = beta.data()[c];
        for (int n = 0; n < N; ++n) {
            const T* p = channel_ptr(input.data(), n, c);
            T* q = const_cast<T*>(channel_ptr(out.data(), n, c));
            for (size_t i = 0; i < plane; ++i) q[i] = gc * (p[i] - mean[c]) * inv_std + bc;
        }
    }

    if (tape.recording() && (input.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
        out.set_requires_grad(true);
        TensorT<T> ic = input, gc = gamma, bc = beta, oc = out;
        const bool train = mode == Mode::train;
        tape.record([ic, gc, bc, oc, mean, var, eps, train, N, C, plane, M]() mutable {
            const T* go = oc.grad();
            auto at = [&](const T* base, int n, int c) { return base + (static_cast<size_t>(n) * C + c) * plane; };
            for (int c = 0; c < C; ++c) {
                const T inv_std = T(1) / std::sqrt(var[c] + eps);
                const T g_c = gc.data()[c];
                T sum_dy = 0, sum_dy_xhat = 0, sum_xc = 0;
                for (int n = 0; n < N; ++n) {
                    const T* dy = at(go, n, c);
                    const T* x = at(ic.data(), n, c);
                    for (size_t i = 0; i < plane; ++i) {
                        const T xc = x[i] - mean[c];
                        sum_dy += dy[i];
                        sum_dy_xhat += dy[i] * xc * inv_std;
                        sum_xc += xc;
                    }
                }
                if (gc.requires_grad()) gc.grad()[c] += sum_dy_xhat;
                if (bc.requires_grad()) bc.grad()[c] += sum_dy;
                if (!ic.requires_grad()) continue;
                const T m = static_cast<T>(M);
                if (train) {
                    // d/dx through the batch statistics
                    const T dvar = -T(0.5) * g_c * sum_dy_xhat * inv_std * inv_std;
                    const T dmean = -g_c * inv_std * sum_dy - T(2) * dvar * sum_xc / m;
                    for (int n = 0; n < N; ++n) {
                        const T* dy = at(go, n, c);
                        const T* x = at(ic.data(), n, c);
                        T* gx = ic.grad() + (static_cast<size_t>(n) * C + c) * plane;
                        for (size_t i = 0; i < plane; ++i)
                            gx[i] += g_c * dy[i] * inv_std + dvar * T(2) * (x[i] - mean[c]) / m + dmean / m;
                    }
                } else {
                    for (int n = 0; n < N; ++n) {
                        const T* dy = at(go, n, c);
                        T* gx = ic.grad() + (static_cast<size_t>(n) * C + c) * plane;
                        for (size_t i = 0; i < plane; ++i) gx[i] += g_c * dy[i] * inv_std;
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace scrawl
