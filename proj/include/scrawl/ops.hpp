#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "scrawl/tape.hpp"
#include "scrawl/tensor.hpp"

// Primitive differentiable ops. Every op computes its result eagerly and, when
// the tape is recording and an input requires grad, records a closure that
// accumulates into the inputs' grad buffers. Elementwise ops accept three
// shape patterns: identical shapes, a 1-element scalar on either side, or a
// rank-1 vector broadcast along the other operand's last axis (bias adds,
// per-position masks).

namespace scrawl {

namespace detail {

enum class Bcast { same, a_scalar, b_scalar, a_vec, b_vec };

inline Bcast bcast_pattern(const Shape& a, const Shape& b, const char* op) {
    if (a == b) return Bcast::same;
    if (numel_of(b) == 1) return Bcast::b_scalar;
    if (numel_of(a) == 1) return Bcast::a_scalar;
    if (b.size() == 1 && !a.empty() && b[0] == a.back()) return Bcast::b_vec;
    if (a.size() == 1 && !b.empty() && a[0] == b.back()) return Bcast::a_vec;
    throw std::runtime_error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// fwd(x, y) -> value; dfa/dfb(x, y) -> local partials
template <typename T, typename F, typename Da, typename Db>
TensorT<T> binary_op(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b, const char* name, F fwd, Da dfa,
                     Db dfb) {
    Bcast p = bcast_pattern(a.shape(), b.shape(), name);
    const Shape& out_shape = (p == Bcast::a_scalar || p == Bcast::a_vec) ? b.shape() : a.shape();
    TensorT<T> out(out_shape);
    const size_t n = out.numel();
    const size_t av = a.numel(), bv = b.numel();
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    auto a_idx = [&](size_t i) { return p == Bcast::a_scalar ? 0 : (p == Bcast::a_vec ? i % av : i); };
    auto b_idx = [&](size_t i) { return p == Bcast::b_scalar ? 0 : (p == Bcast::b_vec ? i % bv : i); };
    for (size_t i = 0; i < n; ++i) po[i] = fwd(pa[a_idx(i)], pb[b_idx(i)]);

    if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        TensorT<T> ac = a, bc = b, oc = out;
        tape.record([ac, bc, oc, p, dfa, dfb]() mutable {
            const size_t n2 = oc.numel();
            const size_t av2 = ac.numel(), bv2 = bc.numel();
            const T* ga = oc.grad();
            const T* xa = ac.data();
            const T* xb = bc.data();
            auto ai = [&](size_t i) { return p == Bcast::a_scalar ? 0 : (p == Bcast::a_vec ? i % av2 : i); };
            auto bi = [&](size_t i) { return p == Bcast::b_scalar ? 0 : (p == Bcast::b_vec ? i % bv2 : i); };
            if (ac.requires_grad()) {
                T* g = ac.grad();
                for (size_t i = 0; i < n2; ++i) g[ai(i)] += dfa(xa[ai(i)], xb[bi(i)]) * ga[i];
            }
            if (bc.requires_grad()) {
                T* g = bc.grad();
                for (size_t i = 0; i < n2; ++i) g[bi(i)] += dfb(xa[ai(i)], xb[bi(i)]) * ga[i];
            }
        });
    }
    return out;
}

template <typename T, typename F, typename D>
TensorT<T> unary_op(TapeT<T>& tape, const TensorT<T>& a, F fwd, D dlocal) {
    TensorT<T> out(a.shape());
    const size_t n = a.numel();
    const T* pa = a.data();
    T* po = out.data();
    for (size_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
    if (tape.recording() && a.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<T> ac = a, oc = out;
        tape.record([ac, oc, dlocal]() mutable {
            const size_t n2 = oc.numel();
            const T* go = oc.grad();
            const T* x = ac.data();
            const T* y = oc.data();
            T* g = ac.grad();
            for (size_t i = 0; i < n2; ++i) g[i] += dlocal(x[i], y[i]) * go[i];
        });
    }
    return out;
}

// C[m,n] += A[m,p] * B[p,n]
template <typename T>
void mm_nn(const T* A, const T* B, T* C, int m, int p, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = A + static_cast<size_t>(i) * p;
        T* crow = C + static_cast<size_t>(i) * n;
        for (int k = 0; k < p; ++k) {
            const T aik = arow[k];
            const T* brow = B + static_cast<size_t>(k) * n;
            for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// C[m,n] += A[p,m]^T * B[p,n]
template <typename T>
void mm_tn(const T* A, const T* B, T* C, int m, int p, int n) {
    for (int k = 0; k < p; ++k) {
        const T* arow = A + static_cast<size_t>(k) * m;
        const T* brow = B + static_cast<size_t>(k) * n;
        for (int i = 0; i < m; ++i) {
            const T aki = arow[i];
            T* crow = C + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
}

// C[m,n] += A[m,p] * B[n,p]^T
template <typename T>
void mm_nt(const T* A, const T* B, T* C, int m, int p, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = A + static_cast<size_t>(i) * p;
        T* crow = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = B + static_cast<size_t>(j) * p;
            T acc = 0;
            for (int k = 0; k < p; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

}  // namespace detail

template <typename T>
TensorT<T> add(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    return detail::binary_op(
        tape, a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
TensorT<T> sub(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    return detail::binary_op(
        tape, a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
TensorT<T> mul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    return detail::binary_op(
        tape, a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
TensorT<T> add_scalar(TapeT<T>& tape, const TensorT<T>& a, T c) {
    return add(tape, a, TensorT<T>::scalar(c));
}

template <typename T>
TensorT<T> mul_scalar(TapeT<T>& tape, const TensorT<T>& a, T c) {
    return mul(tape, a, TensorT<T>::scalar(c));
}

template <typename T>
TensorT<T> relu(TapeT<T>& tape, const TensorT<T>& a) {
    return detail::unary_op(
        tape, a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
TensorT<T> sigmoid(TapeT<T>& tape, const TensorT<T>& a) {
    return detail::unary_op(
        tape, a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
TensorT<T> tanh(TapeT<T>& tape, const TensorT<T>& a) {
    return detail::unary_op(
        tape, a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
TensorT<T> exp(TapeT<T>& tape, const TensorT<T>& a) {
    return detail::unary_op(
        tape, a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
TensorT<T> log(TapeT<T>& tape, const TensorT<T>& a) {
    return detail::unary_op(
        tape, a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

// 2-d [m,p]x[p,n] or batched 3-d [B,m,p]x[B,p,n]
template <typename T>
TensorT<T> matmul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    const bool batched = a.rank() == 3;
    if (!((a.rank() == 2 && b.rank() == 2) || (a.rank() == 3 && b.rank() == 3)))
        throw std::runtime_error("matmul: ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int B = batched ? a.dim(0) : 1;
    const int m = a.dim(batched ? 1 : 0), p = a.dim(batched ? 2 : 1);
    const int p2 = b.dim(batched ? 1 : 0), n = b.dim(batched ? 2 : 1);
    if (p != p2 || (batched && b.dim(0) != B))
        throw std::runtime_error("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    TensorT<T> out(batched ? Shape{B, m, n} : Shape{m, n});
    for (int g = 0; g < B; ++g)
        detail::mm_nn(a.data() + static_cast<size_t>(g) * m * p, b.data() + static_cast<size_t>(g) * p * n,
                      out.data() + static_cast<size_t>(g) * m * n, m, p, n);
    if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        TensorT<T> ac = a, bc = b, oc = out;
        tape.record([ac, bc, oc, B, m, p, n]() mutable {
            for (int g = 0; g < B; ++g) {
                const T* go = oc.grad() + static_cast<size_t>(g) * m * n;
                if (ac.requires_grad())  // dA += dC * B^T
                    detail::mm_nt(go, bc.data() + static_cast<size_t>(g) * p * n,
                                  ac.grad() + static_cast<size_t>(g) * m * p, m, n, p);
                if (bc.requires_grad())  // dB += A^T * dC
                    detail::mm_tn(ac.data() + static_cast<size_t>(g) * m * p, go,
                                  bc.grad() + static_cast<size_t>(g) * p * n, p, m, n);
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> concat(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b, int axis) {
    if (a.rank() != b.rank()) throw std::runtime_error("concat: rank mismatch");
    if (axis < 0 || axis >= a.rank()) throw std::runtime_error("concat: bad axis");
    Shape out_shape = a.shape();
    for (int i = 0; i < a.rank(); ++i)
        if (i != axis && a.dim(i) != b.dim(i))
            throw std::runtime_error("concat: shape mismatch " + shape_str(a.shape()) + " vs " +
                                     shape_str(b.shape()));
    out_shape[static_cast<size_t>(axis)] += b.dim(axis);

    size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(a.dim(i));
    for (int i = axis + 1; i < a.rank(); ++i) inner *= static_cast<size_t>(a.dim(i));
    const size_t wa = static_cast<size_t>(a.dim(axis)) * inner;
    const size_t wb = static_cast<size_t>(b.dim(axis)) * inner;

    TensorT<T> out(out_shape);
    for (size_t o = 0; o < outer; ++o) {
        std::memcpy(out.data() + o * (wa + wb), a.data() + o * wa, wa * sizeof(T));
        std::memcpy(out.data() + o * (wa + wb) + wa, b.data() + o * wb, wb * sizeof(T));
    }
    if (tape.recording() && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        TensorT<T> ac = a, bc = b, oc = out;
        tape.record([ac, bc, oc, outer, wa, wb]() mutable {
            const T* go = oc.grad();
            for (size_t o = 0; o < outer; ++o) {
                if (ac.requires_grad()) {
                    T* g = ac.grad() + o * wa;
                    const T* s = go + o * (wa + wb);
                    for (size_t i = 0; i < wa; ++i) g[i] += s[i];
                }
                if (bc.requires_grad()) {
                    T* g = bc.grad() + o * wb;
                    const T* s = go + o * (wa + wb) + wa;
                    for (size_t i = 0; i < wb; ++i) g[i] += s[i];
                }
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> slice(TapeT<T>& tape, const TensorT<T>& a, int axis, int start, int len) {
    if (axis < 0 || axis >= a.rank()) throw std::runtime_error("slice: bad axis");
    if (start < 0 || len <= 0 || start + len > a.dim(axis))
        throw std::runtime_error("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                 ") out of " + shape_str(a.shape()));
    Shape out_shape = a.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(a.dim(i));
    for (int i = axis + 1; i < a.rank(); ++i) inner *= static_cast<size_t>(a.dim(i));
    const size_t in_w = static_cast<size_t>(a.dim(axis)) * inner;
    const size_t out_w = static_cast<size_t>(len) * inner;
    const size_t off = static_cast<size_t>(start) * inner;

    TensorT<T> out(out_shape);
    for (size_t o = 0; o < outer; ++o)
        std::memcpy(out.data() + o * out_w, a.data() + o * in_w + off, out_w * sizeof(T));
    if (tape.recording() && a.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<T> ac = a, oc = out;
        tape.record([ac, oc, outer, in_w, out_w, off]() mutable {
            const T* go = oc.grad();
            T* g = ac.grad();
            for (size_t o = 0; o < outer; ++o)
                for (size_t i = 0; i < out_w; ++i) g[o * in_w + off + i] += go[o * out_w + i];
        });
    }
    return out;
}

template <typename T>
TensorT<T> reshape(TapeT<T>& tape, const TensorT<T>& a, Shape new_shape) {
    if (numel_of(new_shape) != a.numel())
        throw std::runtime_error("reshape: " + shape_str(a.shape()) + " -> " + shape_str(new_shape));
    TensorT<T> out = TensorT<T>::from(std::move(new_shape), a.vec());
    if (tape.recording() && a.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<T> ac = a, oc = out;
        tape.record([ac, oc]() mutable {
            const T* go = oc.grad();
            T* g = ac.grad();
            for (size_t i = 0; i < oc.numel(); ++i) g[i] += go[i];
        });
    }
    return out;
}

namespace detail {

template <typename T>
void permute_copy(const T* src, T* dst, const Shape& in_shape, const std::vector<int>& perm, bool accumulate) {
    const int r = static_cast<int>(in_shape.size());
    std::vector<size_t> in_strides(r, 1);
    for (int i = r - 2; i >= 0; --i)
        in_strides[i] = in_strides[i + 1] * static_cast<size_t>(in_shape[i + 1]);
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];
    std::vector<size_t> idx(r, 0);
    const size_t n = numel_of(in_shape);
    for (size_t o = 0; o < n; ++o) {
        size_t src_off = 0;
        for (int i = 0; i < r; ++i) src_off += idx[i] * in_strides[perm[i]];
        if (accumulate)
            dst[src_off] += src[o];
        else
            dst[o] = src[src_off];
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < static_cast<size_t>(out_shape[i])) break;
            idx[i] = 0;
        }
    }
}

}  // namespace detail

template <typename T>
TensorT<T> permute(TapeT<T>& tape, const TensorT<T>& a, std::vector<int> perm) {
    if (static_cast<int>(perm.size()) != a.rank()) throw std::runtime_error("permute: axes count");
    std::vector<bool> seen(perm.size(), false);
    for (int d : perm) {
        if (d < 0 || d >= a.rank() || seen[static_cast<size_t>(d)]) throw std::runtime_error("permute: bad axes");
        seen[static_cast<size_t>(d)] = true;
    }
    Shape out_shape(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = a.dim(perm[i]);
    TensorT<T> out(out_shape);
    detail::permute_copy(a.data(), out.data(), a.shape(), perm, false);
    if (tape.recording() && a.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<T> ac = a, oc = out;
        Shape in_shape = a.shape();
        tape.record([ac, oc, in_shape, perm]() mutable {
            detail::permute_copy(oc.grad(), ac.grad(), in_shape, perm, true);
        });
    }
    return out;
}

template <typename T>
TensorT<T> transpose(TapeT<T>& tape, const TensorT<T>& a) {
    if (a.rank() != 2) throw std::runtime_error("transpose: expected rank 2, got " + shape_str(a.shape()));
    return permute(tape, a, {1, 0});
}

template <typename T>
TensorT<T> sum_all(TapeT<T>& tape, const TensorT<T>& a) {
    T acc = 0;
    const T* pa = a.data();
    for (size_t i = 0; i < a.numel(); ++i) acc += pa[i];
    TensorT<T> out = TensorT<T>::scalar(acc);
    if (tape.recording() && a.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<T> ac = a, oc = out;
        tape.record([ac, oc]() mutable {
            const T go = oc.grad()[0];
            T* g = ac.grad();
            for (size_t i = 0; i < ac.numel(); ++i) g[i] += go;
        });
    }
    return out;
}

namespace detail {

template <typename T>
TensorT<T> reduce_axis(TapeT<T>& tape, const TensorT<T>& a, int axis, bool mean) {
    if (axis < 0 || axis >= a.rank()) throw std::runtime_error("reduce: bad axis");
    Shape out_shape;
    for (int i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.dim(i));
    if (out_shape.empty()) out_shape = {1};
    size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(a.dim(i));
    for (int i = axis + 1; i < a.rank(); ++i) inner *= static_cast<size_t>(a.dim(i));
    const size_t k = static_cast<size_t>(a.dim(axis));
    const T scale = mean ? T(1) / static_cast<T>(k) : T(1);

    TensorT<T> out(out_shape);
    const T* pa = a.data();
    T* po = out.data();
    for (size_t o = 0; o < outer; ++o)
        for (size_t j = 0; j < k; ++j) {
            const T* src = pa + (o * k + j) * inner;
            T* dst = po + o * inner;
            for (size_t i = 0; i < inner; ++i) dst[i] += src[i] * scale;
        }
    if (tape.recording() && a.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<T> ac = a, oc = out;
        tape.record([ac, oc, outer, inner, k, scale]() mutable {
            const T* go = oc.grad();
            T* g = ac.grad();
            for (size_t o = 0; o < outer; ++o)
                for (size_t j = 0; j < k; ++j) {
                    const T* src = go + o * inner;
                    T* dst = g + (o * k + j) * inner;
                    for (size_t i = 0; i < inner; ++i) dst[i] += src[i] * scale;
                }
        });
    }
    return out;
}

}  // namespace detail

template <typename T>
TensorT<T> sum_axis(TapeT<T>& tape, const TensorT<T>& a, int axis) {
    return detail::reduce_axis(tape, a, axis, false);
}

template <typename T>
TensorT<T> mean_axis(TapeT<T>& tape, const TensorT<T>& a, int axis) {
    return detail::reduce_axis(tape, a, axis, true);
}

template <typename T>
TensorT<T> mean_all(TapeT<T>& tape, const TensorT<T>& a) {
    return mul_scalar(tape, sum_all(tape, a), T(1) / static_cast<T>(a.numel()));
}

// rows of `table` selected by id; backward scatter-adds into the table
template <typename T>
TensorT<T> embedding(TapeT<T>& tape, const TensorT<T>& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw std::runtime_error("embedding: table must be rank 2");
    const int v = table.dim(0), e = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v)
            throw std::runtime_error("embedding: index " + std::to_string(id) + " out of range [0," +
                                     std::to_string(v) + ")");
    TensorT<T> out({static_cast<int>(ids.size()), e});
    for (size_t i = 0; i < ids.size(); ++i)
        std::memcpy(out.data() + i * static_cast<size_t>(e),
                    table.data() + static_cast<size_t>(ids[i]) * e, static_cast<size_t>(e) * sizeof(T));
    if (tape.recording() && table.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<T> tc = table, oc = out;
        std::vector<int> idc = ids;
        tape.record([tc, oc, idc, e]() mutable {
            const T* go = oc.grad();
            T* g = tc.grad();
            for (size_t i = 0; i < idc.size(); ++i) {
                T* dst = g + static_cast<size_t>(idc[i]) * e;
                const T* src = go + i * static_cast<size_t>(e);
                for (int j = 0; j < e; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

// softmax along the last axis, max-subtracted for stability
template <typename T>
TensorT<T> softmax(TapeT<T>& tape, const TensorT<T>& a) {
    if (a.rank() < 1) throw std::runtime_error("softmax: rank 0");
    const size_t k = static_cast<size_t>(a.dim(a.rank() - 1));
    const size_t rows = a.numel() / k;
    TensorT<T> out(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    for (size_t r = 0; r < rows; ++r) {
        const T* x = pa + r * k;
        T* y = po + r * k;
        T mx = x[0];
        for (size_t i = 1; i < k; ++i) mx = std::max(mx, x[i]);
        T sum = 0;
        for (size_t i = 0; i < k; ++i) {
            y[i] = std::exp(x[i] - mx);
            sum += y[i];
        }
        const T inv = T(1) / sum;
        for (size_t i = 0; i < k; ++i) y[i] *= inv;
    }
    if (tape.recording() && a.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<T> ac = a, oc = out;
        tape.record([ac, oc, rows, k]() mutable {
            const T* y = oc.data();
            const T* go = oc.grad();
            T* g = ac.grad();
            for (size_t r = 0; r < rows; ++r) {
                const T* yr = y + r * k;
                const T* gr = go + r * k;
                T dot = 0;
                for (size_t i = 0; i < k; ++i) dot += yr[i] * gr[i];
                T* gx = g + r * k;
                for (size_t i = 0; i < k; ++i) gx[i] += yr[i] * (gr[i] - dot);
            }
        });
    }
    return out;
}

// spec surface for a single score vector
template <typename T>
TensorT<T> softmax_vector(TapeT<T>& tape, const TensorT<T>& scores) {
    if (scores.rank() != 1) throw std::runtime_error("softmax_vector: expected rank 1");
    return softmax(tape, scores);
}

// non-differentiable helpers
template <typename T>
inline int argmax_row(const T* row, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (row[i] > row[best]) best = i;  // ties keep the lowest index
    return best;
}

}  // namespace scrawl
