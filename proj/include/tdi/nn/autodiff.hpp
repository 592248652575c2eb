#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <unordered_set>
#include <vector>

#include "tdi/nn/tensor.hpp"

namespace tdi::nn {

// Dynamically built computation graph with reverse-mode differentiation.
// Nodes are shared_ptrs; a graph lives as long as its root.
template <class T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad; // allocated on first accumulation
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void()> backprop;

    void ensure_grad() {
        if (grad.size() != val.size()) grad = Tensor<T>(val.n, val.c, val.h, val.w, T(0));
    }
    void zero_grad() {
        for (auto& g : grad.v) g = T(0);
    }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> constant(Tensor<T> t) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(t);
    return n;
}

template <class T>
Var<T> leaf(Tensor<T> t, bool needs_grad = true) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(t);
    n->needs_grad = needs_grad;
    return n;
}

template <class T>
Var<T> detach(const Var<T>& x) {
    return constant(x->val);
}

namespace detail {

template <class T>
Var<T> make_op(Tensor<T> val, std::vector<Var<T>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(val);
    for (const auto& p : parents) n->needs_grad = n->needs_grad || p->needs_grad;
    n->parents = std::move(parents);
    return n;
}

} // namespace detail

// Runs reverse-mode accumulation from a scalar root. Gradients accumulate
// into Node::grad; callers zero parameter grads between steps.
template <class T>
void backward(const Var<T>& root) {
    if (root->val.size() != 1)
        throw std::invalid_argument("backward: root must be a scalar");
    // iterative topological sort
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({root.get(), 0});
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx == 0 && visited.count(node)) {
            stack.pop_back();
            continue;
        }
        visited.insert(node);
        if (idx < node->parents.size()) {
            Node<T>* parent = node->parents[idx].get();
            ++idx;
            if (!visited.count(parent)) stack.push_back({parent, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.v[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backprop && node->needs_grad) {
            node->ensure_grad();
            node->backprop();
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise ops

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("add: shape mismatch");
    Tensor<T> out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] += b->val.v[i];
    auto n = detail::make_op(std::move(out), {a, b});
    Node<T>* np = n.get();
    n->backprop = [np, a, b] {
        if (a->needs_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < a->grad.size(); ++i) a->grad.v[i] += np->grad.v[i];
        }
        if (b->needs_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < b->grad.size(); ++i) b->grad.v[i] += np->grad.v[i];
        }
    };
    return n;
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("sub: shape mismatch");
    Tensor<T> out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] -= b->val.v[i];
    auto n = detail::make_op(std::move(out), {a, b});
    Node<T>* np = n.get();
    n->backprop = [np, a, b] {
        if (a->needs_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < a->grad.size(); ++i) a->grad.v[i] += np->grad.v[i];
        }
        if (b->needs_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < b->grad.size(); ++i) b->grad.v[i] -= np->grad.v[i];
        }
    };
    return n;
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument("mul: shape mismatch");
    Tensor<T> out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= b->val.v[i];
    auto n = detail::make_op(std::move(out), {a, b});
    Node<T>* np = n.get();
    n->backprop = [np, a, b] {
        if (a->needs_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < a->grad.size(); ++i)
                a->grad.v[i] += np->grad.v[i] * b->val.v[i];
        }
        if (b->needs_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < b->grad.size(); ++i)
                b->grad.v[i] += np->grad.v[i] * a->val.v[i];
        }
    };
    return n;
}

template <class T>
Var<T> square(const Var<T>& a) {
    return mul(a, a);
}

template <class T>
Var<T> scale(const Var<T>& a, T k) {
    Tensor<T> out = a->val;
    for (auto& v : out.v) v *= k;
    auto n = detail::make_op(std::move(out), {a});
    Node<T>* np = n.get();
    n->backprop = [np, a, k] {
        if (!a->needs_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad.v[i] += k * np->grad.v[i];
    };
    return n;
}

// out = x * (1 - m) + base * m, with m and base constants.
// This is the compositing step: m=1 pixels come from the original image.
template <class T>
Var<T> mask_mix(const Var<T>& x, const Tensor<T>& m, const Tensor<T>& base) {
    if (!x->val.same_shape(m) || !x->val.same_shape(base))
        throw std::invalid_argument("mask_mix: shape mismatch");
    Tensor<T> out = x->val;
    for (size_t i = 0; i < out.size(); ++i)
        out.v[i] = out.v[i] * (T(1) - m.v[i]) + base.v[i] * m.v[i];
    auto n = detail::make_op(std::move(out), {x});
    Node<T>* np = n.get();
    auto mask = std::make_shared<Tensor<T>>(m);
    n->backprop = [np, x, mask] {
        if (!x->needs_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < x->grad.size(); ++i)
            x->grad.v[i] += np->grad.v[i] * (T(1) - mask->v[i]);
    };
    return n;
}

// elementwise multiply by a constant tensor
template <class T>
Var<T> mul_const(const Var<T>& x, const Tensor<T>& m) {
    if (!x->val.same_shape(m)) throw std::invalid_argument("mul_const: shape mismatch");
    Tensor<T> out = x->val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= m.v[i];
    auto n = detail::make_op(std::move(out), {x});
    Node<T>* np = n.get();
    auto mc = std::make_shared<Tensor<T>>(m);
    n->backprop = [np, x, mc] {
        if (!x->needs_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < x->grad.size(); ++i) x->grad.v[i] += np->grad.v[i] * mc->v[i];
    };
    return n;
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T alpha = T(0.2)) {
    Tensor<T> out = x->val;
    for (auto& v : out.v)
        if (v < T(0)) v *= alpha;
    auto n = detail::make_op(std::move(out), {x});
    Node<T>* np = n.get();
    n->backprop = [np, x, alpha] {
        if (!x->needs_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < x->grad.size(); ++i)
            x->grad.v[i] += np->grad.v[i] * (x->val.v[i] < T(0) ? alpha : T(1));
    };
    return n;
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out = x->val;
    for (auto& v : out.v) {
        if (v >= T(0))
            v = T(1) / (T(1) + std::exp(-v));
        else {
            T e = std::exp(v);
            v = e / (T(1) + e);
        }
    }
    auto n = detail::make_op(std::move(out), {x});
    Node<T>* np = n.get();
    n->backprop = [np, x] {
        if (!x->needs_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < x->grad.size(); ++i) {
            T s = np->val.v[i];
            x->grad.v[i] += np->grad.v[i] * s * (T(1) - s);
        }
    };
    return n;
}

// softplus(x) = log(1 + e^x), numerically stable; -log sigmoid(z) = softplus(-z)
template <class T>
Var<T> softplus(const Var<T>& x) {
    Tensor<T> out = x->val;
    for (auto& v : out.v) v = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
    auto n = detail::make_op(std::move(out), {x});
    Node<T>* np = n.get();
    n->backprop = [np, x] {
        if (!x->needs_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < x->grad.size(); ++i) {
            T z = x->val.v[i];
            T s = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
            x->grad.v[i] += np->grad.v[i] * s;
        }
    };
    return n;
}

// ---------------------------------------------------------------------------
// shape ops

template <class T>
Var<T> concat_c(const Var<T>& a, const Var<T>& b) {
    if (a->val.n != b->val.n || a->val.h != b->val.h || a->val.w != b->val.w)
        throw std::invalid_argument("concat_c: shape mismatch");
    const int ca = a->val.c, cb = b->val.c, hw = a->val.h * a->val.w;
    Tensor<T> out(a->val.n, ca + cb, a->val.h, a->val.w);
    for (int i = 0; i < out.n; ++i) {
        std::copy_n(&a->val.v[size_t(i) * ca * hw], size_t(ca) * hw,
                    &out.v[size_t(i) * (ca + cb) * hw]);
        std::copy_n(&b->val.v[size_t(i) * cb * hw], size_t(cb) * hw,
                    &out.v[size_t(i) * (ca + cb) * hw + size_t(ca) * hw]);
    }
    auto n = detail::make_op(std::move(out), {a, b});
    Node<T>* np = n.get();
    n->backprop = [np, a, b, ca, cb, hw] {
        for (int i = 0; i < np->val.n; ++i) {
            if (a->needs_grad) {
                a->ensure_grad();
                const T* g = &np->grad.v[size_t(i) * (ca + cb) * hw];
                T* ga = &a->grad.v[size_t(i) * ca * hw];
                for (size_t k = 0; k < size_t(ca) * hw; ++k) ga[k] += g[k];
            }
            if (b->needs_grad) {
                b->ensure_grad();
                const T* g = &np->grad.v[size_t(i) * (ca + cb) * hw + size_t(ca) * hw];
                T* gb = &b->grad.v[size_t(i) * cb * hw];
                for (size_t k = 0; k < size_t(cb) * hw; ++k) gb[k] += g[k];
            }
        }
    };
    return n;
}

template <class T>
Var<T> slice_c(const Var<T>& x, int c0, int c1) {
    if (c0 < 0 || c1 > x->val.c || c0 >= c1) throw std::invalid_argument("slice_c: bad range");
    const int hw = x->val.h * x->val.w, cx = x->val.c, cs = c1 - c0;
    Tensor<T> out(x->val.n, cs, x->val.h, x->val.w);
    for (int i = 0; i < out.n; ++i)
        std::copy_n(&x->val.v[(size_t(i) * cx + c0) * hw], size_t(cs) * hw,
                    &out.v[size_t(i) * cs * hw]);
    auto n = detail::make_op(std::move(out), {x});
    Node<T>* np = n.get();
    n->backprop = [np, x, c0, cx, cs, hw] {
        if (!x->needs_grad) return;
        x->ensure_grad();
        for (int i = 0; i < np->val.n; ++i) {
            const T* g = &np->grad.v[size_t(i) * cs * hw];
            T* gx = &x->grad.v[(size_t(i) * cx + c0) * hw];
            for (size_t k = 0; k < size_t(cs) * hw; ++k) gx[k] += g[k];
        }
    };
    return n;
}

template <class T>
Var<T> upsample2x(const Var<T>& x) {
    const int N = x->val.n, C = x->val.c, H = x->val.h, W = x->val.w;
    Tensor<T> out(N, C, H * 2, W * 2);
    for (int i = 0; i < N; ++i)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H * 2; ++y)
                for (int xx = 0; xx < W * 2; ++xx)
                    out.at(i, c, y, xx) = x->val.at(i, c, y / 2, xx / 2);
    auto n = detail::make_op(std::move(out), {x});
    Node<T>* np = n.get();
    n->backprop = [np, x, N, C, H, W] {
        if (!x->needs_grad) return;
        x->ensure_grad();
        for (int i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < H * 2; ++y)
                    for (int xx = 0; xx < W * 2; ++xx)
                        x->grad.at(i, c, y / 2, xx / 2) += np->grad.at(i, c, y, xx);
    };
    return n;
}

// ---------------------------------------------------------------------------
// reductions

template <class T>
Var<T> sum_all(const Var<T>& x) {
    T s = T(0);
    for (T v : x->val.v) s += v;
    auto n = detail::make_op(Tensor<T>::scalar(s), {x});
    Node<T>* np = n.get();
    n->backprop = [np, x] {
        if (!x->needs_grad) return;
        x->ensure_grad();
        T g = np->grad.v[0];
        for (auto& gv : x->grad.v) gv += g;
    };
    return n;
}

template <class T>
Var<T> mean_all(const Var<T>& x) {
    return scale(sum_all(x), T(1) / T(x->val.size()));
}

// ---------------------------------------------------------------------------
// convolution (im2col + GEMM)

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct ConvSpec {
    int stride = 1, pad = 0, dil = 1;
};

namespace detail {

template <class T>
void im2col(const Tensor<T>& x, int sample, int kh, int kw, const ConvSpec<T>& s, int Ho, int Wo,
            T* col) {
    const int C = x.c, H = x.h, W = x.w;
    const int P = Ho * Wo;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                T* dst = col + (size_t(c) * kh * kw + size_t(ky) * kw + kx) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * s.stride - s.pad + ky * s.dil;
                    if (iy < 0 || iy >= H) {
                        std::fill_n(dst + size_t(oy) * Wo, Wo, T(0));
                        continue;
                    }
                    const T* src = &x.v[((size_t(sample) * C + c) * H + iy) * W];
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * s.stride - s.pad + kx * s.dil;
                        dst[size_t(oy) * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
}

template <class T>
void col2im_add(const T* col, int sample, int C, int H, int W, int kh, int kw,
                const ConvSpec<T>& s, int Ho, int Wo, Tensor<T>& gx) {
    const int P = Ho * Wo;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const T* src = col + (size_t(c) * kh * kw + size_t(ky) * kw + kx) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * s.stride - s.pad + ky * s.dil;
                    if (iy < 0 || iy >= H) continue;
                    T* dst = &gx.v[((size_t(sample) * C + c) * H + iy) * W];
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * s.stride - s.pad + kx * s.dil;
                        if (ix >= 0 && ix < W) dst[ix] += src[size_t(oy) * Wo + ox];
                    }
                }
            }
}

} // namespace detail

// x: (N,C,H,W), w: (O,C,kh,kw), b: (1,O,1,1)
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, ConvSpec<T> spec = {}) {
    const int N = x->val.n, C = x->val.c, H = x->val.h, W = x->val.w;
    const int O = w->val.n, kh = w->val.h, kw = w->val.w;
    if (w->val.c != C) throw std::invalid_argument("conv2d: channel mismatch");
    if (b->val.c != O) throw std::invalid_argument("conv2d: bias mismatch");
    const int Ho = (H + 2 * spec.pad - spec.dil * (kh - 1) - 1) / spec.stride + 1;
    const int Wo = (W + 2 * spec.pad - spec.dil * (kw - 1) - 1) / spec.stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");
    const int K = C * kh * kw, P = Ho * Wo;

    Tensor<T> out(N, O, Ho, Wo);
    AlignedVec<T> col(size_t(K) * P);
    Eigen::Map<const MatRM<T>> Wm(w->val.v.data(), O, K);
    for (int i = 0; i < N; ++i) {
        detail::im2col(x->val, i, kh, kw, spec, Ho, Wo, col.data());
        Eigen::Map<const MatRM<T>> Cm(col.data(), K, P);
        Eigen::Map<MatRM<T>> Ym(&out.v[size_t(i) * O * P], O, P);
        Ym.noalias() = Wm * Cm;
        for (int o = 0; o < O; ++o)
            Ym.row(o).array() += b->val.v[size_t(o)];
    }

    auto n = detail::make_op(std::move(out), {x, w, b});
    Node<T>* np = n.get();
    n->backprop = [np, x, w, b, spec, N, C, H, W, O, kh, kw, Ho, Wo, K, P] {
        AlignedVec<T> col(size_t(K) * P);
        Eigen::Map<const MatRM<T>> Wm(w->val.v.data(), O, K);
        if (w->needs_grad) w->ensure_grad();
        if (b->needs_grad) b->ensure_grad();
        if (x->needs_grad) x->ensure_grad();
        AlignedVec<T> dcol(x->needs_grad ? size_t(K) * P : 0);
        for (int i = 0; i < N; ++i) {
            Eigen::Map<const MatRM<T>> Gm(&np->grad.v[size_t(i) * O * P], O, P);
            if (w->needs_grad || b->needs_grad) {
                if (w->needs_grad) {
                    detail::im2col(x->val, i, kh, kw, spec, Ho, Wo, col.data());
                    Eigen::Map<const MatRM<T>> Cm(col.data(), K, P);
                    Eigen::Map<MatRM<T>> dWm(w->grad.v.data(), O, K);
                    dWm.noalias() += Gm * Cm.transpose();
                }
                if (b->needs_grad)
                    for (int o = 0; o < O; ++o) b->grad.v[size_t(o)] += Gm.row(o).sum();
            }
            if (x->needs_grad) {
                Eigen::Map<MatRM<T>> dCm(dcol.data(), K, P);
                dCm.noalias() = Wm.transpose() * Gm;
                detail::col2im_add(dcol.data(), i, C, H, W, kh, kw, spec, Ho, Wo, x->grad);
            }
        }
    };
    return n;
}

// ---------------------------------------------------------------------------
// unitary 2-D DFT as channel-doubling real ops (global spectral branch)

namespace detail {

template <class T>
const Eigen::Matrix<std::complex<T>, Eigen::Dynamic, Eigen::Dynamic>& dft_matrix(int n) {
    static std::map<int, Eigen::Matrix<std::complex<T>, Eigen::Dynamic, Eigen::Dynamic>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        Eigen::Matrix<std::complex<T>, Eigen::Dynamic, Eigen::Dynamic> F(n, n);
        const T norm = T(1) / std::sqrt(T(n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double ang = -2.0 * M_PI * double(i) * double(j) / double(n);
                F(i, j) = std::complex<T>(T(std::cos(ang)) * norm, T(std::sin(ang)) * norm);
            }
        it = cache.emplace(n, std::move(F)).first;
    }
    return it->second;
}

} // namespace detail

// (N,C,H,W) -> (N,2C,H,W): channels [0,C) real part, [C,2C) imaginary part of
// the unitary 2-D DFT per channel.
template <class T>
Var<T> dft2(const Var<T>& x) {
    using CMat = Eigen::Matrix<std::complex<T>, Eigen::Dynamic, Eigen::Dynamic>;
    const int N = x->val.n, C = x->val.c, H = x->val.h, W = x->val.w;
    const auto& Fh = detail::dft_matrix<T>(H);
    const auto& Fw = detail::dft_matrix<T>(W);
    Tensor<T> out(N, 2 * C, H, W);
    CMat X(H, W), Y(H, W);
    for (int i = 0; i < N; ++i)
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) X(y, xx) = x->val.at(i, c, y, xx);
            Y = Fh * X * Fw;
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    out.at(i, c, y, xx) = Y(y, xx).real();
                    out.at(i, C + c, y, xx) = Y(y, xx).imag();
                }
        }
    auto n = detail::make_op(std::move(out), {x});
    Node<T>* np = n.get();
    n->backprop = [np, x, N, C, H, W] {
        if (!x->needs_grad) return;
        x->ensure_grad();
        const auto& Fh = detail::dft_matrix<T>(H);
        const auto& Fw = detail::dft_matrix<T>(W);
        CMat G(H, W), Z(H, W);
        for (int i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c) {
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx)
                        G(y, xx) = std::complex<T>(np->grad.at(i, c, y, xx),
                                                   -np->grad.at(i, C + c, y, xx));
                Z = Fh * G * Fw; // adjoint of the real-linear forward map
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) x->grad.at(i, c, y, xx) += Z(y, xx).real();
            }
    };
    return n;
}

// (N,2C,H,W) -> (N,C,H,W): real part of the unitary inverse DFT of re+i*im.
template <class T>
Var<T> idft2(const Var<T>& x) {
    using CMat = Eigen::Matrix<std::complex<T>, Eigen::Dynamic, Eigen::Dynamic>;
    if (x->val.c % 2 != 0) throw std::invalid_argument("idft2: needs re/im channel pairs");
    const int N = x->val.n, C = x->val.c / 2, H = x->val.h, W = x->val.w;
    const auto& Fh = detail::dft_matrix<T>(H);
    const auto& Fw = detail::dft_matrix<T>(W);
    Tensor<T> out(N, C, H, W);
    CMat X(H, W), Y(H, W);
    for (int i = 0; i < N; ++i)
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                    X(y, xx) = std::complex<T>(x->val.at(i, c, y, xx), x->val.at(i, C + c, y, xx));
            Y = Fh.adjoint() * X * Fw.adjoint();
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) out.at(i, c, y, xx) = Y(y, xx).real();
        }
    auto n = detail::make_op(std::move(out), {x});
    Node<T>* np = n.get();
    n->backprop = [np, x, N, C, H, W] {
        if (!x->needs_grad) return;
        x->ensure_grad();
        const auto& Fh = detail::dft_matrix<T>(H);
        const auto& Fw = detail::dft_matrix<T>(W);
        CMat G(H, W), Z(H, W);
        for (int i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c) {
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) G(y, xx) = np->grad.at(i, c, y, xx);
                Z = Fh.conjugate() * G * Fw.conjugate();
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) {
                        x->grad.at(i, c, y, xx) += Z(y, xx).real();
                        x->grad.at(i, C + c, y, xx) += -Z(y, xx).imag();
                    }
            }
    };
    return n;
}

} // namespace tdi::nn
