#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tdi::nn {

// 64-byte-aligned storage: keeps vectorized loop peeling (and therefore FP
// summation order) identical across allocations, which bit-reproducibility
// tests rely on.
template <class T>
struct AlignedAlloc {
    using value_type = T;
    static constexpr std::align_val_t align{64};

    AlignedAlloc() = default;
    template <class U>
    AlignedAlloc(const AlignedAlloc<U>&) {}

    T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), align)); }
    void deallocate(T* p, size_t) { ::operator delete(p, align); }
    bool operator==(const AlignedAlloc&) const { return true; }
};

template <class T>
using AlignedVec = std::vector<T, AlignedAlloc<T>>;

// Dense NCHW tensor. Scalars are (1,1,1,1).
template <class T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    AlignedVec<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), v(size_t(n_) * c_ * h_ * w_, fill) {}

    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    T& at(int i, int j, int y, int x) {
        return v[((size_t(i) * c + j) * h + y) * w + x];
    }
    T at(int i, int j, int y, int x) const {
        return v[((size_t(i) * c + j) * h + y) * w + x];
    }

    static Tensor scalar(T value) {
        Tensor t(1, 1, 1, 1);
        t.v[0] = value;
        return t;
    }
};

} // namespace tdi::nn
