#pragma once

#include <cstddef>
#include <new>
#include <string>
#include <vector>

namespace cpga::nn {

/// 64-byte aligned storage. Vectorised reductions peel differently depending
/// on where a buffer starts, so a fixed alignment keeps float results
/// bit-identical from run to run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// NCHW extent. Every tensor in the network is four-dimensional; parameters
/// reuse the same layout (conv weights are Cout x Cin x k x k).
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const { return static_cast<std::size_t>(n) * c * h * w; }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

template <typename T>
struct Tensor {
    Shape shape;
    AlignedVector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T{}) : shape(s), data(s.numel(), fill) {}

    std::size_t numel() const { return data.size(); }
    bool empty() const { return data.empty(); }

    T* plane(int n, int c) { return data.data() + (static_cast<std::size_t>(n) * shape.c + c) * shape.plane(); }
    const T* plane(int n, int c) const {
        return data.data() + (static_cast<std::size_t>(n) * shape.c + c) * shape.plane();
    }
    T& at(int n, int c, int y, int x) { return plane(n, c)[static_cast<std::size_t>(y) * shape.w + x]; }
    const T& at(int n, int c, int y, int x) const {
        return plane(n, c)[static_cast<std::size_t>(y) * shape.w + x];
    }

    bool operator==(const Tensor&) const = default;
};

/// Converts element type (used to move float checkpoints into double probes).
template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
    Tensor<To> out(src.shape);
    for (std::size_t i = 0; i < src.data.size(); ++i) out.data[i] = static_cast<To>(src.data[i]);
    return out;
}

}  // namespace cpga::nn
