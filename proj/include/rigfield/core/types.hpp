#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rigfield {

using Vec3f = Eigen::Vector3f;
using Vec3d = Eigen::Vector3d;
using Mat3d = Eigen::Matrix3d;
using Mat4d = Eigen::Matrix4d;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Buffers that get mapped as Eigen matrices. Eigen's vectorized reductions pick
// their summation order from the base address, so an aligned base keeps results
// bit-identical between runs.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

struct Rgb {
    float r = 0.f, g = 0.f, b = 0.f;

    float& operator[](int c) { return c == 0 ? r : (c == 1 ? g : b); }
    float operator[](int c) const { return c == 0 ? r : (c == 1 ? g : b); }
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Aabb {
    Vec3f lo = Vec3f::Constant(-1.f);
    Vec3f hi = Vec3f::Constant(1.f);

    Vec3f center() const { return 0.5f * (lo + hi); }
    Vec3f extent() const { return hi - lo; }
    bool contains(const Vec3f& p, float eps = 0.f) const {
        return (p.array() >= lo.array() - eps).all() && (p.array() <= hi.array() + eps).all();
    }
    bool contains(const Aabb& other) const {
        return (other.lo.array() >= lo.array()).all() && (other.hi.array() <= hi.array()).all();
    }
    Vec3f clamp(const Vec3f& p) const { return p.cwiseMax(lo).cwiseMin(hi); }

    static Aabb empty() {
        return {Vec3f::Constant(std::numeric_limits<float>::max()),
                Vec3f::Constant(-std::numeric_limits<float>::max())};
    }
    void extend(const Vec3f& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
};

}  // namespace rigfield
