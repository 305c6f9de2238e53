#pragma once

#include <algorithm>
#include <span>

#include "rigfield/core/types.hpp"
#include "rigfield/field/avatar_field.hpp"

namespace rigfield {

// Closed-form signed distance fields with constant color. They satisfy the
// same rendering interface as AvatarField and serve as test oracles.

struct SphereField {
    Vec3d center = Vec3d::Zero();
    double radius = 1.0;
    Vec3f albedo = Vec3f(1.f, 0.f, 0.f);
    double s = 64.0;
    double scale = 1.0;  // multiplies the distance; scale != 1 breaks the unit-gradient property

    double sharpness() const { return s; }

    SdfSample<double> sdf(const Vec3d& p) const {
        const Vec3d d = p - center;
        const double n = d.norm();
        return {scale * (n - radius), n > 0 ? Vec3d(scale * d / n) : Vec3d(scale, 0, 0)};
    }

    void evaluate(std::span<const Vec3f> pts, std::span<const Vec3f>, std::span<float> sdf_out,
                  std::span<Vec3f> rgb_out) const {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            sdf_out[i] = static_cast<float>(sdf(pts[i].cast<double>()).value);
            rgb_out[i] = albedo;
        }
    }
};

// Segment [a, b] swept by a ball of `radius`.
struct CapsuleField {
    Vec3d a = Vec3d(0, -0.5, 0);
    Vec3d b = Vec3d(0, 0.5, 0);
    double radius = 0.25;
    Vec3f albedo = Vec3f(0.7f, 0.7f, 0.7f);
    double s = 64.0;

    double sharpness() const { return s; }

    SdfSample<double> sdf(const Vec3d& p) const {
        const Vec3d ab = b - a;
        const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        const Vec3d d = p - (a + t * ab);
        const double n = d.norm();
        return {n - radius, n > 0 ? Vec3d(d / n) : Vec3d(1, 0, 0)};
    }

    void evaluate(std::span<const Vec3f> pts, std::span<const Vec3f>, std::span<float> sdf_out,
                  std::span<Vec3f> rgb_out) const {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            sdf_out[i] = static_cast<float>(sdf(pts[i].cast<double>()).value);
            rgb_out[i] = albedo;
        }
    }
};

// f = +value everywhere: renders nothing.
struct EmptyField {
    double value = 1.0;
    double s = 64.0;

    double sharpness() const { return s; }
    SdfSample<double> sdf(const Vec3d&) const { return {value, Vec3d::Zero()}; }
    void evaluate(std::span<const Vec3f> pts, std::span<const Vec3f>, std::span<float> sdf_out,
                  std::span<Vec3f> rgb_out) const {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            sdf_out[i] = static_cast<float>(value);
            rgb_out[i] = Vec3f::Zero();
        }
    }
};

}  // namespace rigfield
