#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "rigfield/articulation/bvh.hpp"
#include "rigfield/core/errors.hpp"
#include "rigfield/core/types.hpp"
#include "rigfield/field/avatar_field.hpp"
#include "rigfield/io/image.hpp"

namespace rigfield {

struct LossWeights {
    double silhouette = 1.0;
    double eikonal = 0.1;
    double mock = -1.0;  // <= 0: 1 / (oracle pixels)

    void validate() const {
        require(silhouette >= 0 && eikonal >= 0, "loss weights must be nonnegative");
    }
};

// (1/HW) sum |O_0 - O_t|. The template map is a constant.
inline double silhouette_loss(const Image& template_opacity, const Image& current_opacity) {
    require(template_opacity.same_shape(current_opacity) && current_opacity.channels == 1,
            "silhouette_loss: opacity maps must be equally sized one-channel images");
    double acc = 0;
    for (std::size_t i = 0; i < current_opacity.data.size(); ++i)
        acc += std::abs(double(template_opacity.data[i]) - double(current_opacity.data[i]));
    return acc / static_cast<double>(current_opacity.data.size());
}

// d silhouette_loss / d O_t (sign(O_t - O_0) / HW, zero on ties).
inline Image silhouette_gradient(const Image& template_opacity, const Image& current_opacity, double weight = 1.0) {
    require(template_opacity.same_shape(current_opacity), "silhouette_gradient: shape mismatch");
    Image g(current_opacity.width, current_opacity.height, 1);
    const double k = weight / static_cast<double>(current_opacity.data.size());
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        const float d = current_opacity.data[i] - template_opacity.data[i];
        g.data[i] = static_cast<float>(d > 0 ? k : (d < 0 ? -k : 0.0));
    }
    return g;
}

// mean over points of (|grad f| - 1)^2
template <typename F>
double eikonal_loss(const F& field, std::span<const Vec3d> points) {
    require(!points.empty(), "eikonal_loss: no sample points");
    double acc = 0;
    if constexpr (requires { typename F::SdfBatch; }) {
        using V = typename F::Vec3;
        std::vector<V> pts(points.size());
        for (std::size_t i = 0; i < points.size(); ++i)
            pts[i] = field.domain().clamp(points[i].cast<float>()).template cast<typename V::Scalar>();
        typename F::SdfBatch b;
        field.sdf_forward(pts, b);
        acc = static_cast<double>(field.eikonal(b, 0, {}));
    } else {
        for (const auto& p : points) {
            const double n = field.sdf(p).gradient.norm();
            acc += (n - 1) * (n - 1);
        }
    }
    return acc / static_cast<double>(points.size());
}

// Uniform points in `box` plus surface points of `mesh` pushed off by N(0, sigma).
inline std::vector<Vec3d> sample_eikonal_points(const Aabb& box, const TriMesh* mesh, int uniform, int near_surface,
                                                double sigma, std::mt19937_64& rng) {
    std::vector<Vec3d> pts;
    pts.reserve(static_cast<std::size_t>(uniform + near_surface));
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < uniform; ++i) {
        Vec3d p;
        for (int a = 0; a < 3; ++a) p[a] = box.lo[a] + u(rng) * (box.hi[a] - box.lo[a]);
        pts.push_back(p);
    }
    if (mesh && !mesh->faces.empty()) {
        std::uniform_int_distribution<std::size_t> tri(0, mesh->faces.size() - 1);
        std::normal_distribution<double> g(0, sigma);
        for (int i = 0; i < near_surface; ++i) {
            const int f = static_cast<int>(tri(rng));
            double b1 = u(rng), b2 = u(rng);
            if (b1 + b2 > 1) {
                b1 = 1 - b1;
                b2 = 1 - b2;
            }
            const Vec3d p = (1 - b1 - b2) * mesh->corner(f, 0) + b1 * mesh->corner(f, 1) + b2 * mesh->corner(f, 2);
            pts.push_back(p + Vec3d(g(rng), g(rng), g(rng)));
        }
    }
    return pts;
}

}  // namespace rigfield
