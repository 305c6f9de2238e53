#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Geometry>

#include "rigfield/body/body_model.hpp"
#include "rigfield/core/errors.hpp"
#include "rigfield/core/types.hpp"

namespace rigfield {

struct TriMesh {
    std::vector<Vec3d> vertices;
    std::vector<Face> faces;

    const Vec3d& corner(int f, int k) const {
        return vertices[static_cast<std::size_t>(faces[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)])];
    }
};

struct ClosestPoint {
    Vec3d point;
    std::array<double, 3> bary;
};

// Closest point on triangle abc to p, with barycentrics (Voronoi-region walk).
inline ClosestPoint closest_on_triangle(const Vec3d& p, const Vec3d& a, const Vec3d& b, const Vec3d& c) {
    const Vec3d ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return {a, {1, 0, 0}};
    const Vec3d bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return {b, {0, 1, 0}};
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        const double v = d1 / (d1 - d3);
        return {a + v * ab, {1 - v, v, 0}};
    }
    const Vec3d cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return {c, {0, 0, 1}};
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
        const double w = d2 / (d2 - d6);
        return {a + w * ac, {1 - w, 0, w}};
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return {b + w * (c - b), {0, 1 - w, w}};
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return {a + ab * v + ac * w, {1 - v - w, v, w}};
}

struct SurfaceCorrespondence {
    int triangle = -1;
    std::array<double, 3> bary{};
    double distance = 0;
    Vec3d point = Vec3d::Zero();
};

struct RayHit {
    double t = 0;
    int triangle = -1;
    std::array<double, 3> bary{};
};

// Moller-Trumbore; returns t > tmin of the hit or nothing.
inline std::optional<RayHit> intersect_triangle(const Vec3d& o, const Vec3d& d, const Vec3d& a, const Vec3d& b,
                                                const Vec3d& c, double tmin = 1e-9) {
    const Vec3d e1 = b - a, e2 = c - a, pv = d.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3d tv = o - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0 || u > 1) return std::nullopt;
    const Vec3d qv = tv.cross(e1);
    const double v = d.dot(qv) * inv;
    if (v < 0 || u + v > 1) return std::nullopt;
    const double t = e2.dot(qv) * inv;
    if (t <= tmin) return std::nullopt;
    return RayHit{t, -1, {1 - u - v, u, v}};
}

class MeshBvh {
public:
    struct Node {
        Eigen::AlignedBox3d box;
        int left = -1, right = -1;  // children, or -1 for a leaf
        int first = 0, count = 0;   // range in order_ for leaves
    };

    MeshBvh() = default;
    MeshBvh(const TriMesh& mesh, int leaf_size = 4) : mesh_(&mesh) {
        require(!mesh.faces.empty(), "MeshBvh: empty mesh");
        require(leaf_size >= 1, "MeshBvh: leaf size must be positive");
        order_.resize(mesh.faces.size());
        std::iota(order_.begin(), order_.end(), 0);
        centroids_.resize(mesh.faces.size());
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            const int fi = static_cast<int>(f);
            centroids_[f] = (mesh.corner(fi, 0) + mesh.corner(fi, 1) + mesh.corner(fi, 2)) / 3.0;
        }
        nodes_.reserve(2 * mesh.faces.size() / static_cast<std::size_t>(leaf_size) + 1);
        build(0, static_cast<int>(order_.size()), leaf_size);
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<int>& order() const { return order_; }
    const TriMesh& mesh() const { return *mesh_; }

    // Exact nearest point; ties on distance go to the lowest triangle index.
    SurfaceCorrespondence nearest(const Vec3d& p) const {
        double best_d2 = std::numeric_limits<double>::infinity();
        int best_tri = std::numeric_limits<int>::max();
        ClosestPoint best_cp{};
        int stack[128];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            const Node& n = nodes_[static_cast<std::size_t>(stack[--top])];
            if (n.box.squaredExteriorDistance(p) > best_d2) continue;
            if (n.left < 0) {
                for (int i = n.first; i < n.first + n.count; ++i) {
                    const int f = order_[static_cast<std::size_t>(i)];
                    const auto cp = closest_on_triangle(p, mesh_->corner(f, 0), mesh_->corner(f, 1), mesh_->corner(f, 2));
                    const double d2 = (cp.point - p).squaredNorm();
                    if (d2 < best_d2 || (d2 == best_d2 && f < best_tri)) {
                        best_d2 = d2;
                        best_tri = f;
                        best_cp = cp;
                    }
                }
                continue;
            }
            // visit the nearer child first
            const Node& l = nodes_[static_cast<std::size_t>(n.left)];
            const Node& r = nodes_[static_cast<std::size_t>(n.right)];
            const bool left_first = l.box.squaredExteriorDistance(p) <= r.box.squaredExteriorDistance(p);
            stack[top++] = left_first ? n.right : n.left;
            stack[top++] = left_first ? n.left : n.right;
        }
        return {best_tri, best_cp.bary, std::sqrt(best_d2), best_cp.point};
    }

    // First intersection along the ray (ties to the lowest triangle index).
    std::optional<RayHit> raycast(const Vec3d& o, const Vec3d& d, double tmax = std::numeric_limits<double>::infinity()) const {
        std::optional<RayHit> best;
        const Vec3d inv(1.0 / d.x(), 1.0 / d.y(), 1.0 / d.z());
        int stack[128];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            const Node& n = nodes_[static_cast<std::size_t>(stack[--top])];
            const double limit = best ? best->t : tmax;
            if (!slab(n.box, o, inv, limit)) continue;
            if (n.left < 0) {
                for (int i = n.first; i < n.first + n.count; ++i) {
                    const int f = order_[static_cast<std::size_t>(i)];
                    auto h = intersect_triangle(o, d, mesh_->corner(f, 0), mesh_->corner(f, 1), mesh_->corner(f, 2));
                    if (!h || h->t > tmax) continue;
                    if (!best || h->t < best->t || (h->t == best->t && f < best->triangle)) {
                        h->triangle = f;
                        best = h;
                    }
                }
                continue;
            }
            stack[top++] = n.right;
            stack[top++] = n.left;
        }
        return best;
    }

private:
    static bool slab(const Eigen::AlignedBox3d& b, const Vec3d& o, const Vec3d& inv, double tmax) {
        double t0 = 0, t1 = tmax;
        for (int a = 0; a < 3; ++a) {
            double lo = (b.min()[a] - o[a]) * inv[a], hi = (b.max()[a] - o[a]) * inv[a];
            if (lo > hi) std::swap(lo, hi);
            if (std::isnan(lo) || std::isnan(hi)) {
                if (o[a] < b.min()[a] || o[a] > b.max()[a]) return false;
                continue;
            }
            t0 = std::max(t0, lo);
            t1 = std::min(t1, hi);
            if (t0 > t1) return false;
        }
        return true;
    }

    int build(int first, int count, int leaf_size) {
        const int index = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        Eigen::AlignedBox3d box, cbox;
        for (int i = first; i < first + count; ++i) {
            const int f = order_[static_cast<std::size_t>(i)];
            for (int k = 0; k < 3; ++k) box.extend(mesh_->corner(f, k));
            cbox.extend(centroids_[static_cast<std::size_t>(f)]);
        }
        nodes_[static_cast<std::size_t>(index)].box = box;
        if (count <= leaf_size) {
            nodes_[static_cast<std::size_t>(index)].first = first;
            nodes_[static_cast<std::size_t>(index)].count = count;
            return index;
        }
        int axis;
        cbox.sizes().maxCoeff(&axis);
        const int mid = first + count / 2;
        std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count, [&](int a, int b) {
            const double ca = centroids_[static_cast<std::size_t>(a)][axis], cb = centroids_[static_cast<std::size_t>(b)][axis];
            return ca < cb || (ca == cb && a < b);
        });
        const int l = build(first, mid - first, leaf_size);
        const int r = build(mid, first + count - mid, leaf_size);
        nodes_[static_cast<std::size_t>(index)].left = l;
        nodes_[static_cast<std::size_t>(index)].right = r;
        return index;
    }

    const TriMesh* mesh_ = nullptr;
    std::vector<Node> nodes_;
    std::vector<int> order_;
    std::vector<Vec3d> centroids_;
};

// Brute-force scan with the same tie-break; used as a reference.
inline SurfaceCorrespondence nearest_surface_scan(const Vec3d& p, const TriMesh& mesh) {
    require(!mesh.faces.empty(), "nearest_surface: empty mesh");
    SurfaceCorrespondence best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        const auto cp = closest_on_triangle(p, mesh.corner(f, 0), mesh.corner(f, 1), mesh.corner(f, 2));
        const double d2 = (cp.point - p).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = {f, cp.bary, 0, cp.point};
        }
    }
    best.distance = std::sqrt(best_d2);
    return best;
}

}  // namespace rigfield
