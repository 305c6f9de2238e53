#pragma once

#include <memory>
#include <span>
#include <vector>

#include "rigfield/articulation/bvh.hpp"
#include "rigfield/body/body_model.hpp"
#include "rigfield/render/renderer.hpp"

namespace rigfield {

struct MaskSettings {
    bool enabled = true;
    double delta = -1;          // <= 0: 0.05 x canonical body height
    bool smooth = false;        // linear ramp over [delta, 1.2 delta] instead of a hard cut
    double delta_fraction = 0.05;
};

// eta: 1 inside the shell (inclusive), 0 outside, optional linear ramp.
inline double density_mask(double distance, double delta, bool smooth = false) {
    require(delta > 0, "density_mask: delta must be positive");
    if (distance <= delta) return 1.0;
    if (!smooth) return 0.0;
    const double hi = 1.2 * delta;
    return distance >= hi ? 0.0 : (hi - distance) / (hi - delta);
}

struct WarpResult {
    Vec3d canonical = Vec3d::Zero();
    Mat4d inverse = Mat4d::Identity();  // blended T^{-1}
    SurfaceCorrespondence correspondence;
};

// Target configuration prepared for warping: per-vertex transforms, deformed
// mesh and its BVH. Immutable after construction.
class ArticulatedTarget {
public:
    ArticulatedTarget(const RiggedBodyModel& model, const BodyConfiguration& target, const MaskSettings& mask = {})
        : transforms_(vertex_transforms(model, target)), mesh_(std::make_shared<TriMesh>()), mask_(mask) {
        mesh_->vertices = transforms_.posed_vertices;
        mesh_->faces = model.faces;
        bvh_ = MeshBvh(*mesh_);
        delta_ = mask.delta > 0 ? mask.delta : mask.delta_fraction * model.height();
        require(delta_ > 0, "articulation: mask threshold must be positive");
    }

    const VertexTransformSet& transforms() const { return transforms_; }
    const TriMesh& mesh() const { return *mesh_; }
    const MeshBvh& bvh() const { return bvh_; }
    double delta() const { return delta_; }
    const MaskSettings& mask_settings() const { return mask_; }

    SurfaceCorrespondence nearest_surface(const Vec3d& p) const { return bvh_.nearest(p); }

    // Gamma: blend the nearest triangle's per-vertex inverse transforms by barycentrics.
    WarpResult warp_to_canonical(const Vec3d& p) const {
        WarpResult w;
        w.correspondence = bvh_.nearest(p);
        const Face& f = mesh_->faces[static_cast<std::size_t>(w.correspondence.triangle)];
        w.inverse = Mat4d::Identity();
        for (int k = 0; k < 3; ++k) {
            const double b = w.correspondence.bary[static_cast<std::size_t>(k)];
            if (b != 0.0) w.inverse += b * (transforms_.inverse[static_cast<std::size_t>(f[static_cast<std::size_t>(k)])] - Mat4d::Identity());
        }
        if (!(std::abs(w.inverse.topLeftCorner<3, 3>().determinant()) >= kDegenerateDeterminant))
            throw DegeneracyError("warp_to_canonical: blended inverse transform is singular near triangle " +
                                  std::to_string(w.correspondence.triangle));
        w.canonical = apply(w.inverse, p);
        return w;
    }

    double mask(double distance) const {
        return mask_.enabled ? density_mask(distance, delta_, mask_.smooth) : 1.0;
    }

private:
    VertexTransformSet transforms_;
    std::shared_ptr<TriMesh> mesh_;
    MeshBvh bvh_;
    MaskSettings mask_;
    double delta_ = 0;
};

// Canonical field seen through the warp: samples are mapped by Gamma, the
// mask eta scales their density (alpha) contribution.
template <RenderField F>
class ArticulatedField {
public:
    ArticulatedField(const F& field, const ArticulatedTarget& target) : field_(field), target_(target) {}

    double sharpness() const { return field_.sharpness(); }

    void evaluate_masked(std::span<const Vec3f> pts, std::span<const Vec3f> dirs, std::span<float> sdf,
                         std::span<Vec3f> rgb, std::span<float> mask) const {
        std::vector<Vec3f> p(pts.begin(), pts.end()), d(dirs.begin(), dirs.end());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto w = target_.warp_to_canonical(pts[i].cast<double>());
            mask[i] = static_cast<float>(target_.mask(w.correspondence.distance));
            if (w.inverse == Mat4d::Identity()) continue;
            p[i] = w.canonical.cast<float>();
            d[i] = (w.inverse.topLeftCorner<3, 3>() * dirs[i].cast<double>()).normalized().cast<float>();
        }
        field_.evaluate(p, d, sdf, rgb);
    }

    void evaluate(std::span<const Vec3f> pts, std::span<const Vec3f> dirs, std::span<float> sdf,
                  std::span<Vec3f> rgb) const {
        std::vector<float> mask(pts.size());
        evaluate_masked(pts, dirs, sdf, rgb, mask);
    }

private:
    const F& field_;
    const ArticulatedTarget& target_;
};

template <RenderField F>
RenderOutput render_articulated(const F& field, const ArticulatedTarget& target, const Camera& cam,
                                const RenderSettings& settings, const Image& background) {
    return render_image(ArticulatedField<F>(field, target), cam, settings, background);
}

template <RenderField F>
RenderOutput render_articulated(const F& field, const ArticulatedTarget& target, const Camera& cam,
                                const RenderSettings& settings, const Rgb& background) {
    return render_image(ArticulatedField<F>(field, target), cam, settings, background);
}

}  // namespace rigfield
