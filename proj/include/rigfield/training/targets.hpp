#pragma once

#include <memory>
#include <optional>

#include "rigfield/articulation/bvh.hpp"
#include "rigfield/body/body_model.hpp"
#include "rigfield/core/parallel.hpp"
#include "rigfield/io/image.hpp"
#include "rigfield/render/camera.hpp"

namespace rigfield {

// Ground-truth pictures of a triangle mesh: one ray per (strided) pixel center,
// flat unlit albedo, composited over a background.
struct RasterTarget {
    Image rgb;       // over the background
    Image coverage;  // 1 where the ray hits the mesh inside [near, far]
    std::vector<int> triangle;  // hit triangle or -1
};

class MeshRaster {
public:
    // Per-face colors if the rig carries them (and `textured`), otherwise `albedo` everywhere.
    MeshRaster(TriMesh mesh, std::vector<Vec3f> face_colors, Vec3f albedo)
        : mesh_(std::make_shared<TriMesh>(std::move(mesh))), colors_(std::move(face_colors)), albedo_(albedo) {
        bvh_ = MeshBvh(*mesh_);
        require(colors_.empty() || colors_.size() == mesh_->faces.size(), "MeshRaster: one color per face expected");
    }

    static MeshRaster of(const RiggedBodyModel& m, bool textured, Vec3f albedo = Vec3f::Constant(0.7f)) {
        return MeshRaster({m.vertices, m.faces}, textured ? m.face_colors : std::vector<Vec3f>{}, albedo);
    }

    const TriMesh& mesh() const { return *mesh_; }
    const MeshBvh& bvh() const { return bvh_; }

    Vec3f color_of(int triangle) const {
        return colors_.empty() ? albedo_ : colors_[static_cast<std::size_t>(triangle)];
    }

    std::optional<RayHit> hit(const Camera& cam, int row, int col, int stride = 1) const {
        const Vec3d o = cam.position();
        const Vec3d d = cam.direction_at(col * stride + 0.5, row * stride + 0.5);
        auto h = bvh_.raycast(o, d, cam.far);
        if (h && h->t < cam.near) return std::nullopt;
        return h;
    }

    RasterTarget render(const Camera& cam, const Image& background, int stride = 1, unsigned threads = 0) const {
        const int w = cam.strided_width(stride), h = cam.strided_height(stride);
        require(background.width == w && background.height == h && background.channels == 3,
                "MeshRaster: background must match the strided image size");
        RasterTarget t{Image(w, h, 3), Image(w, h, 1), std::vector<int>(static_cast<std::size_t>(w) * h, -1)};
        parallel_for(0, static_cast<std::size_t>(h), threads, [&](std::size_t r) {
            const int row = static_cast<int>(r);
            for (int col = 0; col < w; ++col) {
                const auto x = hit(cam, row, col, stride);
                if (x) {
                    const Vec3f c = color_of(x->triangle);
                    t.rgb.set_rgb(row, col, {c.x(), c.y(), c.z()});
                    t.coverage.at(row, col) = 1.f;
                    t.triangle[static_cast<std::size_t>(row) * w + col] = x->triangle;
                } else {
                    t.rgb.set_rgb(row, col, background.rgb(row, col));
                }
            }
        });
        return t;
    }

private:
    std::shared_ptr<TriMesh> mesh_;
    MeshBvh bvh_;
    std::vector<Vec3f> colors_;
    Vec3f albedo_;
};

}  // namespace rigfield
