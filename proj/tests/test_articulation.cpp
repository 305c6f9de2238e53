#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "rigfield/articulation/articulation.hpp"
#include "rigfield/body/synthetic.hpp"
#include "rigfield/field/analytic.hpp"
#include "rigfield/field/avatar_field.hpp"

using namespace rigfield;

namespace {

TriMesh rig_mesh(const RiggedBodyModel& m) { return {m.vertices, m.faces}; }

Camera front_camera(int size) {
    return Camera::look_at(Vec3d(0, 0, 3), Vec3d::Zero(), Vec3d(0, 1, 0), size, size, 0.8, 0.5, 5.5);
}

double area(const Image& opacity) {
    double a = 0;
    for (float v : opacity.data) a += v > 0.5f;
    return a;
}

}  // namespace

TEST(ClosestPoint, InteriorProjectionAndVertex) {
    const Vec3d a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
    const auto cp = closest_on_triangle(Vec3d(0.2, 0.3, 0.7), a, b, c);
    EXPECT_NEAR(cp.bary[0], 0.5, 1e-12);
    EXPECT_NEAR(cp.bary[1], 0.2, 1e-12);
    EXPECT_NEAR(cp.bary[2], 0.3, 1e-12);
    EXPECT_LT((cp.point - Vec3d(0.2, 0.3, 0)).norm(), 1e-12);
    const auto at_b = closest_on_triangle(b, a, b, c);
    EXPECT_EQ(at_b.bary[1], 1.0);
    EXPECT_EQ(at_b.point, b);
}

TEST(MeshBvh, StructureInvariants) {
    const auto m = synthetic::humanoid(12, 4);
    const TriMesh mesh = rig_mesh(m);
    const MeshBvh bvh(mesh);
    std::vector<int> seen(mesh.faces.size(), 0);
    for (const auto& n : bvh.nodes()) {
        if (n.left < 0) {
            for (int i = n.first; i < n.first + n.count; ++i) ++seen[bvh.order()[i]];
        } else {
            EXPECT_TRUE(n.box.contains(bvh.nodes()[n.left].box));
            EXPECT_TRUE(n.box.contains(bvh.nodes()[n.right].box));
        }
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    EXPECT_THROW(MeshBvh(TriMesh{}), PreconditionError);
}

TEST(MeshBvh, NearestMatchesExhaustiveScan) {
    const auto m = synthetic::humanoid(12, 4);
    const TriMesh mesh = rig_mesh(m);
    const MeshBvh bvh(mesh);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.1, 1.1);
    for (int i = 0; i < 1000; ++i) {
        const Vec3d p(u(rng), u(rng), u(rng));
        const auto a = bvh.nearest(p), b = nearest_surface_scan(p, mesh);
        EXPECT_NEAR(a.distance, b.distance, 1e-9);
        EXPECT_EQ(a.triangle, b.triangle);
        EXPECT_NEAR(a.bary[0] + a.bary[1] + a.bary[2], 1.0, 1e-6);
        for (double x : a.bary) EXPECT_GE(x, 0.0);
    }
}

TEST(MeshBvh, VertexQueryHasZeroDistance) {
    const auto m = synthetic::chain3();
    const TriMesh mesh = rig_mesh(m);
    const MeshBvh bvh(mesh);
    for (int v = 0; v < m.vertex_count(); v += 7) {
        const auto c = bvh.nearest(m.vertices[v]);
        EXPECT_EQ(c.distance, 0.0);
        const auto& f = mesh.faces[c.triangle];
        for (int k = 0; k < 3; ++k) EXPECT_EQ(c.bary[k], f[k] == v ? 1.0 : 0.0);
    }
}

TEST(MeshBvh, RaycastMatchesBruteForce) {
    const auto m = synthetic::humanoid(12, 4);
    const TriMesh mesh = rig_mesh(m);
    const MeshBvh bvh(mesh);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1, 1);
    int hits = 0;
    for (int i = 0; i < 500; ++i) {
        const Vec3d o(u(rng), u(rng), 3);
        const Vec3d d = (Vec3d(0.3 * u(rng), 0.3 * u(rng), 0) - o).normalized();
        const auto h = bvh.raycast(o, d);
        double best = 1e300;
        int tri = -1;
        for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
            const auto x = intersect_triangle(o, d, mesh.corner(f, 0), mesh.corner(f, 1), mesh.corner(f, 2));
            if (x && x->t < best) {
                best = x->t;
                tri = f;
            }
        }
        ASSERT_EQ(h.has_value(), tri >= 0);
        if (h) {
            EXPECT_EQ(h->triangle, tri);
            EXPECT_DOUBLE_EQ(h->t, best);
            ++hits;
        }
    }
    EXPECT_GT(hits, 50);
}

TEST(DensityMask, Boundaries) {
    EXPECT_EQ(density_mask(0, 0.1), 1.0);
    EXPECT_EQ(density_mask(0.1, 0.1), 1.0);
    EXPECT_EQ(density_mask(0.2, 0.1), 0.0);
    EXPECT_NEAR(density_mask(0.11, 0.1, true), 0.5, 1e-12);
    EXPECT_EQ(density_mask(0.13, 0.1, true), 0.0);
    double prev = 1;
    for (double d = 0; d < 0.3; d += 0.001) {
        EXPECT_LE(density_mask(d, 0.1, true), prev);
        prev = density_mask(d, 0.1, true);
    }
    EXPECT_THROW(density_mask(0, 0), PreconditionError);
}

TEST(Warp, CanonicalTargetIsExactIdentity) {
    const auto m = synthetic::humanoid(12, 4);
    const ArticulatedTarget target(m, BodyConfiguration::canonical(m));
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 300; ++i) {
        const Vec3d p(u(rng), u(rng), u(rng));
        EXPECT_EQ(target.warp_to_canonical(p).canonical, p);
    }
}

TEST(Warp, DeformedVerticesRoundTrip) {
    const auto m = synthetic::humanoid(12, 4);
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    BodyConfiguration c = BodyConfiguration::canonical(m);
    for (auto& a : c.theta) a = Vec3d(u(rng), u(rng), u(rng));
    c.beta << 0.4, -0.3;
    c.root_translation = Vec3d(0.05, -0.02, 0.1);
    const ArticulatedTarget target(m, c);
    double worst = 0;
    for (int v = 0; v < m.vertex_count(); ++v)
        worst = std::max(worst, (target.warp_to_canonical(target.transforms().posed_vertices[v]).canonical - m.vertices[v]).norm());
    EXPECT_LT(worst, 1e-5);
}

TEST(Warp, RigidMotionIsExactNearSurface) {
    const auto m = synthetic::single_capsule();
    BodyConfiguration c = BodyConfiguration::canonical(m);
    c.theta[0] = Vec3d(0.3, -0.4, 1.1);
    const ArticulatedTarget target(m, c);
    const Mat3d R = rodrigues(c.theta[0]);
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(m.faces.size()) - 1);
    for (int i = 0; i < 200; ++i) {
        const int f = pick(rng);
        const Vec3d a = target.mesh().corner(f, 0), b = target.mesh().corner(f, 1), cc = target.mesh().corner(f, 2);
        const Vec3d n = (b - a).cross(cc - a).normalized();
        const Vec3d p = (a + b + cc) / 3 + 0.02 * n;
        const Vec3d want = R.transpose() * p;
        EXPECT_LT((target.warp_to_canonical(p).canonical - want).norm(), 1e-9);
        // the canonical face point offset along the canonical normal
        const Vec3d ca = m.vertices[m.faces[f][0]], cb = m.vertices[m.faces[f][1]], ccc = m.vertices[m.faces[f][2]];
        const Vec3d cn = (cb - ca).cross(ccc - ca).normalized();
        EXPECT_LT((target.warp_to_canonical(p).canonical - ((ca + cb + ccc) / 3 + 0.02 * cn)).norm(), 0.01);
    }
}

TEST(RenderArticulated, CanonicalMatchesPlainRender) {
    const auto m = synthetic::humanoid(12, 4);
    FieldConfig fc;
    fc.sdf_hidden = 16;
    fc.color_hidden = 16;
    fc.encoding.num_levels = 4;
    fc.encoding.log2_table_size = 12;
    AvatarField field(fc);
    MaskSettings ms;
    ms.enabled = false;
    const ArticulatedTarget target(m, BodyConfiguration::canonical(m), ms);
    RenderSettings rs;
    rs.samples = 32;
    const Camera cam = front_camera(20);
    const auto plain = render_image(field, cam, rs, Rgb{1, 1, 1});
    const auto art = render_articulated(field, target, cam, rs, Rgb{1, 1, 1});
    EXPECT_EQ(plain.rgb.data, art.rgb.data);
    EXPECT_EQ(plain.opacity.data, art.opacity.data);
}

TEST(RenderArticulated, QuarterTurnCapsuleSilhouette) {
    const auto m = synthetic::single_capsule();
    const CapsuleField canonical{Vec3d(0, -0.45, 0), Vec3d(0, 0.45, 0), 0.2};
    BodyConfiguration c = BodyConfiguration::canonical(m);
    c.theta[0] = Vec3d(0, 0, M_PI / 2);
    const ArticulatedTarget target(m, c);
    const CapsuleField rotated{Vec3d(0.45, 0, 0), Vec3d(-0.45, 0, 0), 0.2};
    RenderSettings rs;
    rs.samples = 96;
    const Camera cam = front_camera(48);
    const auto art = render_articulated(canonical, target, cam, rs, Rgb{1, 1, 1});
    const auto want = render_image(rotated, cam, rs, Rgb{1, 1, 1});
    EXPECT_GT(mask_iou(art.opacity, want.opacity), 0.95);
}

TEST(RenderArticulated, GirthInterpolationIsMonotone) {
    const auto m = synthetic::single_capsule();
    const CapsuleField canonical{Vec3d(0, -0.45, 0), Vec3d(0, 0.45, 0), 0.2};
    Eigen::VectorXd beta_a(1), beta_b(1);
    beta_a << 0.0;
    beta_b << 1.0;
    RenderSettings rs;
    rs.samples = 64;
    const Camera cam = front_camera(40);
    std::vector<double> areas;
    for (double lambda : {0.0, 0.5, 1.0}) {
        BodyConfiguration c = BodyConfiguration::canonical(m);
        c.beta = lambda * beta_a + (1 - lambda) * beta_b;
        const ArticulatedTarget target(m, c);
        areas.push_back(area(render_articulated(canonical, target, cam, rs, Rgb{1, 1, 1}).opacity));
    }
    EXPECT_GT(areas[0], areas[1]);
    EXPECT_GT(areas[1], areas[2]);
}
