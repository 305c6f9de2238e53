#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rigfield/field/analytic.hpp"
#include "rigfield/field/avatar_field.hpp"
#include "rigfield/render/composite.hpp"
#include "rigfield/render/renderer.hpp"

using namespace rigfield;

namespace {

Camera front_camera(int size, double dist = 3.0) {
    return Camera::look_at(Vec3d(0, 0, dist), Vec3d::Zero(), Vec3d(0, 1, 0), size, size, 0.9, dist - 2.5, dist + 2.5);
}

Ray straight_ray(const Vec3f& o, const Vec3f& d, float near, float far, int n) {
    Ray r{o, d.normalized(), {}};
    for (int i = 0; i < n; ++i) r.t.push_back(near + (i + 0.5f) * (far - near) / n);
    return r;
}

// Ray/sphere entry parameter, or -1 for a miss.
double hit_sphere(const Vec3d& o, const Vec3d& d, const Vec3d& c, double r) {
    const Vec3d oc = o - c;
    const double b = oc.dot(d), disc = b * b - (oc.squaredNorm() - r * r);
    if (disc < 0) return -1;
    const double t = -b - std::sqrt(disc);
    return t > 0 ? t : -1;
}

double entropy(const std::vector<double>& w) {
    double sum = 0, h = 0;
    for (double x : w) sum += x;
    for (double x : w)
        if (x > 0) h -= (x / sum) * std::log(x / sum);
    return h;
}

}  // namespace

TEST(SampleRay, CenterPixelLooksForward) {
    const Camera cam = front_camera(65);
    const Ray r = sample_ray(cam, 32, 32, 8);
    EXPECT_LT((r.direction.cast<double>() - cam.forward()).norm(), 1e-6);
    const double step = (cam.far - cam.near) / 8;
    for (int i = 0; i < 8; ++i) EXPECT_NEAR(r.t[i], cam.near + (i + 0.5) * step, 1e-5);
}

TEST(SampleRay, StrideGridAndJitter) {
    const Camera cam = front_camera(128);
    EXPECT_EQ(cam.strided_width(2), 64);
    EXPECT_EQ(cam.strided_height(2), 64);
    EXPECT_THROW(sample_ray(cam, 64, 0, 8, 2), PreconditionError);
    EXPECT_THROW(sample_ray(cam, 0, 0, 1), PreconditionError);
    std::mt19937_64 rng(3);
    const Ray r = sample_ray(cam, 10, 20, 16, 1, &rng);
    const double step = (cam.far - cam.near) / 16;
    for (int i = 0; i < 16; ++i) {
        EXPECT_GE(r.t[i], cam.near + i * step - 1e-5);
        EXPECT_LE(r.t[i], cam.near + (i + 1) * step + 1e-5);
    }
    // corner rays of the stride-2 grid match stride-1 rays of the same pixels
    const Ray a = sample_ray(cam, 63, 63, 4, 2), b = sample_ray(cam, 126, 126, 4, 1);
    EXPECT_EQ(a.direction, b.direction);
}

TEST(NeusWeights, NoCrossingGivesZero) {
    std::vector<float> f{0.5f, 0.6f, 0.8f, 1.0f};
    for (double w : neus::weights(f, 50)) EXPECT_EQ(w, 0.0);
    EXPECT_THROW(neus::weights(f, 0.0), PreconditionError);
    EXPECT_THROW(neus::weights(std::vector<float>{1.f}, 1.0), PreconditionError);
}

TEST(NeusWeights, SharpCrossingCapturesAllWeight) {
    std::vector<float> f{1.f, -1.f, -2.f};
    const auto w = neus::weights(f, 1000);
    EXPECT_GT(w[0], 1 - 1e-9);
    EXPECT_LT(w[1] + w[2], 1e-9);
}

TEST(NeusWeights, AlphaGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int k = 0; k < 200; ++k) {
        const double f0 = u(rng), f1 = u(rng), s = 5 + 40 * std::abs(u(rng));
        if (neus::section_alpha(f0, f1, s) <= 1e-6) continue;
        const auto g = neus::section_alpha_grad(f0, f1, s);
        const double h = 1e-6;
        const double d0 = (neus::section_alpha(f0 + h, f1, s) - neus::section_alpha(f0 - h, f1, s)) / (2 * h);
        const double d1 = (neus::section_alpha(f0, f1 + h, s) - neus::section_alpha(f0, f1 - h, s)) / (2 * h);
        const double ds = (neus::section_alpha(f0, f1, s + h) - neus::section_alpha(f0, f1, s - h)) / (2 * h);
        EXPECT_NEAR(g.d_f0, d0, 1e-5 * (1 + std::abs(d0)));
        EXPECT_NEAR(g.d_f1, d1, 1e-5 * (1 + std::abs(d1)));
        EXPECT_NEAR(g.d_s, ds, 1e-5 * (1 + std::abs(ds)));
    }
}

TEST(NeusWeights, MonotoneOcclusion) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> a(20);
        for (auto& x : a) x = u(rng);
        const std::size_t j = rng() % a.size();
        a[j] = 1.0;
        const auto w = neus::composite_weights(a);
        for (std::size_t i = j + 1; i < w.size(); ++i) EXPECT_EQ(w[i], 0.0);
    }
}

TEST(NeusWeights, PeakNearAnalyticIntersection) {
    const SphereField sphere;
    const Ray r = straight_ray(Vec3f(0, 0, -3), Vec3f(0, 0, 1), 0.5f, 5.5f, 128);
    std::vector<float> f;
    for (float t : r.t) f.push_back(static_cast<float>(sphere.sdf((r.origin + t * r.direction).cast<double>()).value));
    const auto w = neus::weights(f, 64);
    const auto best = std::max_element(w.begin(), w.end()) - w.begin();
    EXPECT_LE(std::abs(r.t[best] - 2.0), 5.0 / 128 + 1e-6);
}

TEST(NeusWeights, SharperDensityLowersEntropy) {
    const SphereField sphere;
    const Ray r = straight_ray(Vec3f(0.3f, 0.2f, -3), Vec3f(0, 0, 1), 0.5f, 5.5f, 128);
    std::vector<float> f;
    for (float t : r.t) f.push_back(static_cast<float>(sphere.sdf((r.origin + t * r.direction).cast<double>()).value));
    const double h8 = entropy(neus::weights(f, 8)), h32 = entropy(neus::weights(f, 32)),
                 h128 = entropy(neus::weights(f, 128));
    EXPECT_GE(h8, h32);
    EXPECT_GE(h32, h128);
}

TEST(RenderPixel, RedSphereThroughCenter) {
    const SphereField sphere;
    const Ray r = straight_ray(Vec3f(0, 0, -3), Vec3f(0, 0, 1), 0.5f, 5.5f, 128);
    const auto px = render_pixel(sphere, r, Vec3f(1, 1, 1));
    EXPECT_LT((px.rgb - Vec3f(1, 0, 0)).cwiseAbs().maxCoeff(), 0.02f);
    EXPECT_GT(px.opacity, 0.98f);
    EXPECT_LT(std::abs(px.depth - 2.0f), 2 * 5.0f / 128);
}

TEST(RenderPixel, EmptyFieldShowsBackground) {
    const EmptyField empty;
    const Ray r = straight_ray(Vec3f(0, 0, -3), Vec3f(0, 0, 1), 0.5f, 5.5f, 32);
    const auto px = render_pixel(empty, r, Vec3f(0.1f, 0.2f, 0.3f));
    EXPECT_EQ(px.rgb, Vec3f(0.1f, 0.2f, 0.3f));
    EXPECT_EQ(px.opacity, 0.f);
}

TEST(RenderPixel, LinearInBackgroundOnMiss) {
    const SphereField sphere;
    const Ray r = straight_ray(Vec3f(2, 0, -3), Vec3f(0, 0, 1), 0.5f, 5.5f, 64);
    const Vec3f b1(0.9f, 0.5f, 0.1f), b2(0.2f, 0.3f, 0.4f);
    const auto p1 = render_pixel(sphere, r, b1), p2 = render_pixel(sphere, r, b2);
    EXPECT_EQ(p1.rgb - p2.rgb, b1 - b2);
}

TEST(RenderPixel, RejectsInvalidRays) {
    const SphereField sphere;
    Ray r = straight_ray(Vec3f(0, 0, -3), Vec3f(0, 0, 1), 0.5f, 5.5f, 8);
    r.direction = Vec3f(0, 0, 2);
    EXPECT_THROW(render_pixel(sphere, r, Vec3f::Zero()), PreconditionError);
    r = straight_ray(Vec3f(0, 0, -3), Vec3f(0, 0, 1), 0.5f, 5.5f, 8);
    std::swap(r.t[2], r.t[3]);
    EXPECT_THROW(render_pixel(sphere, r, Vec3f::Zero()), PreconditionError);
}

TEST(RenderImage, EmptyFieldIsWhite) {
    const EmptyField empty;
    RenderSettings rs;
    rs.samples = 16;
    const auto out = render_image(empty, front_camera(16), rs, Rgb{1, 1, 1});
    for (float v : out.rgb.data) EXPECT_EQ(v, 1.f);
    for (float v : out.opacity.data) EXPECT_EQ(v, 0.f);
    for (auto b : out.background) EXPECT_EQ(b, 1);
}

TEST(RenderImage, StrideIsSubsampling) {
    const SphereField sphere;
    const Camera cam = front_camera(32);
    RenderSettings rs;
    rs.samples = 48;
    const auto full = render_image(sphere, cam, rs, Rgb{0, 0, 0});
    rs.stride = 2;
    const auto half = render_image(sphere, cam, rs, Rgb{0, 0, 0});
    ASSERT_EQ(half.rgb.width, 16);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
            EXPECT_EQ(half.opacity.at(r, c), full.opacity.at(2 * r, 2 * c));
            EXPECT_EQ(half.depth.at(r, c), full.depth.at(2 * r, 2 * c));
        }
}

TEST(RenderImage, SilhouetteMatchesProjectedDisk) {
    const SphereField sphere;
    const Camera cam = front_camera(128);
    RenderSettings rs;
    rs.samples = 128;
    const auto out = render_image(sphere, cam, rs, Rgb{1, 1, 1});
    Image disk(128, 128, 1);
    for (int r = 0; r < 128; ++r)
        for (int c = 0; c < 128; ++c)
            disk.at(r, c) = hit_sphere(cam.position(), cam.direction_at(c + 0.5, r + 0.5), Vec3d::Zero(), 1.0) > 0;
    EXPECT_GT(mask_iou(out.opacity, disk), 0.98);
}

TEST(RenderImage, DepthErrorShrinksWithMoreSamples) {
    const SphereField sphere;
    const Camera cam = front_camera(24);
    double prev = 1e9;
    for (int n : {32, 64, 128}) {
        RenderSettings rs;
        rs.samples = n;
        const auto out = render_image(sphere, cam, rs, Rgb{0, 0, 0});
        double err = 0;
        int hits = 0;
        for (int r = 0; r < 24; ++r)
            for (int c = 0; c < 24; ++c) {
                const double t = hit_sphere(cam.position(), cam.direction_at(c + 0.5, r + 0.5), Vec3d::Zero(), 1.0);
                if (t < 0 || out.opacity.at(r, c) < 0.99) continue;
                err += std::abs(out.depth.at(r, c) - t);
                ++hits;
            }
        ASSERT_GT(hits, 50);
        err /= hits;
        EXPECT_LT(err, prev) << "n = " << n;
        prev = err;
    }
}

TEST(RenderImage, WeightsNeverExceedOne) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        FieldConfig fc;
        fc.seed = seed;
        fc.sdf_hidden = 16;
        fc.color_hidden = 16;
        fc.encoding.num_levels = 4;
        fc.encoding.log2_table_size = 12;
        AvatarField field(fc);
        std::mt19937_64 rng(seed + 10);
        std::uniform_real_distribution<float> u(-0.2f, 0.2f);
        for (auto& p : field.params()) p += u(rng);
        std::uniform_real_distribution<float> v(-1.f, 1.f);
        for (int k = 0; k < 100; ++k) {
            const Vec3f o(v(rng), v(rng), v(rng));
            const Vec3f d = Vec3f(v(rng), v(rng), v(rng)).normalized();
            Ray r{o, d, {}};
            for (int i = 0; i < 64; ++i) r.t.push_back(0.01f * (i + 1));
            std::vector<Vec3f> pts, dirs(64, d), rgb(64);
            std::vector<float> f(64);
            for (float t : r.t) pts.push_back(o + t * d);
            field.evaluate(pts, dirs, f, rgb);
            double sum = 0;
            for (double w : neus::weights(f, field.sharpness())) {
                EXPECT_GE(w, 0.0);
                sum += w;
            }
            EXPECT_LE(sum, 1 + 1e-5);
        }
    }
}

TEST(Upsample, TransposeIsAdjoint) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u(-1, 1);
    Image small(7, 5, 3), big(14, 10, 3);
    for (auto& v : small.data) v = u(rng);
    for (auto& v : big.data) v = u(rng);
    const Image up = upsample(small, 2, 14, 10);
    const Image down = upsample_transpose(big, 2, 7, 5);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < up.data.size(); ++i) lhs += double(up.data[i]) * big.data[i];
    for (std::size_t i = 0; i < down.data.size(); ++i) rhs += double(down.data[i]) * small.data[i];
    EXPECT_NEAR(lhs, rhs, 1e-4);
    EXPECT_EQ(up.at(4, 6, 1), small.at(2, 3, 1));
}

TEST(Composite, EmptySceneEqualsAvatarRender) {
    const SphereField sphere;
    const Camera cam = front_camera(24);
    RenderSettings rs;
    rs.samples = 64;
    const Image bg = Image::filled(24, 24, {0.3f, 0.6f, 0.9f});
    const auto plain = render_image(sphere, cam, rs, bg);
    const auto comp = composite_render(sphere, AnalyticScene{}, Mat4d::Identity().eval(), cam, rs, bg);
    EXPECT_EQ(comp.image.rgb.data, plain.rgb.data);
    EXPECT_EQ(comp.image.opacity.data, plain.opacity.data);
}

TEST(Composite, PlaneInFrontHidesAvatar) {
    const SphereField sphere;
    const Camera cam = front_camera(24);
    RenderSettings rs;
    rs.samples = 128;
    AnalyticScene scene;
    scene.planes.push_back({Vec3d::UnitZ(), 1.5, 0.2, 500.0, Vec3f(0, 1, 0)});
    const Image bg = Image::filled(24, 24, {1, 1, 1});
    const auto only = render_density_image(scene, cam, rs, bg);
    const auto comp = composite_render(sphere, scene, Mat4d::Identity().eval(), cam, rs, bg);
    EXPECT_EQ(comp.image.rgb.data, only.rgb.data);
    for (auto s : comp.source) EXPECT_EQ(s, PixelSource::Scene);
}

TEST(Composite, MissingAlignmentIsRejected) {
    const SphereField sphere;
    RenderSettings rs;
    rs.samples = 8;
    EXPECT_THROW(composite_render(sphere, AnalyticScene{}, std::nullopt, front_camera(4), rs, Image::filled(4, 4, {})),
                 PreconditionError);
}

TEST(Composite, TwoSpheresMatchDualRayTrace) {
    SphereField avatar;
    avatar.radius = 0.6;
    avatar.center = Vec3d(-0.3, 0, 0.2);
    AnalyticScene scene;
    scene.spheres.push_back({Vec3d(0.35, 0.1, -0.3), 0.55, 400.0, Vec3f(0, 0, 1)});
    const Camera cam = front_camera(48);
    RenderSettings rs;
    rs.samples = 128;
    const auto comp = composite_render(avatar, scene, Mat4d::Identity().eval(), cam, rs, Image::filled(48, 48, {1, 1, 1}));
    int agree = 0;
    for (int r = 0; r < 48; ++r)
        for (int c = 0; c < 48; ++c) {
            const Vec3d o = cam.position(), d = cam.direction_at(c + 0.5, r + 0.5);
            const double ta = hit_sphere(o, d, avatar.center, avatar.radius);
            const double ts = hit_sphere(o, d, scene.spheres[0].center, scene.spheres[0].radius);
            PixelSource want = PixelSource::Background;
            if (ta > 0 && (ts < 0 || ta < ts)) want = PixelSource::Avatar;
            if (ts > 0 && (ta < 0 || ts < ta)) want = PixelSource::Scene;
            PixelSource got = comp.source[static_cast<std::size_t>(r) * 48 + c];
            if (got == PixelSource::Blend) got = PixelSource::Background;
            agree += got == want;
        }
    EXPECT_GE(agree, 0.99 * 48 * 48);
}
