#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "rigfield/field/avatar_field.hpp"
#include "rigfield/training/optimizer.hpp"

using namespace rigfield;

namespace {

FieldConfig tiny_config(std::uint64_t seed = 11) {
    FieldConfig c;
    c.encoding.num_levels = 2;
    c.encoding.base_resolution = 3;
    c.encoding.per_level_scale = 2.0;
    c.encoding.log2_table_size = 4;  // 16 entries: level 0 dense? 4^3 = 64 > 16, so both hashed
    c.encoding.feature_dim = 2;
    c.sdf_hidden = 8;
    c.geo_feature_dim = 3;
    c.color_hidden = 8;
    c.direction_bands = 1;
    c.seed = seed;
    return c;
}

FieldConfig small_config(std::uint64_t seed = 5) {
    FieldConfig c;
    c.encoding.num_levels = 4;
    c.encoding.base_resolution = 4;
    c.encoding.per_level_scale = 1.5;
    c.encoding.log2_table_size = 10;
    c.sdf_hidden = 16;
    c.geo_feature_dim = 4;
    c.color_hidden = 16;
    c.seed = seed;
    return c;
}

// Randomizes every parameter so that all gradient paths are active.
template <typename Scalar>
void scramble(BasicAvatarField<Scalar>& f, std::uint64_t seed, double scale = 0.5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& p : f.params()) p = static_cast<Scalar>(p + u(rng));
}

Vec3d random_in(const Aabb& b, std::mt19937_64& rng, double margin = 0.0) {
    std::uniform_real_distribution<double> u(0, 1);
    Vec3d p;
    for (int a = 0; a < 3; ++a) p[a] = b.lo[a] + margin + u(rng) * (b.hi[a] - b.lo[a] - 2 * margin);
    return p;
}

// True when x is at least `gap` (in world units) away from every cell face of every level.
bool away_from_faces(const HashGridEncoding& enc, const Vec3d& x, double gap) {
    for (int l = 0; l < enc.num_levels(); ++l) {
        const double res = enc.levels()[l].resolution;
        for (int a = 0; a < 3; ++a) {
            const double ext = enc.domain().hi[a] - enc.domain().lo[a];
            const double pos = (x[a] - enc.domain().lo[a]) / ext * res;
            const double d = std::abs(pos - std::round(pos)) * ext / res;
            if (d < gap) return false;
        }
    }
    return true;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

}  // namespace

TEST(AvatarField, GeometricInitIsSphereLike) {
    FieldConfig cfg = small_config();
    cfg.sdf_hidden = 64;
    AvatarField f(cfg);
    EXPECT_LT(f.sdf(Vec3f::Zero()).value, 0.f);
    std::mt19937_64 rng(3);
    double err = 0;
    int n = 0;
    for (int i = 0; i < 200; ++i) {
        Vec3d d = random_in(Aabb{}, rng).normalized();
        for (double r : {0.1, 0.5, 0.9}) {
            const float v = f.sdf((r * d).cast<float>()).value;
            err += std::abs(v - (r - 0.5));
            ++n;
        }
        EXPECT_GT(f.sdf((0.95 * d).cast<float>()).value, 0.f);
        EXPECT_LT(f.sdf((0.15 * d).cast<float>()).value, 0.f);
    }
    EXPECT_LT(err / n, 0.1);
    EXPECT_NEAR(f.sharpness(), 20.f, 1e-3);
}

TEST(AvatarField, SdfGradientMatchesFiniteDifferences) {
    BasicAvatarField<double> f(small_config());
    scramble(f, 17, 0.05);
    const double h = 1e-3 * 2.0;  // 1e-3 of the box size
    std::mt19937_64 rng(21);
    int checked = 0;
    while (checked < 100) {
        const Vec3d x = random_in(f.domain(), rng, 0.01);
        if (!away_from_faces(f.encoding(), x, 2 * h)) continue;
        const auto s = f.sdf(x);
        for (int a = 0; a < 3; ++a) {
            Vec3d xp = x, xm = x;
            xp[a] += h;
            xm[a] -= h;
            const double fd = (f.sdf(xp).value - f.sdf(xm).value) / (2 * h);
            if (std::abs(fd) < 1e-6 && std::abs(s.gradient[a]) < 1e-6) continue;
            EXPECT_LT(rel_err(s.gradient[a], fd), 1e-2) << "axis " << a << " at " << x.transpose();
        }
        ++checked;
    }
}

TEST(AvatarField, EvaluationIsDeterministic) {
    AvatarField f(small_config());
    scramble(f, 2);
    const Vec3f x(0.1f, -0.2f, 0.3f), d = Vec3f(1, 2, 2).normalized();
    const auto a = f.sdf(x), b = f.sdf(x);
    EXPECT_EQ(std::memcmp(&a.value, &b.value, sizeof(float)), 0);
    EXPECT_TRUE((a.gradient.array() == b.gradient.array()).all());
    EXPECT_TRUE((f.color(x, d).array() == f.color(x, d).array()).all());
}

TEST(AvatarField, ColorIsBoundedAndChecksDirection) {
    AvatarField f(small_config());
    std::mt19937_64 rng(8);
    for (int i = 0; i < 200; ++i) {
        const Vec3f x = random_in(f.domain(), rng).cast<float>();
        const Vec3f d = random_in(Aabb{}, rng).normalized().cast<float>();
        const auto c = f.color(x, d);
        EXPECT_TRUE((c.array() >= 0.f).all() && (c.array() <= 1.f).all());
    }
    EXPECT_THROW(f.color(Vec3f::Zero(), Vec3f(1, 1, 0)), PreconditionError);
    EXPECT_THROW(f.sdf(Vec3f(0, 0, 1.5f)), DomainError);
}

TEST(AvatarField, DirectionIndependentFlagIgnoresDirection) {
    FieldConfig cfg = small_config();
    cfg.direction_independent = true;
    AvatarField f(cfg);
    scramble(f, 4);
    const Vec3f x(0.3f, 0.1f, -0.4f);
    const auto c1 = f.color(x, Vec3f(1, 0, 0));
    const auto c2 = f.color(x, Vec3f(0, -1, 0));
    EXPECT_TRUE((c1.array() == c2.array()).all());
}

// Autodiff gradient of a scalar loss touching every parameter group, checked
// against central differences in double precision on a 2-level field.
TEST(AvatarField, ParameterGradientsMatchFiniteDifferences) {
    using Field = BasicAvatarField<double>;
    using Mat = Field::Mat;
    Field f(tiny_config());
    scramble(f, 99, 0.6);
    std::mt19937_64 rng(5);
    std::vector<Vec3d> pts;
    for (int i = 0; i < 12; ++i) pts.push_back(random_in(f.domain(), rng, 0.05));
    Mat dirs(12, 3);
    for (int i = 0; i < 12; ++i) dirs.row(i) = random_in(Aabb{}, rng).normalized().transpose();
    Mat w_out = Mat::Random(12, 1 + f.geo_dim());
    Mat w_rgb = Mat::Random(12, 3);
    const double eik_weight = 0.7;

    auto loss = [&](const Field& fld, std::vector<double>* grad) {
        typename Field::SdfBatch sb;
        fld.sdf_forward(pts, sb);
        typename Field::ColorBatch cb;
        fld.color_forward(sb.out.rightCols(fld.geo_dim()), dirs, cb);
        double value = (sb.out.cwiseProduct(w_out)).sum() + (cb.rgb.cwiseProduct(w_rgb)).sum();
        value += eik_weight * fld.eikonal(sb, 1.0, {});
        if (grad) {
            grad->assign(static_cast<std::size_t>(fld.param_count()), 0.0);
            Mat d_out = w_out;
            const Mat d_geo = fld.color_backward(cb, w_rgb, *grad);
            d_out.rightCols(fld.geo_dim()) += d_geo;
            fld.sdf_backward(sb, d_out, *grad);
            fld.eikonal(sb, eik_weight, *grad);
        }
        return value;
    };

    std::vector<double> grad;
    loss(f, &grad);
    int probes = 0;
    for (const auto& s : f.layout()) {
        if (s.group == ParamGroup::Sharpness) continue;  // not used by this loss
        for (std::int64_t k = 0; k < s.size(); k += std::max<std::int64_t>(1, s.size() / 6)) {
            const std::size_t i = static_cast<std::size_t>(s.offset + k);
            const double h = 1e-6;
            const double orig = f.params()[i];
            f.params()[i] = orig + h;
            const double lp = loss(f, nullptr);
            f.params()[i] = orig - h;
            const double lm = loss(f, nullptr);
            f.params()[i] = orig;
            const double fd = (lp - lm) / (2 * h);
            if (std::abs(fd) < 1e-7 && std::abs(grad[i]) < 1e-7) continue;
            EXPECT_LT(rel_err(grad[i], fd), 1e-2) << s.name << "[" << k << "] autodiff " << grad[i] << " fd " << fd;
            ++probes;
        }
    }
    EXPECT_GT(probes, 30);
}

TEST(AvatarField, CheckpointRoundTrip) {
    AvatarField f(small_config());
    scramble(f, 12);
    const auto path = (std::filesystem::temp_directory_path() / "rigfield_field_roundtrip.ckpt").string();
    f.save(path);
    const AvatarField g = AvatarField::load(path);
    std::filesystem::remove(path);
    ASSERT_EQ(g.param_count(), f.param_count());
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const Vec3f x = random_in(f.domain(), rng).cast<float>();
        const Vec3f d = random_in(Aabb{}, rng).normalized().cast<float>();
        ASSERT_EQ(f.sdf(x).value, g.sdf(x).value);
        ASSERT_TRUE((f.color(x, d).array() == g.color(x, d).array()).all());
    }
}

TEST(AvatarField, LoadRejectsForeignFile) {
    const auto path = (std::filesystem::temp_directory_path() / "rigfield_not_a_ckpt.bin").string();
    {
        std::FILE* fp = std::fopen(path.c_str(), "wb");
        std::fputs("definitely not a checkpoint", fp);
        std::fclose(fp);
    }
    EXPECT_THROW(AvatarField::load(path), FormatError);
    std::filesystem::remove(path);
}

// Regress the field onto the unit-sphere distance inside a larger box.
TEST(AvatarField, FitsAnalyticSphereSign) {
    FieldConfig cfg = small_config();
    cfg.encoding.domain = Aabb{Vec3f::Constant(-2.5f), Vec3f::Constant(2.5f)};
    cfg.init_radius = 1.2;
    AvatarField f(cfg);
    Adam<float> opt(static_cast<std::size_t>(f.param_count()), {1e-2});
    std::mt19937_64 rng(4);
    std::vector<double> grad(static_cast<std::size_t>(f.param_count()));
    std::vector<float> gf(grad.size());
    for (int step = 0; step < 300; ++step) {
        std::vector<Vec3f> pts;
        for (int i = 0; i < 128; ++i) pts.push_back(random_in(f.domain(), rng).cast<float>());
        AvatarField::SdfBatch sb;
        f.sdf_forward(pts, sb);
        AvatarField::Mat d_out = AvatarField::Mat::Zero(sb.n, 1 + f.geo_dim());
        for (int i = 0; i < sb.n; ++i) d_out(i, 0) = 2.f * (sb.out(i, 0) - (pts[i].norm() - 1.f)) / sb.n;
        std::fill(gf.begin(), gf.end(), 0.f);
        f.sdf_backward(sb, d_out, gf);
        std::copy(gf.begin(), gf.end(), grad.begin());
        opt.step(f.params(), grad);
    }
    EXPECT_LT(f.sdf(Vec3f::Zero()).value, 0.f);
    EXPECT_GT(f.sdf(Vec3f(2.f, 0.f, 0.f)).value, 0.f);
    EXPECT_GT(f.sdf(Vec3f(0.f, -2.f, 0.f)).value, 0.f);
    EXPECT_NEAR(f.sdf(Vec3f(0.f, 0.f, 1.f)).value, 0.f, 0.1f);
}
