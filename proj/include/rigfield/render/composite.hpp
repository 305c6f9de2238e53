#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rigfield/render/renderer.hpp"

namespace rigfield {

// Density-based scene representation composited with NeRF-style alphas
// alpha_i = 1 - exp(-sigma_i * (t_{i+1} - t_i)).
template <typename S>
concept DensityField = requires(const S& s, std::span<const Vec3f> p, std::span<const Vec3f> d, std::span<float> sigma,
                                std::span<Vec3f> rgb) {
    s.evaluate_density(p, d, sigma, rgb);
};

struct SceneSphere {
    Vec3d center = Vec3d::Zero();
    double radius = 1.0;
    double density = 200.0;
    Vec3f color = Vec3f(0.2f, 0.4f, 0.9f);
};

// Slab {x : offset <= n.x <= offset + thickness}.
struct ScenePlane {
    Vec3d normal = Vec3d::UnitZ();
    double offset = 0.0;
    double thickness = 0.05;
    double density = 200.0;
    Vec3f color = Vec3f(0.5f, 0.5f, 0.5f);
};

struct AnalyticScene {
    std::vector<SceneSphere> spheres;
    std::vector<ScenePlane> planes;
    std::optional<Mat4d> alignment;  // avatar canonical -> scene world

    bool empty() const { return spheres.empty() && planes.empty(); }

    // Densities add; color is the density-weighted mean of overlapping primitives.
    void evaluate_density(std::span<const Vec3f> pts, std::span<const Vec3f>, std::span<float> sigma,
                          std::span<Vec3f> rgb) const {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const Vec3d p = pts[i].cast<double>();
            double total = 0;
            Vec3d c = Vec3d::Zero();
            for (const auto& s : spheres)
                if ((p - s.center).squaredNorm() <= s.radius * s.radius) {
                    total += s.density;
                    c += s.density * s.color.cast<double>();
                }
            for (const auto& pl : planes) {
                const double h = pl.normal.normalized().dot(p);
                if (h >= pl.offset && h <= pl.offset + pl.thickness) {
                    total += pl.density;
                    c += pl.density * pl.color.cast<double>();
                }
            }
            sigma[i] = static_cast<float>(total);
            rgb[i] = total > 0 ? Vec3f((c / total).cast<float>()) : Vec3f::Zero();
        }
    }
};

inline Vec3d json_vec3(const nlohmann::json& j) {
    require(j.is_array() && j.size() == 3, "scene: expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline AnalyticScene parse_scene(const nlohmann::json& j) {
    AnalyticScene scene;
    for (const auto& s : j.value("spheres", nlohmann::json::array())) {
        SceneSphere sp;
        sp.center = json_vec3(s.at("center"));
        sp.radius = s.at("radius").get<double>();
        sp.density = s.value("density", sp.density);
        if (s.contains("color")) sp.color = json_vec3(s["color"]).cast<float>();
        require(sp.radius > 0 && sp.density >= 0, "scene: sphere needs positive radius and nonnegative density");
        scene.spheres.push_back(sp);
    }
    for (const auto& p : j.value("planes", nlohmann::json::array())) {
        ScenePlane pl;
        pl.normal = json_vec3(p.at("normal"));
        require(pl.normal.norm() > 0, "scene: plane normal must be nonzero");
        pl.offset = p.at("offset").get<double>();
        pl.thickness = p.value("thickness", pl.thickness);
        pl.density = p.value("density", pl.density);
        if (p.contains("color")) pl.color = json_vec3(p["color"]).cast<float>();
        scene.planes.push_back(pl);
    }
    if (j.contains("alignment")) {
        const auto& a = j["alignment"];
        require(a.is_array() && a.size() == 16, "scene: alignment must be 16 numbers (row-major 4x4)");
        Mat4d m;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) m(r, c) = a[static_cast<std::size_t>(r * 4 + c)].get<double>();
        scene.alignment = m;
    }
    return scene;
}

inline AnalyticScene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open scene file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("scene file " + path + ": " + e.what());
    }
    return parse_scene(j);
}

// Places a canonical-space SDF field in the world through a similarity
// transform x_world = A x_canon. SDF values are rescaled to world units.
template <RenderField F>
class AlignedField {
public:
    AlignedField(const F& field, const Mat4d& avatar_to_world) : field_(field) {
        const Mat3d lin = avatar_to_world.topLeftCorner<3, 3>();
        const double det = lin.determinant();
        require(det > 0, "alignment must preserve orientation");
        scale_ = std::cbrt(det);
        require(((lin / scale_) * (lin / scale_).transpose() - Mat3d::Identity()).cwiseAbs().maxCoeff() < 1e-6,
                "alignment must be a similarity transform");
        inv_ = avatar_to_world.inverse();
        identity_ = avatar_to_world == Mat4d::Identity();
    }

    double sharpness() const { return field_.sharpness() * scale_; }

    void evaluate(std::span<const Vec3f> pts, std::span<const Vec3f> dirs, std::span<float> sdf,
                  std::span<Vec3f> rgb) const {
        if (identity_) return field_.evaluate(pts, dirs, sdf, rgb);
        std::vector<Vec3f> p(pts.size()), d(pts.size());
        const Mat3d lin = inv_.topLeftCorner<3, 3>();
        const Vec3d off = inv_.topRightCorner<3, 1>();
        for (std::size_t i = 0; i < pts.size(); ++i) {
            p[i] = (lin * pts[i].cast<double>() + off).cast<float>();
            d[i] = (lin * dirs[i].cast<double>()).normalized().cast<float>();
        }
        field_.evaluate(p, d, sdf, rgb);
        // sdf stays in canonical units; sharpness() carries the scale so s * f matches world units.
    }

private:
    const F& field_;
    Mat4d inv_;
    double scale_ = 1.0;
    bool identity_ = false;
};

// NeRF compositing of a density field along rays, same output layout as render_image.
template <DensityField S>
RenderOutput render_density_image(const S& scene, const Camera& cam, const RenderSettings& settings,
                                  const Image& background) {
    cam.validate();
    const int w = cam.strided_width(settings.stride), h = cam.strided_height(settings.stride);
    require(background.width == w && background.height == h && background.channels == 3,
            "render_density_image: background must match the strided image size");
    RenderOutput out{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1),
                     std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
    const int n = settings.samples;
    parallel_for(0, static_cast<std::size_t>(h), settings.threads, [&](std::size_t row_index) {
        const int row = static_cast<int>(row_index);
        std::vector<Vec3f> pts(static_cast<std::size_t>(n)), dirs(static_cast<std::size_t>(n)),
            rgb(static_cast<std::size_t>(n));
        std::vector<float> sigma(static_cast<std::size_t>(n));
        for (int col = 0; col < w; ++col) {
            std::optional<std::mt19937_64> rng;
            if (settings.jitter)
                rng.emplace(detail::mix_seed(settings.seed, static_cast<std::uint64_t>(row), static_cast<std::uint64_t>(col)));
            const Ray ray = sample_ray(cam, row, col, n, settings.stride, rng ? &*rng : nullptr);
            for (int i = 0; i < n; ++i) {
                pts[static_cast<std::size_t>(i)] = ray.origin + ray.t[static_cast<std::size_t>(i)] * ray.direction;
                dirs[static_cast<std::size_t>(i)] = ray.direction;
            }
            scene.evaluate_density(pts, dirs, sigma, rgb);
            double trans = 1, acc = 0, depth = 0;
            Eigen::Vector3d color = Eigen::Vector3d::Zero();
            for (int i = 0; i + 1 < n; ++i) {
                const auto k = static_cast<std::size_t>(i);
                const double a = -std::expm1(-static_cast<double>(sigma[k]) * (ray.t[k + 1] - ray.t[k]));
                const double wi = a * trans;
                acc += wi;
                depth += wi * ray.t[k];
                color += wi * rgb[k].cast<double>();
                trans *= 1 - a;
            }
            const Rgb b = background.rgb(row, col);
            color += (1 - acc) * Eigen::Vector3d(b.r, b.g, b.b);
            out.rgb.set_rgb(row, col, {static_cast<float>(color.x()), static_cast<float>(color.y()), static_cast<float>(color.z())});
            out.opacity.at(row, col) = static_cast<float>(acc);
            out.depth.at(row, col) = static_cast<float>(depth / std::max(acc, kDepthEpsilon));
            out.background[static_cast<std::size_t>(row) * w + col] = acc < settings.background_epsilon;
        }
    });
    return out;
}

enum class PixelSource : std::uint8_t { Background = 0, Avatar = 1, Scene = 2, Blend = 3 };

struct CompositeOutput {
    RenderOutput image;
    std::vector<PixelSource> source;
};

struct CompositeSettings {
    double tau_occ = 0.5;
};

// Per-pixel depth test. Both opacities above tau: nearer expected depth wins.
// Exactly one above tau: that one. Neither: front-to-back blend over the background.
template <RenderField F, DensityField S>
CompositeOutput composite_render(const F& avatar, const S& scene, const std::optional<Mat4d>& alignment,
                                 const Camera& cam, const RenderSettings& settings, const Image& background,
                                 const CompositeSettings& cs = {}) {
    if (!alignment) throw PreconditionError("composite_render: missing avatar-to-scene alignment transform");
    require(cs.tau_occ > 0 && cs.tau_occ < 1, "composite_render: tau_occ must lie in (0, 1)");
    const AlignedField<F> placed(avatar, *alignment);
    const RenderOutput a = render_image(placed, cam, settings, background);
    const RenderOutput s = render_density_image(scene, cam, settings, background);
    CompositeOutput out{a, std::vector<PixelSource>(a.background.size(), PixelSource::Background)};
    const int w = a.rgb.width, h = a.rgb.height;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t k = static_cast<std::size_t>(r) * w + c;
            const double oa = a.opacity.at(r, c), os = s.opacity.at(r, c);
            const bool ha = oa > cs.tau_occ, hs = os > cs.tau_occ;
            bool take_scene;
            if (ha && hs)
                take_scene = s.depth.at(r, c) < a.depth.at(r, c);
            else if (ha || hs)
                take_scene = hs;
            else {
                if (os == 0.0) {
                    out.source[k] = oa >= settings.background_epsilon ? PixelSource::Blend : PixelSource::Background;
                    continue;  // avatar pixel already in place
                }
                if (oa == 0.0) {
                    take_scene = true;
                } else {
                    // un-premultiply against the background and blend front to back
                    const Rgb bg = background.rgb(r, c);
                    const Eigen::Vector3d b(bg.r, bg.g, bg.b);
                    const auto ra = a.rgb.rgb(r, c), rs = s.rgb.rgb(r, c);
                    const Eigen::Vector3d ca = Eigen::Vector3d(ra.r, ra.g, ra.b) - (1 - oa) * b;
                    const Eigen::Vector3d csn = Eigen::Vector3d(rs.r, rs.g, rs.b) - (1 - os) * b;
                    const bool scene_front = s.depth.at(r, c) < a.depth.at(r, c);
                    const Eigen::Vector3d& cf = scene_front ? csn : ca;
                    const Eigen::Vector3d& cb = scene_front ? ca : csn;
                    const double of = scene_front ? os : oa, ob = scene_front ? oa : os;
                    const Eigen::Vector3d col = cf + (1 - of) * (cb + (1 - ob) * b);
                    const double o = of + (1 - of) * ob;
                    out.image.rgb.set_rgb(r, c, {static_cast<float>(col.x()), static_cast<float>(col.y()), static_cast<float>(col.z())});
                    out.image.opacity.at(r, c) = static_cast<float>(o);
                    out.image.depth.at(r, c) = static_cast<float>((oa * a.depth.at(r, c) + os * s.depth.at(r, c)) / (oa + os));
                    out.image.background[k] = o < settings.background_epsilon;
                    out.source[k] = PixelSource::Blend;
                    continue;
                }
            }
            if (take_scene) {
                out.image.rgb.set_rgb(r, c, s.rgb.rgb(r, c));
                out.image.opacity.at(r, c) = s.opacity.at(r, c);
                out.image.depth.at(r, c) = s.depth.at(r, c);
                out.image.background[k] = s.background[k];
                out.source[k] = hs ? PixelSource::Scene : PixelSource::Blend;
            } else {
                out.source[k] = PixelSource::Avatar;
            }
        }
    return out;
}

}  // namespace rigfield
