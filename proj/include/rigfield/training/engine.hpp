#pragma once

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "rigfield/core/parallel.hpp"
#include "rigfield/field/avatar_field.hpp"
#include "rigfield/render/neus.hpp"
#include "rigfield/render/renderer.hpp"

namespace rigfield {

struct TrainRay {
    Ray ray;
    Vec3f background = Vec3f::Ones();
};

// Upstream gradient of the loss with respect to one pixel's color and opacity.
struct RayGradient {
    Eigen::Vector3d d_rgb = Eigen::Vector3d::Zero();
    double d_opacity = 0;
};

// Ray through strided pixel (row, col) whose samples are confined to the part
// of [near, far] inside `box`. A ray that misses the box gets no samples and
// renders as pure background.
inline Ray box_ray(const Camera& cam, int row, int col, int n, int stride, const Aabb& box,
                   std::mt19937_64* jitter = nullptr) {
    Ray ray = sample_ray(cam, row, col, 2, stride);
    double t0 = cam.near, t1 = cam.far;
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a], d = ray.direction[a];
        if (std::abs(d) < 1e-12) {
            if (o < box.lo[a] || o > box.hi[a]) t1 = -1;
            continue;
        }
        double ta = (box.lo[a] - o) / d, tb = (box.hi[a] - o) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    ray.t.clear();
    if (!(t1 - t0 > 1e-6)) return ray;
    ray.t.resize(static_cast<std::size_t>(n));
    const double step = (t1 - t0) / n;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i)
        ray.t[static_cast<std::size_t>(i)] = static_cast<float>(t0 + (i + (jitter ? u(*jitter) : 0.5)) * step);
    // float rounding can collapse neighbours on very short spans
    for (std::size_t i = 1; i < ray.t.size(); ++i)
        if (!(ray.t[i] > ray.t[i - 1])) ray.t[i] = std::nextafter(ray.t[i - 1], 1e30f);
    return ray;
}

// Rays through every strided pixel of `cam`, row-major, with per-pixel
// backgrounds. With a box, samples are restricted to it (see box_ray).
inline std::vector<TrainRay> camera_rays(const Camera& cam, int stride, int samples, const Image& background,
                                         std::mt19937_64* jitter = nullptr, const Aabb* box = nullptr) {
    require(samples >= 2, "camera_rays: need at least 2 samples per ray");
    const int w = cam.strided_width(stride), h = cam.strided_height(stride);
    require(background.width == w && background.height == h, "camera_rays: background size mismatch");
    std::vector<TrainRay> rays;
    rays.reserve(static_cast<std::size_t>(w) * h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const Rgb b = background.rgb(r, c);
            rays.push_back({box ? box_ray(cam, r, c, samples, stride, *box, jitter) : sample_ray(cam, r, c, samples, stride, jitter),
                            Vec3f(b.r, b.g, b.b)});
        }
    return rays;
}

namespace detail {

// Forward composite in double, keeping alphas, transmittances and weights
// for the backward pass below. The backward pass fills d_sdf and d_rgb and
// adds d loss / d s into d_s:
//   w_i = a_i T_i,  dL/da_k = T_k (g_k - R_k),  R_k = g_{k+1} a_{k+1} + (1 - a_{k+1}) R_{k+1}
// where g_i = dL/dw_i = d_rgb . (c_i - bg) + d_opacity.
template <typename SdfAt, typename RgbAt>
PixelResult composite_ray(int n, const SdfAt& f, const RgbAt& c, std::span<const float> t, double s, const Vec3f& bg,
                          std::vector<double>& alpha, std::vector<double>& trans, std::vector<double>& weight) {
    alpha.assign(static_cast<std::size_t>(n), 0.0);
    if (n == 0) return {bg, 0.f, 0.f};
    trans.resize(static_cast<std::size_t>(n));
    weight.resize(static_cast<std::size_t>(n));
    for (int i = 0; i + 1 < n; ++i) alpha[static_cast<std::size_t>(i)] = neus::section_alpha(f(i), f(i + 1), s);
    double T = 1, acc = 0, depth = 0;
    Eigen::Vector3d col = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        trans[k] = T;
        weight[k] = alpha[k] * T;
        T *= 1 - alpha[k];
        acc += weight[k];
        depth += weight[k] * t[k];
        col += weight[k] * c(i);
    }
    col += (1 - acc) * bg.cast<double>();
    return {col.cast<float>(), static_cast<float>(acc), static_cast<float>(depth / std::max(acc, kDepthEpsilon))};
}

template <typename SdfAt, typename RgbAt>
void composite_ray_backward(int n, const SdfAt& f, const RgbAt& c, double s, const Vec3f& bg, const RayGradient& g,
                            const std::vector<double>& alpha, const std::vector<double>& trans,
                            const std::vector<double>& weight, std::span<double> d_sdf, std::span<Eigen::Vector3d> d_rgb,
                            double& d_s) {
    const Eigen::Vector3d b = bg.cast<double>();
    std::fill(d_sdf.begin(), d_sdf.end(), 0.0);
    double R = 0;
    for (int k = n - 1; k >= 0; --k) {
        const auto kk = static_cast<std::size_t>(k);
        const double gk = g.d_rgb.dot(c(k) - b) + g.d_opacity;
        d_rgb[kk] = weight[kk] * g.d_rgb;
        if (k + 1 < n) {
            const double da = trans[kk] * (gk - R);
            if (da != 0.0) {
                const auto ag = neus::section_alpha_grad(f(k), f(k + 1), s);
                d_sdf[kk] += da * ag.d_f0;
                d_sdf[kk + 1] += da * ag.d_f1;
                d_s += da * ag.d_s;
            }
        }
        R = gk * alpha[kk] + (1 - alpha[kk]) * R;
    }
}

}  // namespace detail

// Forward render of arbitrary rays with any RenderField (no gradients).
template <RenderField F>
std::vector<PixelResult> render_rays(const F& field, std::span<const TrainRay> rays, unsigned threads = 0,
                                     std::size_t chunk = 64) {
    std::vector<PixelResult> out(rays.size());
    const std::size_t chunks = (rays.size() + chunk - 1) / chunk;
    const double s = field.sharpness();
    parallel_for(0, chunks, threads, [&](std::size_t ci) {
        const std::size_t r0 = ci * chunk, r1 = std::min(rays.size(), r0 + chunk);
        std::vector<std::size_t> start{0};
        for (std::size_t r = r0; r < r1; ++r) start.push_back(start.back() + rays[r].ray.t.size());
        std::vector<Vec3f> pts(start.back()), dirs(start.back()), rgb(start.back());
        std::vector<float> sdf(start.back()), mask;
        for (std::size_t r = r0; r < r1; ++r) {
            const Ray& ray = rays[r].ray;
            for (std::size_t i = 0; i < ray.t.size(); ++i) {
                pts[start[r - r0] + i] = ray.origin + ray.t[i] * ray.direction;
                dirs[start[r - r0] + i] = ray.direction;
            }
        }
        detail::evaluate_field(field, pts, dirs, sdf, rgb, mask);
        for (std::size_t r = r0; r < r1; ++r) {
            const std::size_t k0 = start[r - r0], n = rays[r].ray.t.size();
            if (n < 2) {
                out[r] = {rays[r].background, 0.f, 0.f};
                continue;
            }
            out[r] = composite_samples(rays[r].ray.t, std::span<const float>(sdf).subspan(k0, n),
                                       std::span<const Vec3f>(rgb).subspan(k0, n),
                                       mask.empty() ? std::span<const float>{} : std::span<const float>(mask).subspan(k0, n), s,
                                       rays[r].background);
        }
    });
    return out;
}

// Renders `rays` with the trainable field and backpropagates the per-ray
// gradients returned by loss(ray_index, pixel) into `grad` (accumulated).
// loss is called exactly once per ray, possibly from several threads.
// Work is split into fixed chunks; per-worker partial gradients are summed in
// worker order, so results are reproducible for a given thread count.
template <typename Scalar, typename LossFn>
std::vector<PixelResult> render_backward(const BasicAvatarField<Scalar>& field, std::span<const TrainRay> rays,
                                         LossFn&& loss, std::span<double> grad, unsigned threads = 0,
                                         std::size_t chunk = 64) {
    using Field = BasicAvatarField<Scalar>;
    using Mat = typename Field::Mat;
    using V3 = typename Field::Vec3;
    require(grad.size() == static_cast<std::size_t>(field.param_count()), "render_backward: gradient size mismatch");
    std::vector<PixelResult> out(rays.size());
    const std::size_t chunks = (rays.size() + chunk - 1) / chunk;
    const double s = static_cast<double>(field.sharpness());
    const int G = field.geo_dim();
    const Aabb& dom = field.domain();

    std::mutex merge_mutex;
    std::vector<std::pair<std::size_t, AlignedVector<Scalar>>> partials;
    parallel_ranges(0, chunks, threads, [&](std::size_t lo, std::size_t hi) {
        AlignedVector<Scalar> local(grad.size(), Scalar(0));
        double d_log_s = 0;
        std::vector<double> alpha, trans, weight, d_sdf;
        std::vector<Eigen::Vector3d> d_rgb;
        for (std::size_t ci = lo; ci < hi; ++ci) {
            const std::size_t r0 = ci * chunk, r1 = std::min(rays.size(), r0 + chunk);
            std::vector<std::size_t> start{0};
            for (std::size_t r = r0; r < r1; ++r) start.push_back(start.back() + rays[r].ray.t.size());
            const auto total = static_cast<Eigen::Index>(start.back());
            std::vector<V3> pts(start.back());
            Mat dirs(total, 3);
            for (std::size_t r = r0; r < r1; ++r) {
                const Ray& ray = rays[r].ray;
                for (std::size_t i = 0; i < ray.t.size(); ++i) {
                    const std::size_t k = start[r - r0] + i;
                    pts[k] = dom.clamp(ray.origin + ray.t[i] * ray.direction).template cast<Scalar>();
                    dirs.row(static_cast<Eigen::Index>(k)) = ray.direction.template cast<Scalar>().transpose();
                }
            }
            typename Field::SdfBatch sb;
            field.sdf_forward(pts, sb);
            typename Field::ColorBatch cb;
            field.color_forward(sb.out.rightCols(G), dirs, cb);

            Mat d_out = Mat::Zero(total, 1 + G);
            Mat d_col = Mat::Zero(total, 3);
            double d_s = 0;
            for (std::size_t r = r0; r < r1; ++r) {
                const auto k0 = static_cast<Eigen::Index>(start[r - r0]);
                const int n = static_cast<int>(rays[r].ray.t.size());
                auto f = [&](int i) { return static_cast<double>(sb.out(k0 + i, 0)); };
                auto c = [&](int i) { return Eigen::Vector3d(cb.rgb.row(k0 + i).transpose().template cast<double>()); };
                out[r] = detail::composite_ray(n, f, c, rays[r].ray.t, s, rays[r].background, alpha, trans, weight);
                const RayGradient g = loss(r, out[r]);
                if (g.d_rgb.isZero() && g.d_opacity == 0) continue;
                d_sdf.resize(static_cast<std::size_t>(n));
                d_rgb.resize(static_cast<std::size_t>(n));
                detail::composite_ray_backward(n, f, c, s, rays[r].background, g, alpha, trans, weight, d_sdf, d_rgb, d_s);
                for (int i = 0; i < n; ++i) {
                    d_out(k0 + i, 0) = static_cast<Scalar>(d_sdf[static_cast<std::size_t>(i)]);
                    d_col.row(k0 + i) = d_rgb[static_cast<std::size_t>(i)].template cast<Scalar>().transpose();
                }
            }
            const Mat d_geo = field.color_backward(cb, d_col, local);
            if (G > 0) d_out.rightCols(G) = d_geo;
            field.sdf_backward(sb, d_out, local);
            d_log_s += s * d_s;
        }
        local[static_cast<std::size_t>(field.sharpness_offset())] += static_cast<Scalar>(d_log_s);
        std::lock_guard lock(merge_mutex);
        partials.emplace_back(lo, std::move(local));
    });
    std::sort(partials.begin(), partials.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [lo, part] : partials)
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += static_cast<double>(part[i]);
    return out;
}

// Adds weight * mean eikonal penalty over `points` to grad and returns the mean penalty.
template <typename Scalar>
double eikonal_backward(const BasicAvatarField<Scalar>& field, std::span<const Vec3d> points, double weight,
                        std::span<double> grad) {
    using V3 = typename BasicAvatarField<Scalar>::Vec3;
    require(!points.empty(), "eikonal_backward: no sample points");
    std::vector<V3> pts(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
        pts[i] = field.domain().clamp(points[i].cast<float>()).template cast<Scalar>();
    typename BasicAvatarField<Scalar>::SdfBatch b;
    field.sdf_forward(pts, b);
    const double n = static_cast<double>(points.size());
    if (weight == 0) return static_cast<double>(field.eikonal(b, 0, {})) / n;
    AlignedVector<Scalar> local(grad.size(), Scalar(0));
    const double total = static_cast<double>(field.eikonal(b, static_cast<Scalar>(weight / n), local));
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += static_cast<double>(local[i]);
    return total / n;
}

// Geometry-only view of a field: the color network is skipped (colors are 0).
template <typename F>
struct GeometryOnly {
    const F& field;
    double sharpness() const { return static_cast<double>(field.sharpness()); }
    void evaluate(std::span<const Vec3f> p, std::span<const Vec3f>, std::span<float> sdf, std::span<Vec3f> rgb) const {
        field.evaluate_sdf(p, sdf);
        std::fill(rgb.begin(), rgb.end(), Vec3f::Zero());
    }
};

inline RenderOutput to_images(const std::vector<PixelResult>& px, int width, int height, float background_epsilon = 1e-4f) {
    require(px.size() == static_cast<std::size_t>(width) * height, "to_images: pixel count mismatch");
    RenderOutput out{Image(width, height, 3), Image(width, height, 1), Image(width, height, 1),
                     std::vector<std::uint8_t>(px.size(), 0)};
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const auto& p = px[static_cast<std::size_t>(r) * width + c];
            out.rgb.set_rgb(r, c, {p.rgb.x(), p.rgb.y(), p.rgb.z()});
            out.opacity.at(r, c) = p.opacity;
            out.depth.at(r, c) = p.depth;
            out.background[static_cast<std::size_t>(r) * width + c] = p.opacity < background_epsilon;
        }
    return out;
}

// Renders the strided image of `cam` with samples confined to `box` (when given).
template <RenderField F>
RenderOutput render_view(const F& field, const Camera& cam, int stride, int samples, const Aabb* box,
                         const Image& background, unsigned threads = 0, std::mt19937_64* jitter = nullptr) {
    const auto rays = camera_rays(cam, stride, samples, background, jitter, box);
    return to_images(render_rays(field, std::span<const TrainRay>(rays), threads), cam.strided_width(stride),
                     cam.strided_height(stride));
}

}  // namespace rigfield
