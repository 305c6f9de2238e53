#pragma once

#include <concepts>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rigfield/core/parallel.hpp"
#include "rigfield/core/types.hpp"
#include "rigfield/io/image.hpp"
#include "rigfield/render/camera.hpp"
#include "rigfield/render/neus.hpp"

namespace rigfield {

// Anything that can be volume rendered as an SDF: batched evaluation of
// signed distance and radiance at sample points seen along directions.
template <typename F>
concept RenderField = requires(const F& f, std::span<const Vec3f> p, std::span<const Vec3f> d, std::span<float> sdf,
                               std::span<Vec3f> rgb) {
    { f.sharpness() } -> std::convertible_to<double>;
    f.evaluate(p, d, sdf, rgb);
};

// Field that additionally reports a per-sample density mask in [0, 1].
template <typename F>
concept MaskedRenderField = RenderField<F> && requires(const F& f, std::span<const Vec3f> p, std::span<const Vec3f> d,
                                                       std::span<float> sdf, std::span<Vec3f> rgb, std::span<float> mask) {
    f.evaluate_masked(p, d, sdf, rgb, mask);
};

enum class BackgroundKind { White, Black, Noise };

inline const char* to_string(BackgroundKind k) {
    switch (k) {
        case BackgroundKind::White: return "white";
        case BackgroundKind::Black: return "black";
        case BackgroundKind::Noise: return "noise";
    }
    return "?";
}

// White, black, or per-pixel Gaussian noise N(0.5, 0.1) per channel.
inline Image make_background(BackgroundKind kind, int width, int height, std::mt19937_64& rng) {
    switch (kind) {
        case BackgroundKind::White: return Image::filled(width, height, {1.f, 1.f, 1.f});
        case BackgroundKind::Black: return Image::filled(width, height, {0.f, 0.f, 0.f});
        case BackgroundKind::Noise: {
            Image img(width, height, 3);
            std::normal_distribution<float> g(0.5f, 0.1f);
            for (auto& v : img.data) v = g(rng);
            return img;
        }
    }
    throw PreconditionError("unknown background kind");
}

struct PixelResult {
    Vec3f rgb = Vec3f::Zero();
    float opacity = 0.f;
    float depth = 0.f;
};

struct RenderSettings {
    int samples = 96;
    int stride = 1;
    bool jitter = false;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0 = hardware concurrency
    float background_epsilon = 1e-4f;
};

struct RenderOutput {
    Image rgb;        // H x W x 3
    Image opacity;    // H x W
    Image depth;      // H x W, opacity-weighted expected t
    std::vector<std::uint8_t> background;  // 1 where opacity < background_epsilon
};

inline constexpr double kDepthEpsilon = 1e-8;

// Composites samples along one ray. Optional mask multiplies each sample's
// alpha (points with mask 0 carry no density).
//   rgb = sum w_i c_i + (1 - sum w_i) bg,  opacity = sum w_i,  depth = sum w_i t_i / max(sum w_i, eps)
inline PixelResult composite_samples(std::span<const float> t, std::span<const float> sdf, std::span<const Vec3f> rgb,
                                     std::span<const float> mask, double sharpness, const Vec3f& background) {
    auto alpha = neus::alphas(sdf, sharpness);
    if (!mask.empty())
        for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] *= mask[i];
    const auto w = neus::composite_weights(alpha);
    double acc = 0, depth = 0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        depth += w[i] * t[i];
        color += w[i] * rgb[i].cast<double>();
    }
    color += (1.0 - acc) * background.cast<double>();
    return {color.cast<float>(), static_cast<float>(acc), static_cast<float>(depth / std::max(acc, kDepthEpsilon))};
}

namespace detail {

template <RenderField F>
void evaluate_field(const F& field, std::span<const Vec3f> p, std::span<const Vec3f> d, std::span<float> sdf,
                    std::span<Vec3f> rgb, std::vector<float>& mask) {
    if constexpr (MaskedRenderField<F>) {
        mask.resize(p.size());
        field.evaluate_masked(p, d, sdf, rgb, mask);
    } else {
        mask.clear();
        field.evaluate(p, d, sdf, rgb);
    }
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ull) ^ (b * 0xC2B2AE3D27D4EB4Full);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace detail

template <RenderField F>
PixelResult render_pixel(const F& field, const Ray& ray, const Vec3f& background) {
    require(std::abs(ray.direction.norm() - 1.f) <= 1e-5f, "render_pixel: ray direction must be unit length");
    require(ray.t.size() >= 2, "render_pixel: need at least 2 samples");
    for (std::size_t i = 1; i < ray.t.size(); ++i)
        require(ray.t[i] > ray.t[i - 1], "render_pixel: sample parameters must increase strictly");
    const std::size_t n = ray.t.size();
    std::vector<Vec3f> pts(n), dirs(n, ray.direction), rgb(n);
    std::vector<float> sdf(n), mask;
    for (std::size_t i = 0; i < n; ++i) pts[i] = ray.origin + ray.t[i] * ray.direction;
    detail::evaluate_field(field, pts, dirs, sdf, rgb, mask);
    return composite_samples(ray.t, sdf, rgb, mask, field.sharpness(), background);
}

// Renders the strided pixel grid. `background` must have the strided size.
template <RenderField F>
RenderOutput render_image(const F& field, const Camera& cam, const RenderSettings& settings, const Image& background) {
    cam.validate();
    require(settings.stride >= 1, "render_image: stride must be positive");
    const int w = cam.strided_width(settings.stride), h = cam.strided_height(settings.stride);
    require(background.width == w && background.height == h && background.channels == 3,
            "render_image: background must match the strided image size");
    RenderOutput out{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1),
                     std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
    const double s = field.sharpness();
    const int n = settings.samples;
    parallel_for(0, static_cast<std::size_t>(h), settings.threads, [&](std::size_t row_index) {
        const int row = static_cast<int>(row_index);
        std::vector<Ray> rays;
        rays.reserve(static_cast<std::size_t>(w));
        for (int col = 0; col < w; ++col) {
            if (settings.jitter) {
                std::mt19937_64 rng(detail::mix_seed(settings.seed, static_cast<std::uint64_t>(row), static_cast<std::uint64_t>(col)));
                rays.push_back(sample_ray(cam, row, col, n, settings.stride, &rng));
            } else {
                rays.push_back(sample_ray(cam, row, col, n, settings.stride));
            }
        }
        const std::size_t total = static_cast<std::size_t>(w) * n;
        std::vector<Vec3f> pts(total), dirs(total), rgb(total);
        std::vector<float> sdf(total), mask;
        for (int col = 0; col < w; ++col)
            for (int i = 0; i < n; ++i) {
                const std::size_t k = static_cast<std::size_t>(col) * n + i;
                const Ray& r = rays[static_cast<std::size_t>(col)];
                pts[k] = r.origin + r.t[static_cast<std::size_t>(i)] * r.direction;
                dirs[k] = r.direction;
            }
        detail::evaluate_field(field, pts, dirs, sdf, rgb, mask);
        for (int col = 0; col < w; ++col) {
            const std::size_t k0 = static_cast<std::size_t>(col) * n;
            const Rgb b = background.rgb(row, col);
            const auto px = composite_samples(
                rays[static_cast<std::size_t>(col)].t, std::span<const float>(sdf).subspan(k0, n),
                std::span<const Vec3f>(rgb).subspan(k0, n),
                mask.empty() ? std::span<const float>{} : std::span<const float>(mask).subspan(k0, n), s,
                Vec3f(b.r, b.g, b.b));
            out.rgb.set_rgb(row, col, {px.rgb.x(), px.rgb.y(), px.rgb.z()});
            out.opacity.at(row, col) = px.opacity;
            out.depth.at(row, col) = px.depth;
            out.background[static_cast<std::size_t>(row) * w + col] = px.opacity < settings.background_epsilon;
        }
    });
    return out;
}

template <RenderField F>
RenderOutput render_image(const F& field, const Camera& cam, const RenderSettings& settings, const Rgb& background) {
    return render_image(field, cam, settings,
                        Image::filled(cam.strided_width(settings.stride), cam.strided_height(settings.stride), background));
}

// Background policy variant: draws the background from `kind` using settings.seed.
template <RenderField F>
RenderOutput render_image(const F& field, const Camera& cam, const RenderSettings& settings, BackgroundKind kind) {
    std::mt19937_64 rng(settings.seed);
    return render_image(field, cam, settings,
                        make_background(kind, cam.strided_width(settings.stride), cam.strided_height(settings.stride), rng));
}

// Bilinear resampling of a strided render back to full resolution. Strided
// pixel (r, c) sits at full-resolution pixel (r * stride, c * stride).
inline Image upsample(const Image& src, int stride, int width, int height) {
    Image dst(width, height, src.channels);
    for (int y = 0; y < height; ++y) {
        const double fy = std::min(static_cast<double>(y) / stride, static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, src.height - 1);
        const double ay = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::min(static_cast<double>(x) / stride, static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, src.width - 1);
            const double ax = fx - x0;
            for (int c = 0; c < src.channels; ++c) {
                const double v = (1 - ay) * ((1 - ax) * src.at(y0, x0, c) + ax * src.at(y0, x1, c)) +
                                 ay * ((1 - ax) * src.at(y1, x0, c) + ax * src.at(y1, x1, c));
                dst.at(y, x, c) = static_cast<float>(v);
            }
        }
    }
    return dst;
}

// Transpose of upsample(): distributes full-resolution gradients back to the strided grid.
inline Image upsample_transpose(const Image& grad, int stride, int src_width, int src_height) {
    Image out(src_width, src_height, grad.channels);
    for (int y = 0; y < grad.height; ++y) {
        const double fy = std::min(static_cast<double>(y) / stride, static_cast<double>(src_height - 1));
        const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, src_height - 1);
        const double ay = fy - y0;
        for (int x = 0; x < grad.width; ++x) {
            const double fx = std::min(static_cast<double>(x) / stride, static_cast<double>(src_width - 1));
            const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, src_width - 1);
            const double ax = fx - x0;
            for (int c = 0; c < grad.channels; ++c) {
                const double g = grad.at(y, x, c);
                out.at(y0, x0, c) += static_cast<float>((1 - ay) * (1 - ax) * g);
                out.at(y0, x1, c) += static_cast<float>((1 - ay) * ax * g);
                out.at(y1, x0, c) += static_cast<float>(ay * (1 - ax) * g);
                out.at(y1, x1, c) += static_cast<float>(ay * ax * g);
            }
        }
    }
    return out;
}

}  // namespace rigfield
