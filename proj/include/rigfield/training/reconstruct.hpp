#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "rigfield/body/body_model.hpp"
#include "rigfield/field/avatar_field.hpp"
#include "rigfield/training/engine.hpp"
#include "rigfield/training/losses.hpp"
#include "rigfield/training/optimizer.hpp"
#include "rigfield/training/sampler.hpp"
#include "rigfield/training/targets.hpp"

namespace rigfield {

struct ReconstructConfig {
    int views = 50;
    int resolution = 96;
    int steps = 5000;
    int heldout_views = 8;
    int rays_per_step = 512;
    double edge_ray_fraction = 0.0;  // share of rays drawn from pixels on the silhouette boundary
    int samples = 48;
    int eikonal_uniform = 128;
    int eikonal_surface = 128;
    double eikonal_sigma = 0.02;
    double eikonal_weight = 0.1;
    AdamConfig adam;
    double final_lr_fraction = 1.0;  // learning rate decays exponentially to this fraction
    Vec3f albedo = Vec3f::Constant(0.7f);
    double distance = 2.1;  // body-box units, see box_camera
    double fov_y = 0.9;
    double box_margin = 0.03;  // fraction of the body height
    std::uint64_t seed = 0;
    unsigned threads = 0;

    void validate() const {
        require(views >= 1 && heldout_views >= 0, "reconstruct: need at least one view");
        require(resolution >= 2, "reconstruct: resolution must be at least 2");
        require(steps >= 0, "reconstruct: steps must be nonnegative");
        require(rays_per_step >= 1 && samples >= 2, "reconstruct: bad ray batch");
        require(edge_ray_fraction >= 0 && edge_ray_fraction <= 1, "reconstruct: edge_ray_fraction must lie in [0, 1]");
        require(eikonal_weight >= 0 && eikonal_sigma >= 0, "reconstruct: bad eikonal settings");
        require(final_lr_fraction > 0 && final_lr_fraction <= 1, "reconstruct: final_lr_fraction must lie in (0, 1]");
    }
};

struct ReconstructResult {
    AvatarField field;
    double heldout_psnr = 0;
    int steps = 0;
    double seconds = 0;
};

// Sample box for a rig: the body box grown by a margin and clipped to the field domain.
inline Aabb padded_box(const SceneBox& box, double margin, const Aabb& domain) {
    Aabb b{(box.lo.array() - margin).cast<float>().matrix(), (box.hi.array() + margin).cast<float>().matrix()};
    b.lo = b.lo.cwiseMax(domain.lo);
    b.hi = b.hi.cwiseMin(domain.hi);
    return b;
}

// Fixed training views: golden-angle azimuths, elevations spread over [-pi/5, pi/5].
inline std::vector<CameraDraw> reconstruction_views(int n, double distance) {
    std::vector<CameraDraw> v;
    for (int i = 0; i < n; ++i) {
        const double frac = std::fmod(i * 0.6180339887498949, 1.0);
        v.push_back({-M_PI / 5 + 2 * M_PI / 5 * frac, wrap_azimuth(i * 2.399963229728653), distance});
    }
    return v;
}

inline std::vector<CameraDraw> heldout_views(int n, double distance, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x5EEDF00Dull);
    std::uniform_real_distribution<double> el(-M_PI / 6, M_PI / 6), az(0, 2 * M_PI);
    std::vector<CameraDraw> v;
    for (int i = 0; i < n; ++i) {
        const double e = el(rng);
        v.push_back({e, az(rng), distance});
    }
    return v;
}

// Background color for one ray: white, black or N(0.5, 0.1) per channel, uniformly.
inline Vec3f random_background(std::mt19937_64& rng) {
    switch (sample_background_kind(rng)) {
        case BackgroundKind::White: return Vec3f::Ones();
        case BackgroundKind::Black: return Vec3f::Zero();
        case BackgroundKind::Noise: {
            std::normal_distribution<float> g(0.5f, 0.1f);
            const float r = g(rng), gg = g(rng), b = g(rng);
            return {r, gg, b};
        }
    }
    return Vec3f::Ones();
}

// Fits a field to flat-shaded renders of the canonical mesh (photometric L2 + Eikonal).
inline ReconstructResult reconstruct_template(const RiggedBodyModel& model, const FieldConfig& field_config,
                                              const ReconstructConfig& cfg,
                                              const std::function<void(const nlohmann::json&)>& log = {}) {
    cfg.validate();
    model.validate();
    const auto t_start = std::chrono::steady_clock::now();
    ReconstructResult res{AvatarField(field_config), 0, 0, 0};
    AvatarField& field = res.field;
    const SceneBoxes boxes = scene_boxes(model);
    const Aabb box = padded_box(boxes.body, cfg.box_margin * model.height(), field.domain());
    const MeshRaster raster = MeshRaster::of(model, false, cfg.albedo);

    std::vector<Camera> cams;
    for (const auto& d : reconstruction_views(cfg.views, cfg.distance))
        cams.push_back(box_camera(boxes.body, boxes.body, d, cfg.resolution, cfg.resolution, cfg.fov_y));
    const int R = cfg.resolution;
    std::vector<std::vector<std::uint8_t>> covered(cams.size());
    parallel_for(0, cams.size(), cfg.threads, [&](std::size_t v) {
        covered[v].resize(static_cast<std::size_t>(R) * R);
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < R; ++c) covered[v][static_cast<std::size_t>(r) * R + c] = raster.hit(cams[v], r, c).has_value();
    });
    // (view, pixel) pairs with a 4-neighbour of the other coverage
    std::vector<std::pair<std::size_t, int>> edges;
    for (std::size_t v = 0; v < cams.size(); ++v)
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < R; ++c) {
                const auto at = [&](int rr, int cc) { return covered[v][static_cast<std::size_t>(rr) * R + cc]; };
                const bool x = at(r, c);
                if ((r > 0 && at(r - 1, c) != x) || (r + 1 < R && at(r + 1, c) != x) || (c > 0 && at(r, c - 1) != x) ||
                    (c + 1 < R && at(r, c + 1) != x))
                    edges.emplace_back(v, r * R + c);
            }
    const std::size_t edge_rays =
        edges.empty() ? 0 : static_cast<std::size_t>(std::lround(cfg.edge_ray_fraction * cfg.rays_per_step));
    std::uniform_int_distribution<std::size_t> pick_edge(0, edges.empty() ? 0 : edges.size() - 1);

    Adam<float> adam(static_cast<std::size_t>(field.param_count()), cfg.adam);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick_view(0, cams.size() - 1);
    std::uniform_int_distribution<int> pick_pixel(0, R - 1);
    std::vector<double> grad(static_cast<std::size_t>(field.param_count()));
    std::vector<TrainRay> rays(static_cast<std::size_t>(cfg.rays_per_step));
    std::vector<Vec3f> target(rays.size());
    const Vec3f albedo = cfg.albedo;

    for (int step = 0; step < cfg.steps; ++step) {
        for (std::size_t i = 0; i < rays.size(); ++i) {
            std::size_t v;
            int r, c;
            if (i < edge_rays) {
                const auto& e = edges[pick_edge(rng)];
                v = e.first;
                r = e.second / R;
                c = e.second % R;
            } else {
                v = pick_view(rng);
                r = pick_pixel(rng);
                c = pick_pixel(rng);
            }
            rays[i].ray = box_ray(cams[v], r, c, cfg.samples, 1, box, &rng);
            rays[i].background = random_background(rng);
            target[i] = covered[v][static_cast<std::size_t>(r) * R + c] ? albedo : rays[i].background;
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        const double norm = 1.0 / (3.0 * static_cast<double>(rays.size()));
        std::vector<double> ray_loss(rays.size());
        render_backward(
            field, std::span<const TrainRay>(rays),
            [&](std::size_t i, const PixelResult& px) {
                const Eigen::Vector3d e = (px.rgb - target[i]).cast<double>();
                ray_loss[i] = e.squaredNorm() * norm;
                return RayGradient{2 * norm * e, 0.0};
            },
            std::span<double>(grad), cfg.threads);
        double photo = 0;
        for (double l : ray_loss) photo += l;
        double eik = 0;
        if (cfg.eikonal_weight > 0) {
            const auto pts = sample_eikonal_points(box, &raster.mesh(), cfg.eikonal_uniform, cfg.eikonal_surface,
                                                   cfg.eikonal_sigma, rng);
            eik = eikonal_backward(field, std::span<const Vec3d>(pts), cfg.eikonal_weight, std::span<double>(grad));
        }
        const double loss = photo + cfg.eikonal_weight * eik;
        adam.set_learning_rate(cfg.adam.learning_rate * std::pow(cfg.final_lr_fraction, double(step) / cfg.steps));
        if (!std::isfinite(loss)) throw TrainingError("template reconstruction diverged (loss is not finite)", step);
        for (double g : grad)
            if (!std::isfinite(g)) throw TrainingError("template reconstruction produced a non-finite gradient", step);
        adam.step(field.params(), grad);
        res.steps = step + 1;
        if (log)
            log({{"step", step}, {"loss", loss}, {"photometric", photo}, {"eikonal", eik},
                 {"sharpness", static_cast<double>(field.sharpness())}});
    }

    if (cfg.heldout_views > 0) {
        double mse_sum = 0;
        const Image white = Image::filled(R, R, {1, 1, 1});
        for (const auto& d : heldout_views(cfg.heldout_views, cfg.distance, cfg.seed)) {
            const Camera cam = box_camera(boxes.body, boxes.body, d, R, R, cfg.fov_y);
            const auto img = render_view(field, cam, 1, cfg.samples, &box, white, cfg.threads);
            mse_sum += mse(img.rgb, raster.render(cam, white, 1, cfg.threads).rgb);
        }
        const double m = mse_sum / cfg.heldout_views;
        res.heldout_psnr = m <= 0 ? 200.0 : -10.0 * std::log10(m);
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

}  // namespace rigfield
