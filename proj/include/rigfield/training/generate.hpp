#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rigfield/body/body_model.hpp"
#include "rigfield/field/avatar_field.hpp"
#include "rigfield/guidance/oracle.hpp"
#include "rigfield/guidance/prompt.hpp"
#include "rigfield/training/engine.hpp"
#include "rigfield/training/losses.hpp"
#include "rigfield/training/optimizer.hpp"
#include "rigfield/training/reconstruct.hpp"
#include "rigfield/training/sampler.hpp"
#include "rigfield/training/targets.hpp"

namespace rigfield {

struct StageConfig {
    std::string name;
    int resolution = 64;
    int epochs = 40;
    int body_captures = 100;
    int head_captures = 20;
};

struct GenerationConfig {
    StageConfig coarse{"coarse", 64, 40, 100, 20};
    StageConfig fine{"fine", 128, 10, 100, 50};
    int oracle_size = 128;  // camera resolution handed to the oracle
    int samples = 32;
    LossWeights weights;
    AdamConfig adam;
    CameraSampler sampler;
    FaceBoxSettings face_box;
    double box_margin = 0.03;  // fraction of the body height
    int eikonal_uniform = 64;
    int eikonal_surface = 64;
    double eikonal_sigma = 0.02;
    double guidance_scale = 100.0;
    int timestep_min = 20;
    int timestep_max = 980;
    nlohmann::json weighting = {{"mode", "constant"}};
    bool freeze_geometry = false;
    int max_consecutive_skips = 10;
    std::vector<CameraDraw> camera_pool;       // non-empty: cycled instead of sampled
    std::optional<BackgroundKind> background;  // fixed instead of random
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::string checkpoint_dir;
    std::string diagnostics_path;

    void validate() const {
        for (const StageConfig* s : {&coarse, &fine}) {
            require(s->resolution >= 2 && s->epochs >= 0 && s->body_captures >= 0 && s->head_captures >= 0,
                    "generation: bad " + s->name + " stage settings");
            require(oracle_size % s->resolution == 0,
                    "generation: oracle size must be a multiple of the " + s->name + " resolution");
        }
        require(fine.resolution == 2 * coarse.resolution, "generation: fine resolution must double the coarse one");
        require(samples >= 2, "generation: need at least 2 samples per ray");
        weights.validate();
        require(max_consecutive_skips >= 0, "generation: max_consecutive_skips must be nonnegative");
    }

    // lambda of the mock oracle when weights.mock is not set
    double mock_lambda() const { return weights.mock > 0 ? weights.mock : 1.0 / (double(oracle_size) * oracle_size); }
};

// Shuffled body/face plan for one epoch; counts match the quotas exactly.
inline std::vector<BodyPart> capture_plan(const StageConfig& s, std::mt19937_64& rng) {
    std::vector<BodyPart> plan(static_cast<std::size_t>(s.body_captures), BodyPart::Body);
    plan.insert(plan.end(), static_cast<std::size_t>(s.head_captures), BodyPart::Face);
    std::shuffle(plan.begin(), plan.end(), rng);
    return plan;
}

struct EpochReport {
    std::string stage;
    int epoch = 0;
    int body_renders = 0;
    int face_renders = 0;
    int skipped = 0;
};

struct GenerationReport {
    std::vector<EpochReport> epochs;
    int steps = 0;
    int skipped = 0;
    double seconds = 0;
};

struct GenerationHooks {
    std::function<void(const nlohmann::json&)> on_step;
    std::function<void(const StageConfig&, const AvatarField&)> on_stage_end;
};

// Mock-oracle targets: the textured mesh ray cast from the oracle's camera over
// the render's background.
inline MockOracle::TargetFn raster_targets(std::shared_ptr<const MeshRaster> raster, unsigned threads = 0) {
    return [raster, threads](const GuidanceView& v) { return raster->render(v.camera, v.background, 1, threads).rgb; };
}

// One optimization step; exposed so tests can drive single steps.
struct GenerationStepResult {
    bool skipped = false;
    std::string error;
    double silhouette = 0;
    double eikonal = 0;
    double guidance_loss = std::numeric_limits<double>::quiet_NaN();
    nlohmann::json oracle_diagnostics;
};

class GenerationSession {
public:
    GenerationSession(const AvatarField& template_field, const RiggedBodyModel& model, GenerationConfig cfg)
        : cfg_(std::move(cfg)), template_(template_field), field_(template_field),
          boxes_(scene_boxes(model, cfg_.face_box)), raster_(MeshRaster::of(model, false)) {
        cfg_.validate();
        const double margin = cfg_.box_margin * model.height();
        sample_box_[0] = padded_box(boxes_.body, margin, field_.domain());
        sample_box_[1] = padded_box(boxes_.face, margin, field_.domain());
    }

    const GenerationConfig& config() const { return cfg_; }
    const AvatarField& field() const { return field_; }
    AvatarField& field() { return field_; }
    const AvatarField& template_field() const { return template_; }
    const SceneBoxes& boxes() const { return boxes_; }
    const Aabb& sample_box(BodyPart p) const { return sample_box_[p == BodyPart::Body ? 0 : 1]; }

    Camera camera(BodyPart part, const CameraDraw& d) const {
        return box_camera(boxes_[part], boxes_.body, d, cfg_.oracle_size, cfg_.oracle_size, cfg_.sampler.fov_y);
    }

    void begin_stage() { adam_ = std::make_unique<Adam<float>>(static_cast<std::size_t>(field_.param_count()), cfg_.adam); freeze(); }

    GenerationStepResult step(const StageConfig& stage, BodyPart part, const CameraDraw& draw, BackgroundKind bg_kind,
                              GuidanceOracle& oracle, const std::string& prompt, std::uint64_t step_seed, int step_index) {
        if (!adam_) begin_stage();
        std::mt19937_64 rng(step_seed);
        const int stride = cfg_.oracle_size / stage.resolution;
        const Camera cam = camera(part, draw);
        const int w = cam.strided_width(stride), h = cam.strided_height(stride);
        const Image bg = make_background(bg_kind, w, h, rng);
        const auto rays = camera_rays(cam, stride, cfg_.samples, bg, &rng, &sample_box(part));
        const std::span<const TrainRay> ray_span(rays);

        const auto current = to_images(render_rays(field_, ray_span, cfg_.threads), w, h);
        const auto tmpl = to_images(render_rays(GeometryOnly<AvatarField>{template_}, ray_span, cfg_.threads), w, h);

        GuidanceView view{cam, {}, upsample(bg, stride, cfg_.oracle_size, cfg_.oracle_size)};
        view.context.prompt = augment_prompt(prompt, part, draw.azimuth);
        view.context.view = view_for_azimuth(draw.azimuth);
        view.context.part = part;
        view.context.guidance_scale = cfg_.guidance_scale;
        view.context.timestep_min = cfg_.timestep_min;
        view.context.timestep_max = cfg_.timestep_max;
        view.context.weighting = cfg_.weighting;
        view.context.seed = step_seed;

        GenerationStepResult out;
        GuidanceGradient guidance;
        try {
            guidance = oracle.gradient(upsample(current.rgb, stride, cfg_.oracle_size, cfg_.oracle_size), view);
        } catch (const TransportError& e) {
            out.skipped = true;
            out.error = e.what();
        } catch (const ProtocolError& e) {
            out.skipped = true;
            out.error = e.what();
        }
        out.silhouette = silhouette_loss(tmpl.opacity, current.opacity);
        if (out.skipped) return out;
        require(guidance.gradient.width == cfg_.oracle_size && guidance.gradient.height == cfg_.oracle_size &&
                    guidance.gradient.channels == 3,
                "oracle returned a gradient of the wrong size");
        out.oracle_diagnostics = guidance.diagnostics;
        if (guidance.diagnostics.contains("loss")) out.guidance_loss = guidance.diagnostics["loss"].get<double>();

        const Image g_stage = upsample_transpose(guidance.gradient, stride, w, h);
        const Image g_sil = silhouette_gradient(tmpl.opacity, current.opacity, cfg_.weights.silhouette);
        grad_.assign(static_cast<std::size_t>(field_.param_count()), 0.0);
        render_backward(
            field_, ray_span,
            [&](std::size_t i, const PixelResult&) {
                const int r = static_cast<int>(i) / w, c = static_cast<int>(i) % w;
                const Rgb g = g_stage.rgb(r, c);
                return RayGradient{Eigen::Vector3d(g.r, g.g, g.b), static_cast<double>(g_sil.at(r, c))};
            },
            std::span<double>(grad_), cfg_.threads);
        const auto pts = sample_eikonal_points(sample_box(part), &raster_.mesh(), cfg_.eikonal_uniform, cfg_.eikonal_surface,
                                               cfg_.eikonal_sigma, rng);
        out.eikonal = eikonal_backward(field_, std::span<const Vec3d>(pts), cfg_.weights.eikonal, std::span<double>(grad_));
        const double total = (std::isnan(out.guidance_loss) ? 0.0 : out.guidance_loss) +
                              cfg_.weights.silhouette * out.silhouette + cfg_.weights.eikonal * out.eikonal;
        if (!std::isfinite(total)) throw TrainingError("generation diverged (loss is not finite)", step_index);
        for (double g : grad_)
            if (!std::isfinite(g)) throw TrainingError("generation produced a non-finite gradient", step_index);
        adam_->step(field_.params(), grad_);
        return out;
    }

private:
    void freeze() {
        if (!cfg_.freeze_geometry) return;
        for (const auto& s : field_.layout())
            if (is_geometry(s.group)) adam_->freeze(s.offset, s.size());
    }

    GenerationConfig cfg_;
    AvatarField template_;
    AvatarField field_;
    SceneBoxes boxes_;
    MeshRaster raster_;
    Aabb sample_box_[2];
    std::unique_ptr<Adam<float>> adam_;
    std::vector<double> grad_;
};

inline std::string stage_banner(const GenerationConfig& c) {
    return "stages: " + c.coarse.name + " " + std::to_string(c.coarse.resolution) + "x" + std::to_string(c.coarse.resolution) +
           " -> " + c.fine.name + " " + std::to_string(c.fine.resolution) + "x" + std::to_string(c.fine.resolution) +
           ", epochs " + std::to_string(c.coarse.epochs) + "/" + std::to_string(c.fine.epochs) + ", captures per epoch " +
           std::to_string(c.coarse.body_captures) + "+" + std::to_string(c.coarse.head_captures) + " / " +
           std::to_string(c.fine.body_captures) + "+" + std::to_string(c.fine.head_captures);
}

// Coarse stage then fine stage. The optimizer starts fresh at each stage.
// Returns the generated field; `report` (optional) receives per-epoch capture counts.
inline AvatarField run_generation(const AvatarField& template_field, GuidanceOracle& oracle, const std::string& prompt,
                                  const RiggedBodyModel& model, const GenerationConfig& cfg,
                                  const GenerationHooks& hooks = {}, GenerationReport* report = nullptr) {
    const auto t_start = std::chrono::steady_clock::now();
    GenerationSession session(template_field, model, cfg);
    GenerationReport rep;
    std::mt19937_64 rng(cfg.seed);
    std::ofstream diag;
    if (!cfg.diagnostics_path.empty()) {
        diag.open(cfg.diagnostics_path);
        if (!diag) throw Error("cannot open diagnostics log '" + cfg.diagnostics_path + "'");
    }
    if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
    int step_index = 0, consecutive_skips = 0;
    std::size_t pool_cursor = 0;
    for (const StageConfig* stage : {&cfg.coarse, &cfg.fine}) {
        session.begin_stage();
        for (int epoch = 0; epoch < stage->epochs; ++epoch) {
            EpochReport er{stage->name, epoch, 0, 0, 0};
            for (BodyPart part : capture_plan(*stage, rng)) {
                const CameraDraw draw =
                    cfg.camera_pool.empty() ? cfg.sampler.draw(rng) : cfg.camera_pool[pool_cursor++ % cfg.camera_pool.size()];
                const BackgroundKind bg = cfg.background ? *cfg.background : sample_background_kind(rng);
                const std::uint64_t step_seed = rng();
                const auto t0 = std::chrono::steady_clock::now();
                const auto r = session.step(*stage, part, draw, bg, oracle, prompt, step_seed, step_index);
                const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                (part == BodyPart::Body ? er.body_renders : er.face_renders)++;
                if (r.skipped) {
                    ++er.skipped;
                    ++rep.skipped;
                    if (++consecutive_skips > cfg.max_consecutive_skips)
                        throw TrainingError("guidance oracle failed " + std::to_string(consecutive_skips) +
                                                " consecutive steps: " + r.error,
                                            step_index);
                } else {
                    consecutive_skips = 0;
                }
                nlohmann::json line = {{"step", step_index},
                                       {"stage", stage->name},
                                       {"epoch", epoch},
                                       {"box", to_string(part)},
                                       {"camera", draw},
                                       {"background", to_string(bg)},
                                       {"skipped", r.skipped},
                                       {"losses", {{"silhouette", r.silhouette}, {"eikonal", r.eikonal}}},
                                       {"ms", ms}};
                if (!std::isnan(r.guidance_loss)) line["losses"]["guidance"] = r.guidance_loss;
                if (r.skipped) line["error"] = r.error;
                else line["oracle"] = r.oracle_diagnostics;
                if (diag) diag << line.dump() << '\n';
                if (hooks.on_step) hooks.on_step(line);
                ++step_index;
            }
            rep.epochs.push_back(er);
        }
        if (!cfg.checkpoint_dir.empty())
            session.field().save((std::filesystem::path(cfg.checkpoint_dir) / (stage->name + ".ckpt")).string());
        if (hooks.on_stage_end) hooks.on_stage_end(*stage, session.field());
    }
    rep.steps = step_index;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (report) *report = rep;
    return session.field();
}

// Comparison of a generated field against targets and the template over fixed cameras.
struct GenerationScore {
    double psnr = 0;
    double min_iou = 1;
    double mean_iou = 1;
};

inline GenerationScore score_generation(const AvatarField& field, const AvatarField& template_field,
                                        const MeshRaster& targets, const GenerationSession& session,
                                        const std::vector<std::pair<BodyPart, CameraDraw>>& views, int resolution,
                                        unsigned threads = 0) {
    GenerationScore s;
    const int stride = session.config().oracle_size / resolution;
    double mse_sum = 0, iou_sum = 0;
    for (const auto& [part, d] : views) {
        const Camera cam = session.camera(part, d);
        const int w = cam.strided_width(stride), h = cam.strided_height(stride);
        const Image white = Image::filled(w, h, {1, 1, 1});
        const auto a = render_view(field, cam, stride, session.config().samples, &session.sample_box(part), white, threads);
        const auto t = render_view(GeometryOnly<AvatarField>{template_field}, cam, stride, session.config().samples,
                                   &session.sample_box(part), white, threads);
        mse_sum += mse(a.rgb, targets.render(cam, white, stride, threads).rgb);
        const double iou = mask_iou(a.opacity, t.opacity);
        iou_sum += iou;
        s.min_iou = std::min(s.min_iou, iou);
    }
    const double m = mse_sum / static_cast<double>(views.size());
    s.psnr = m <= 0 ? 200.0 : -10.0 * std::log10(m);
    s.mean_iou = iou_sum / static_cast<double>(views.size());
    return s;
}

}  // namespace rigfield
