#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rigfield/articulation/articulation.hpp"
#include "rigfield/body/synthetic.hpp"
#include "rigfield/render/composite.hpp"
#include "rigfield/training/generate.hpp"

using namespace rigfield;
namespace fs = std::filesystem;

namespace {

// Bad command line or missing input file: exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RiggedBodyModel open_rig(const std::string& spec) {
    if (fs::exists(spec)) return load_rig(spec);
    if (synthetic::is_builtin(spec)) return synthetic::builtin(spec);
    throw UsageError("rig file not found: " + spec);
}

AvatarField open_checkpoint(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
    return AvatarField::load(path);
}

void ensure_parent(const std::string& path) {
    const fs::path p = fs::path(path).parent_path();
    if (!p.empty()) fs::create_directories(p);
}

Eigen::VectorXd parse_beta(const std::string& text, int count) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) v.push_back(std::stod(item));
    if (v.empty()) v.assign(static_cast<std::size_t>(count), 0.0);
    if (static_cast<int>(v.size()) != count)
        throw UsageError("beta needs " + std::to_string(count) + " comma-separated values, got " + std::to_string(v.size()));
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

BackgroundKind parse_background(const std::string& s) {
    if (s == "white") return BackgroundKind::White;
    if (s == "black") return BackgroundKind::Black;
    if (s == "noise") return BackgroundKind::Noise;
    throw UsageError("unknown background '" + s + "' (white, black or noise)");
}

SceneBox box_of(const std::vector<Vec3d>& verts) {
    SceneBox b{Vec3d::Constant(1e300), Vec3d::Constant(-1e300)};
    for (const auto& v : verts) {
        b.lo = b.lo.cwiseMin(v);
        b.hi = b.hi.cwiseMax(v);
    }
    return b;
}

struct ViewOptions {
    double azimuth = M_PI;
    double elevation = 0;
    double distance = 2.1;
    int resolution = 128;
    int samples = 96;
    std::string box = "body";
    std::string background = "white";

    void add(CLI::App* app) {
        app->add_option("--azimuth", azimuth, "camera azimuth in radians (pi = front)")->capture_default_str();
        app->add_option("--elevation", elevation, "camera elevation in radians")->capture_default_str();
        app->add_option("--distance", distance, "camera distance in body-box units")->capture_default_str();
        app->add_option("--res", resolution, "image width and height")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--samples", samples, "samples per ray")->capture_default_str()->check(CLI::Range(2, 4096));
        app->add_option("--box", box, "camera box")->capture_default_str()->check(CLI::IsMember({"body", "face"}));
        app->add_option("--background", background, "white, black or noise")
            ->capture_default_str()
            ->check(CLI::IsMember({"white", "black", "noise"}));
    }

    Camera camera(const SceneBoxes& boxes) const {
        const BodyPart part = box == "face" ? BodyPart::Face : BodyPart::Body;
        return box_camera(boxes[part], boxes.body, {elevation, azimuth, distance}, resolution, resolution, 0.9);
    }

    RenderSettings settings(std::uint64_t seed, unsigned threads) const {
        RenderSettings s;
        s.samples = samples;
        s.seed = seed;
        s.threads = threads;
        return s;
    }

    Image backdrop(std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        return make_background(parse_background(background), resolution, resolution, rng);
    }
};

struct Common {
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "random seed")->capture_default_str();
    app->add_option("--threads", c.threads, "worker threads (0 = all cores)")->capture_default_str();
}

// ---- subcommands ---------------------------------------------------------------

struct MakeRig {
    std::string name = "test_rig", out;
    void run() const {
        if (!synthetic::is_builtin(name)) throw UsageError("unknown built-in rig '" + name + "'");
        ensure_parent(out);
        save_rig(out, synthetic::builtin(name));
        std::cout << "wrote " << out << "\n";
    }
};

struct Reconstruct {
    Common common;
    std::string rig = "test_rig", out;
    ReconstructConfig rc;
    FieldConfig fc;
    std::string log_path;

    Reconstruct() {
        fc.encoding.num_levels = 8;
        fc.encoding.log2_table_size = 15;
        fc.sdf_hidden = 32;
        fc.color_hidden = 32;
    }

    void add(CLI::App* app) {
        add_common(app, common);
        app->add_option("--rig", rig, "rig file or built-in name (test_rig, capsule, chain3)")->capture_default_str();
        app->add_option("--out", out, "output checkpoint")->required();
        app->add_option("--steps", rc.steps, "optimization steps")->capture_default_str()->check(CLI::NonNegativeNumber);
        app->add_option("--res", rc.resolution, "training view resolution")->capture_default_str();
        app->add_option("--views", rc.views, "number of training views")->capture_default_str();
        app->add_option("--heldout", rc.heldout_views, "held-out views for the PSNR report")->capture_default_str();
        app->add_option("--rays", rc.rays_per_step, "rays per step")->capture_default_str();
        app->add_option("--samples", rc.samples, "samples per ray")->capture_default_str();
        app->add_option("--lambda-eik", rc.eikonal_weight, "Eikonal weight")->capture_default_str();
        app->add_option("--lr", rc.adam.learning_rate, "learning rate")->capture_default_str();
        app->add_option("--lr-final", rc.final_lr_fraction, "final learning rate as a fraction of --lr")->capture_default_str();
        app->add_option("--edge-rays", rc.edge_ray_fraction, "share of rays on silhouette boundaries")->capture_default_str();
        app->add_option("--levels", fc.encoding.num_levels, "hash grid levels")->capture_default_str();
        app->add_option("--table-log2", fc.encoding.log2_table_size, "log2 of the hash table size")->capture_default_str();
        app->add_option("--hidden", fc.sdf_hidden, "hidden width of both networks")->capture_default_str();
        app->add_option("--log", log_path, "per-step JSONL log");
    }

    void run() {
        const RiggedBodyModel model = open_rig(rig);
        rc.seed = common.seed;
        rc.threads = common.threads;
        fc.color_hidden = fc.sdf_hidden;
        fc.seed = common.seed;
        std::ofstream log;
        if (!log_path.empty()) {
            ensure_parent(log_path);
            log.open(log_path);
        }
        const auto res = reconstruct_template(model, fc, rc, [&](const nlohmann::json& j) {
            if (log) log << j.dump() << '\n';
            const int s = j["step"].get<int>();
            if ((s + 1) % 500 == 0) std::cerr << "step " << s + 1 << " loss " << j["loss"].get<double>() << "\n";
        });
        ensure_parent(out);
        res.field.save(out);
        std::cout << "steps " << res.steps << " heldout_psnr " << res.heldout_psnr << " seconds " << res.seconds << "\n";
        std::cout << "wrote " << out << "\n";
    }
};

struct Generate {
    Common common;
    std::string checkpoint, rig = "test_rig", prompt = "a person", out, oracle = "mock", endpoint;
    GenerationConfig gc;
    double mock_lambda = -1;
    int retries = 3;
    bool dry_run = false;

    void add(CLI::App* app) {
        add_common(app, common);
        app->add_option("--checkpoint", checkpoint, "template checkpoint N0")->required();
        app->add_option("--rig", rig, "rig file or built-in name")->capture_default_str();
        app->add_option("--prompt", prompt, "text prompt")->capture_default_str();
        app->add_option("--out", out, "output checkpoint")->required();
        app->add_option("--oracle", oracle, "mock or remote")->capture_default_str()->check(CLI::IsMember({"mock", "remote"}));
        app->add_option("--endpoint", endpoint, "service URL for the remote oracle");
        app->add_option("--retries", retries, "attempts per request to the remote oracle")->capture_default_str();
        app->add_option("--coarse-res", gc.coarse.resolution, "coarse render resolution (fine is twice this)")->capture_default_str();
        app->add_option("--coarse-epochs", gc.coarse.epochs, "coarse epochs")->capture_default_str();
        app->add_option("--fine-epochs", gc.fine.epochs, "fine epochs")->capture_default_str();
        app->add_option("--coarse-body", gc.coarse.body_captures, "coarse body captures per epoch")->capture_default_str();
        app->add_option("--coarse-head", gc.coarse.head_captures, "coarse head captures per epoch")->capture_default_str();
        app->add_option("--fine-body", gc.fine.body_captures, "fine body captures per epoch")->capture_default_str();
        app->add_option("--fine-head", gc.fine.head_captures, "fine head captures per epoch")->capture_default_str();
        app->add_option("--oracle-size", gc.oracle_size, "oracle input size")->capture_default_str();
        app->add_option("--samples", gc.samples, "samples per ray")->capture_default_str();
        app->add_option("--lambda-sil", gc.weights.silhouette, "silhouette weight")->capture_default_str();
        app->add_option("--lambda-eik", gc.weights.eikonal, "Eikonal weight")->capture_default_str();
        app->add_option("--mock-lambda", mock_lambda, "mock oracle scale (default 1 / oracle pixels)");
        app->add_option("--guidance-scale", gc.guidance_scale, "classifier-free guidance scale")->capture_default_str();
        app->add_option("--lr", gc.adam.learning_rate, "learning rate")->capture_default_str();
        app->add_flag("--freeze-geometry", gc.freeze_geometry, "keep the SDF network fixed");
        app->add_option("--checkpoint-dir", gc.checkpoint_dir, "directory for per-stage checkpoints");
        app->add_option("--diagnostics", gc.diagnostics_path, "per-step JSONL diagnostics");
        app->add_flag("--dry-run", dry_run, "print the stage schedule and exit");
    }

    void run() {
        const AvatarField n0 = open_checkpoint(checkpoint);
        const RiggedBodyModel model = open_rig(rig);
        gc.fine.resolution = 2 * gc.coarse.resolution;
        gc.seed = common.seed;
        gc.threads = common.threads;
        if (mock_lambda > 0) gc.weights.mock = mock_lambda;
        gc.validate();
        std::cout << stage_banner(gc) << std::endl;
        if (dry_run) return;

        std::unique_ptr<GuidanceOracle> guide;
        if (oracle == "remote") {
            if (endpoint.empty()) throw UsageError("--oracle remote needs --endpoint");
            RetryPolicy policy;
            policy.attempts = retries;
            RemoteSdsClient client(endpoint, policy);
            const auto health = client.health();
            std::cout << "oracle: remote " << endpoint << " " << health.dump() << std::endl;
            guide = std::make_unique<RemoteOracle>(client);
        } else {
            auto raster = std::make_shared<const MeshRaster>(MeshRaster::of(model, true));
            guide = std::make_unique<MockOracle>(raster_targets(raster, gc.threads), gc.mock_lambda());
            std::cout << "oracle: mock, lambda " << gc.mock_lambda() << std::endl;
        }
        GenerationHooks hooks;
        hooks.on_step = [](const nlohmann::json& j) {
            const int s = j["step"].get<int>();
            if ((s + 1) % 100 == 0) std::cerr << "step " << s + 1 << " " << j["losses"].dump() << "\n";
        };
        hooks.on_stage_end = [](const StageConfig& s, const AvatarField&) { std::cout << "finished " << s.name << std::endl; };
        GenerationReport rep;
        const AvatarField result = run_generation(n0, *guide, prompt, model, gc, hooks, &rep);
        ensure_parent(out);
        result.save(out);
        std::cout << "steps " << rep.steps << " skipped " << rep.skipped << " seconds " << rep.seconds << "\n";
        std::cout << "wrote " << out << "\n";
    }
};

void write_depth(const std::string& path, const RenderOutput& img) {
    ensure_parent(path);
    if (fs::path(path).extension() == ".png") {
        // normalized over covered pixels, near = bright
        float lo = 1e30f, hi = -1e30f;
        for (std::size_t i = 0; i < img.depth.data.size(); ++i)
            if (!img.background[i]) {
                lo = std::min(lo, img.depth.data[i]);
                hi = std::max(hi, img.depth.data[i]);
            }
        Image g(img.depth.width, img.depth.height, 1);
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] = img.background[i] || hi <= lo ? 0.f : 1.f - 0.8f * (img.depth.data[i] - lo) / (hi - lo);
        write_png(path, g);
    } else {
        write_float_map(path, img.depth);
    }
}

struct Render {
    Common common;
    std::string checkpoint, rig = "test_rig", out, depth;
    ViewOptions view;

    void add(CLI::App* app) {
        add_common(app, common);
        app->add_option("--checkpoint", checkpoint, "field checkpoint")->required();
        app->add_option("--rig", rig, "rig that frames the camera")->capture_default_str();
        app->add_option("--out", out, "output PNG")->required();
        app->add_option("--depth", depth, "also write expected depth (.png preview, otherwise float map)");
        view.add(app);
    }

    void run() const {
        const AvatarField field = open_checkpoint(checkpoint);
        const RiggedBodyModel model = open_rig(rig);
        const Camera cam = view.camera(scene_boxes(model));
        const RenderOutput img = render_image(field, cam, view.settings(common.seed, common.threads), view.backdrop(common.seed));
        ensure_parent(out);
        write_png(out, img.rgb);
        if (!depth.empty()) write_depth(depth, img);
        std::cout << "wrote " << out << "\n";
    }
};

std::string frame_name(const std::string& dir, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d.png", i);
    return (fs::path(dir) / buf).string();
}

// Renders the canonical field deformed to `config`, framed by the canonical body box.
RenderOutput render_posed(const AvatarField& field, const RiggedBodyModel& model, const BodyConfiguration& config,
                          const ViewOptions& view, const Common& common, const MaskSettings& mask) {
    const ArticulatedTarget target(model, config, mask);
    SceneBoxes boxes = scene_boxes(model);
    const SceneBox posed = box_of(target.mesh().vertices);
    const Vec3d shift = posed.center() - boxes.body.center();
    boxes.body.lo += shift;
    boxes.body.hi += shift;
    boxes.face.lo += shift;
    boxes.face.hi += shift;
    return render_articulated(field, target, view.camera(boxes), view.settings(common.seed, common.threads),
                              view.backdrop(common.seed));
}

struct Animate {
    Common common;
    std::string checkpoint, rig = "test_rig", poses, out_dir;
    ViewOptions view;
    MaskSettings mask;

    void add(CLI::App* app) {
        add_common(app, common);
        app->add_option("--checkpoint", checkpoint, "field checkpoint")->required();
        app->add_option("--rig", rig, "rig file or built-in name")->capture_default_str();
        app->add_option("--poses", poses, "pose sequence (JSON array of frames)")->required();
        app->add_option("--out-dir", out_dir, "output directory for frame_NNNN.png")->required();
        app->add_option("--delta", mask.delta, "mask distance (<= 0: 5% of the body height)");
        app->add_flag("--smooth-mask", mask.smooth, "linear mask ramp instead of a hard cut");
        view.add(app);
    }

    void run() const {
        const AvatarField field = open_checkpoint(checkpoint);
        const RiggedBodyModel model = open_rig(rig);
        if (!fs::exists(poses)) throw UsageError("pose sequence not found: " + poses);
        const auto frames = load_pose_sequence(poses, model);
        fs::create_directories(out_dir);
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const auto img = render_posed(field, model, frames[i].config, view, common, mask);
            write_png(frame_name(out_dir, static_cast<int>(i)), img.rgb);
        }
        std::cout << "wrote " << frames.size() << " frames to " << out_dir << "\n";
    }
};

struct Reshape {
    Common common;
    std::string checkpoint, rig = "test_rig", beta_a, beta_b, out_dir;
    int frames = 8;
    ViewOptions view;
    MaskSettings mask;

    void add(CLI::App* app) {
        add_common(app, common);
        app->add_option("--checkpoint", checkpoint, "field checkpoint")->required();
        app->add_option("--rig", rig, "rig file or built-in name")->capture_default_str();
        app->add_option("--beta-a", beta_a, "start shape, comma separated (empty = zeros)");
        app->add_option("--beta-b", beta_b, "end shape, comma separated (empty = zeros)");
        app->add_option("--frames", frames, "interpolation frames")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--out-dir", out_dir, "output directory for frame_NNNN.png")->required();
        app->add_option("--delta", mask.delta, "mask distance (<= 0: 5% of the body height)");
        view.add(app);
    }

    void run() const {
        const AvatarField field = open_checkpoint(checkpoint);
        const RiggedBodyModel model = open_rig(rig);
        const Eigen::VectorXd a = parse_beta(beta_a, model.shape_count()), b = parse_beta(beta_b, model.shape_count());
        fs::create_directories(out_dir);
        for (int i = 0; i < frames; ++i) {
            const double t = frames == 1 ? 0.0 : static_cast<double>(i) / (frames - 1);
            BodyConfiguration cfg = BodyConfiguration::canonical(model);
            cfg.beta = a + t * (b - a);
            write_png(frame_name(out_dir, i), render_posed(field, model, cfg, view, common, mask).rgb);
        }
        std::cout << "wrote " << frames << " frames to " << out_dir << "\n";
    }
};

struct Composite {
    Common common;
    std::string checkpoint, rig = "test_rig", scene, out;
    ViewOptions view;
    double tau = 0.5;

    void add(CLI::App* app) {
        add_common(app, common);
        app->add_option("--checkpoint", checkpoint, "field checkpoint")->required();
        app->add_option("--rig", rig, "rig that frames the camera")->capture_default_str();
        app->add_option("--scene", scene, "scene JSON (spheres, planes, alignment)")->required();
        app->add_option("--out", out, "output PNG")->required();
        app->add_option("--tau", tau, "opacity threshold of the depth test")->capture_default_str();
        view.add(app);
    }

    void run() const {
        const AvatarField field = open_checkpoint(checkpoint);
        const RiggedBodyModel model = open_rig(rig);
        if (!fs::exists(scene)) throw UsageError("scene file not found: " + scene);
        const AnalyticScene s = load_scene(scene);
        // an empty scene has nothing to align against
        const std::optional<Mat4d> align = s.alignment ? s.alignment : (s.empty() ? std::optional<Mat4d>(Mat4d::Identity()) : std::nullopt);
        const auto res = composite_render(field, s, align, view.camera(scene_boxes(model)), view.settings(common.seed, common.threads),
                                          view.backdrop(common.seed), CompositeSettings{tau});
        ensure_parent(out);
        write_png(out, res.image.rgb);
        std::cout << "wrote " << out << "\n";
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rigfield: neural SDF avatars on a rigged body model"};
    app.set_config("--config", "", "INI/TOML file; [subcommand] sections set that subcommand's flags");
    app.require_subcommand(1);

    MakeRig make_rig;
    auto* c_rig = app.add_subcommand("make-rig", "write a built-in synthetic rig to a rig file");
    c_rig->add_option("--name", make_rig.name, "test_rig, humanoid, capsule or chain3")->capture_default_str();
    c_rig->add_option("--out", make_rig.out, "output rig file")->required();

    Reconstruct reconstruct;
    reconstruct.add(app.add_subcommand("reconstruct", "fit a template field to renders of the bare rig mesh"));
    Generate generate;
    generate.add(app.add_subcommand("generate", "guided coarse-to-fine generation from a template"));
    Render render;
    render.add(app.add_subcommand("render", "render a checkpoint"));
    Animate animate;
    animate.add(app.add_subcommand("animate", "render a pose sequence"));
    Reshape reshape;
    reshape.add(app.add_subcommand("reshape", "render a shape interpolation"));
    Composite composite;
    composite.add(app.add_subcommand("composite", "render the avatar inside an analytic scene"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand("make-rig")) make_rig.run();
        else if (app.got_subcommand("reconstruct")) reconstruct.run();
        else if (app.got_subcommand("generate")) generate.run();
        else if (app.got_subcommand("render")) render.run();
        else if (app.got_subcommand("animate")) animate.run();
        else if (app.got_subcommand("reshape")) reshape.run();
        else if (app.got_subcommand("composite")) composite.run();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
