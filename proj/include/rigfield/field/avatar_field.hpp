#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rigfield/core/container.hpp"
#include "rigfield/core/errors.hpp"
#include "rigfield/core/types.hpp"
#include "rigfield/field/hash_grid.hpp"

namespace rigfield {

struct FieldConfig {
    HashGridConfig encoding;
    int sdf_hidden = 64;
    int geo_feature_dim = 15;
    int color_hidden = 64;
    int direction_bands = 4;
    bool direction_independent = false;
    double softplus_beta = 100.0;
    double init_radius = 0.5;
    double init_sharpness = 20.0;
    std::uint64_t seed = 0;

    void validate() const {
        encoding.validate();
        require(sdf_hidden >= 1 && color_hidden >= 1, "hidden widths must be positive");
        require(geo_feature_dim >= 0, "geo_feature_dim must be >= 0");
        require(direction_bands >= 0, "direction_bands must be >= 0");
        require(softplus_beta > 0, "softplus_beta must be positive");
        require(init_sharpness > 0, "sharpness must be positive");
    }
};

inline void to_json(nlohmann::json& j, const FieldConfig& c) {
    j = {{"encoding", c.encoding},
         {"sdf_hidden", c.sdf_hidden},
         {"geo_feature_dim", c.geo_feature_dim},
         {"color_hidden", c.color_hidden},
         {"direction_bands", c.direction_bands},
         {"direction_independent", c.direction_independent},
         {"softplus_beta", c.softplus_beta},
         {"init_radius", c.init_radius},
         {"init_sharpness", c.init_sharpness},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, FieldConfig& c) {
    c.encoding = j.at("encoding").get<HashGridConfig>();
    c.sdf_hidden = j.at("sdf_hidden").get<int>();
    c.geo_feature_dim = j.at("geo_feature_dim").get<int>();
    c.color_hidden = j.at("color_hidden").get<int>();
    c.direction_bands = j.at("direction_bands").get<int>();
    c.direction_independent = j.at("direction_independent").get<bool>();
    c.softplus_beta = j.at("softplus_beta").get<double>();
    c.init_radius = j.at("init_radius").get<double>();
    c.init_sharpness = j.at("init_sharpness").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
}

// Parameters split by which network they belong to. Geometry (Θ_f) is
// Encoding + Sdf + Sharpness; appearance (Θ_c) is Color.
enum class ParamGroup { Encoding, Sdf, Color, Sharpness };

inline bool is_geometry(ParamGroup g) { return g != ParamGroup::Color; }

struct TensorSlot {
    std::string name;
    ParamGroup group;
    std::int64_t offset;
    std::int64_t rows;
    std::int64_t cols;
    std::int64_t size() const { return rows * cols; }
};

// Signed distance value and its spatial gradient at one point.
template <typename Scalar>
struct SdfSample {
    Scalar value;
    Eigen::Matrix<Scalar, 3, 1> gradient;
};

// Implicit avatar: hash-grid encoding, a two-layer SDF network producing the
// signed distance plus a geometry feature, and a three-layer color network on
// (geometry feature, direction embedding) with a sigmoid output.
//
// Scalar is the storage and compute type; float for normal use, double for
// gradient checks. Checkpoints always store float32.
template <typename Scalar>
class BasicAvatarField {
public:
    using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
    using Mat = RowMatrix<Scalar>;
    using Lookup = HashGridEncoding::Lookup<Scalar>;

    struct SdfBatch {
        int n = 0;
        std::vector<Lookup> lookups;  // n * levels
        Mat h, a, z, out;             // input, pre-activation, hidden, [sdf | geo]
    };

    struct ColorBatch {
        Mat x, a1, z1, a2, z2, logits, rgb;
    };

    explicit BasicAvatarField(const FieldConfig& cfg) : cfg_(cfg), enc_(cfg.encoding) {
        cfg_.validate();
        build_layout();
        params_.assign(static_cast<std::size_t>(param_count_), Scalar(0));
        initialize();
    }

    template <typename Other>
    explicit BasicAvatarField(const BasicAvatarField<Other>& other) : cfg_(other.config()), enc_(other.config().encoding) {
        build_layout();
        params_.resize(other.params().size());
        std::transform(other.params().begin(), other.params().end(), params_.begin(),
                       [](Other v) { return static_cast<Scalar>(v); });
    }

    const FieldConfig& config() const { return cfg_; }
    const HashGridEncoding& encoding() const { return enc_; }
    const Aabb& domain() const { return enc_.domain(); }
    const std::vector<TensorSlot>& layout() const { return layout_; }
    std::int64_t param_count() const { return param_count_; }
    std::span<Scalar> params() { return params_; }
    std::span<const Scalar> params() const { return params_; }
    std::span<const Scalar> feature_table() const { return std::span<const Scalar>(params_).first(enc_.param_count()); }
    std::span<Scalar> feature_table() { return std::span<Scalar>(params_).first(enc_.param_count()); }

    const TensorSlot& slot(const std::string& name) const {
        for (const auto& s : layout_)
            if (s.name == name) return s;
        throw PreconditionError("unknown tensor '" + name + "'");
    }

    int input_dim() const { return enc_.output_dim() + 3; }
    int direction_dim() const { return 3 + 6 * cfg_.direction_bands; }
    int geo_dim() const { return cfg_.geo_feature_dim; }

    Scalar sharpness() const { return std::exp(params_[static_cast<std::size_t>(sharp_off_)]); }
    Scalar log_sharpness() const { return params_[static_cast<std::size_t>(sharp_off_)]; }
    void set_sharpness(Scalar s) {
        require(s > 0, "sharpness must be positive");
        params_[static_cast<std::size_t>(sharp_off_)] = std::log(s);
    }
    std::int64_t sharpness_offset() const { return sharp_off_; }

    // --- Single-point API -------------------------------------------------

    std::vector<Scalar> encode(const Vec3& x) const { return enc_.encode<Scalar>(x, feature_table()); }

    SdfSample<Scalar> sdf(const Vec3& x) const {
        enc_.check_inside(x.template cast<double>());
        SdfBatch batch;
        const Vec3 pts[1] = {x};
        sdf_forward(pts, batch);
        Mat gh;
        std::vector<Vec3> grad;
        input_gradient(batch, gh, grad);
        SdfSample<Scalar> s{batch.out(0, 0), grad[0]};
        if (!std::isfinite(static_cast<double>(s.value)) || !s.gradient.allFinite()) {
            std::ostringstream msg;
            msg << "non-finite signed distance at (" << x.x() << ", " << x.y() << ", " << x.z() << ")";
            throw NumericError(msg.str());
        }
        return s;
    }

    Eigen::Matrix<Scalar, 3, 1> color(const Vec3& x, const Vec3& d) const {
        require(std::abs(d.norm() - Scalar(1)) <= Scalar(1e-5), "color(): view direction must be unit length");
        enc_.check_inside(x.template cast<double>());
        SdfBatch sb;
        const Vec3 pts[1] = {x};
        sdf_forward(pts, sb);
        Mat dirs(1, 3);
        dirs.row(0) = d.transpose();
        ColorBatch cb;
        color_forward(sb.out.rightCols(geo_dim()), dirs, cb);
        return cb.rgb.row(0).transpose();
    }

    // --- Rendering interface (float, clamps queries into the domain) -------

    void evaluate(std::span<const Vec3f> points, std::span<const Vec3f> dirs, std::span<float> sdf_out,
                  std::span<Vec3f> rgb_out) const {
        SdfBatch sb;
        std::vector<Vec3> pts(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) pts[i] = domain().clamp(points[i]).template cast<Scalar>();
        sdf_forward(pts, sb);
        Mat d(static_cast<Eigen::Index>(points.size()), 3);
        for (std::size_t i = 0; i < points.size(); ++i) d.row(static_cast<Eigen::Index>(i)) = dirs[i].template cast<Scalar>().transpose();
        ColorBatch cb;
        color_forward(sb.out.rightCols(geo_dim()), d, cb);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            sdf_out[i] = static_cast<float>(sb.out(r, 0));
            rgb_out[i] = cb.rgb.row(r).transpose().template cast<float>();
        }
    }

    void evaluate_sdf(std::span<const Vec3f> points, std::span<float> sdf_out) const {
        SdfBatch sb;
        std::vector<Vec3> pts(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) pts[i] = domain().clamp(points[i]).template cast<Scalar>();
        sdf_forward(pts, sb);
        for (std::size_t i = 0; i < points.size(); ++i) sdf_out[i] = static_cast<float>(sb.out(static_cast<Eigen::Index>(i), 0));
    }

    // --- Batched forward / backward ----------------------------------------

    // Points must already lie inside the domain box (they are clamped per axis otherwise).
    void sdf_forward(std::span<const Vec3> points, SdfBatch& b) const {
        const int n = static_cast<int>(points.size());
        const int L = enc_.num_levels(), F = enc_.feature_dim(), D = input_dim();
        b.n = n;
        b.lookups.resize(static_cast<std::size_t>(n) * L);
        b.h.resize(n, D);
        const Vec3f c = domain().center();
        const Scalar* table = params_.data();
        for (int i = 0; i < n; ++i) {
            for (int l = 0; l < L; ++l) {
                Lookup& lk = b.lookups[static_cast<std::size_t>(i) * L + l];
                enc_.lookup(points[i], l, lk);
                for (int f = 0; f < F; ++f) {
                    Scalar acc = 0;
                    for (int k = 0; k < HashGridEncoding::kCorners; ++k) acc += lk.weight[k] * table[lk.offset[k] + f];
                    b.h(i, l * F + f) = acc;
                }
            }
            for (int a = 0; a < 3; ++a) b.h(i, L * F + a) = points[i][a] - Scalar(c[a]);
        }
        const auto w1 = weights("sdf.w1");
        const auto b1 = bias("sdf.b1");
        const auto w2 = weights("sdf.w2");
        const auto b2 = bias("sdf.b2");
        b.a.noalias() = b.h * w1.transpose();
        b.a.rowwise() += b1.transpose();
        const Scalar beta = static_cast<Scalar>(cfg_.softplus_beta);
        b.z = softplus_of(b.a, beta);
        b.out.noalias() = b.z * w2.transpose();
        b.out.rowwise() += b2.transpose();
    }

    // d_out: n x (1 + geo) upstream gradient for [sdf | geo]. Accumulates into grad.
    void sdf_backward(const SdfBatch& b, const Mat& d_out, std::span<Scalar> grad) const {
        const Scalar beta = static_cast<Scalar>(cfg_.softplus_beta);
        grad_weights(grad, "sdf.w2").noalias() += d_out.transpose() * b.z;
        grad_bias(grad, "sdf.b2") += d_out.colwise().sum().transpose();
        Mat da = (d_out * weights("sdf.w2")).cwiseProduct(sigmoid_of(beta * b.a));
        grad_weights(grad, "sdf.w1").noalias() += da.transpose() * b.h;
        grad_bias(grad, "sdf.b1") += da.colwise().sum().transpose();
        const Mat dh = da * weights("sdf.w1");
        scatter_encoding(b, dh, grad);
    }

    // Spatial gradient of the signed distance at every batch point.
    // gh receives d sdf / d input (n x input_dim), used again by eikonal().
    void input_gradient(const SdfBatch& b, Mat& gh, std::vector<Vec3>& normals) const {
        const Scalar beta = static_cast<Scalar>(cfg_.softplus_beta);
        const auto w2row = weights("sdf.w2").row(0);
        Mat s = sigmoid_of(beta * b.a);
        s.array().rowwise() *= w2row.array();
        gh.noalias() = s * weights("sdf.w1");
        const int L = enc_.num_levels(), F = enc_.feature_dim();
        normals.assign(static_cast<std::size_t>(b.n), Vec3::Zero());
        const Scalar* table = params_.data();
        for (int i = 0; i < b.n; ++i) {
            Vec3 n = gh.row(i).template segment<3>(L * F).transpose();
            for (int l = 0; l < L; ++l) {
                const Lookup& lk = b.lookups[static_cast<std::size_t>(i) * L + l];
                for (int k = 0; k < HashGridEncoding::kCorners; ++k) {
                    Scalar dot = 0;
                    for (int f = 0; f < F; ++f) dot += table[lk.offset[k] + f] * gh(i, l * F + f);
                    n += HashGridEncoding::weight_gradient(lk, k) * dot;
                }
            }
            normals[static_cast<std::size_t>(i)] = n;
        }
    }

    // Eikonal penalty sum_i (|grad f(x_i)| - 1)^2 over the batch. When grad is
    // non-empty, adds weight * d(penalty)/d(params) into it.
    Scalar eikonal(const SdfBatch& b, Scalar weight, std::span<Scalar> grad) const {
        Mat gh;
        std::vector<Vec3> normals;
        input_gradient(b, gh, normals);
        Scalar total = 0;
        const int n = b.n, L = enc_.num_levels(), F = enc_.feature_dim(), D = input_dim();
        std::vector<Vec3> u(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const Scalar len = normals[static_cast<std::size_t>(i)].norm();
            total += (len - 1) * (len - 1);
            u[static_cast<std::size_t>(i)] =
                len > Scalar(1e-12) ? Vec3(weight * 2 * (len - 1) / len * normals[static_cast<std::size_t>(i)]) : Vec3::Zero();
        }
        if (grad.empty()) return total;

        const Scalar beta = static_cast<Scalar>(cfg_.softplus_beta);
        const Scalar* table = params_.data();
        // v_i = J_i u_i: directional derivative of the network input along u_i.
        Mat v = Mat::Zero(n, D);
        for (int i = 0; i < n; ++i) {
            const Vec3& ui = u[static_cast<std::size_t>(i)];
            v.row(i).template segment<3>(L * F) = ui.transpose();
            for (int l = 0; l < L; ++l) {
                const Lookup& lk = b.lookups[static_cast<std::size_t>(i) * L + l];
                for (int k = 0; k < HashGridEncoding::kCorners; ++k) {
                    const Scalar gu = HashGridEncoding::weight_gradient(lk, k).dot(ui);
                    for (int f = 0; f < F; ++f) {
                        v(i, l * F + f) += gu * table[lk.offset[k] + f];
                        // the Jacobian itself depends on the table entries
                        grad[static_cast<std::size_t>(lk.offset[k] + f)] += gu * gh(i, l * F + f);
                    }
                }
            }
        }
        const auto w1 = weights("sdf.w1");
        const auto w2row = weights("sdf.w2").row(0);
        const Mat q = v * w1.transpose();
        Mat s1 = sigmoid_of(beta * b.a);
        Mat s2 = beta * s1.array() * (1 - s1.array());
        Mat s = s1;
        s.array().rowwise() *= w2row.array();
        Mat r = q.cwiseProduct(s2);
        r.array().rowwise() *= w2row.array();

        auto gw1 = grad_weights(grad, "sdf.w1");
        gw1.noalias() += s.transpose() * v;
        gw1.noalias() += r.transpose() * b.h;
        grad_bias(grad, "sdf.b1") += r.colwise().sum().transpose();
        grad_weights(grad, "sdf.w2").row(0) += s1.cwiseProduct(q).colwise().sum();
        const Mat dh = r * w1;
        scatter_encoding(b, dh, grad);
        return total;
    }

    Mat embed_directions(const Mat& dirs) const {
        const int n = static_cast<int>(dirs.rows());
        Mat e = Mat::Zero(n, direction_dim());
        if (cfg_.direction_independent) return e;
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) e(i, a) = dirs(i, a);
            for (int k = 0; k < cfg_.direction_bands; ++k) {
                const Scalar freq = static_cast<Scalar>(std::ldexp(std::numbers::pi, k));
                for (int a = 0; a < 3; ++a) {
                    e(i, 3 + 6 * k + a) = std::sin(freq * dirs(i, a));
                    e(i, 3 + 6 * k + 3 + a) = std::cos(freq * dirs(i, a));
                }
            }
        }
        return e;
    }

    template <typename GeoExpr>
    void color_forward(const GeoExpr& geo, const Mat& dirs, ColorBatch& c) const {
        const int n = static_cast<int>(dirs.rows());
        c.x.resize(n, geo_dim() + direction_dim());
        c.x.leftCols(geo_dim()) = geo;
        c.x.rightCols(direction_dim()) = embed_directions(dirs);
        c.a1.noalias() = c.x * weights("color.w1").transpose();
        c.a1.rowwise() += bias("color.b1").transpose();
        c.z1 = c.a1.cwiseMax(Scalar(0));
        c.a2.noalias() = c.z1 * weights("color.w2").transpose();
        c.a2.rowwise() += bias("color.b2").transpose();
        c.z2 = c.a2.cwiseMax(Scalar(0));
        c.logits.noalias() = c.z2 * weights("color.w3").transpose();
        c.logits.rowwise() += bias("color.b3").transpose();
        c.rgb = sigmoid_of(c.logits);
    }

    // Returns d loss / d geo feature (n x geo_dim).
    Mat color_backward(const ColorBatch& c, const Mat& d_rgb, std::span<Scalar> grad) const {
        const Mat d_logits = d_rgb.cwiseProduct(c.rgb.cwiseProduct((Mat::Ones(c.rgb.rows(), 3) - c.rgb)));
        grad_weights(grad, "color.w3").noalias() += d_logits.transpose() * c.z2;
        grad_bias(grad, "color.b3") += d_logits.colwise().sum().transpose();
        Mat d2 = d_logits * weights("color.w3");
        d2.array() *= (c.a2.array() > Scalar(0)).template cast<Scalar>();
        grad_weights(grad, "color.w2").noalias() += d2.transpose() * c.z1;
        grad_bias(grad, "color.b2") += d2.colwise().sum().transpose();
        Mat d1 = d2 * weights("color.w2");
        d1.array() *= (c.a1.array() > Scalar(0)).template cast<Scalar>();
        grad_weights(grad, "color.w1").noalias() += d1.transpose() * c.x;
        grad_bias(grad, "color.b1") += d1.colwise().sum().transpose();
        const Mat dx = d1 * weights("color.w1");
        return dx.leftCols(geo_dim());
    }

    // --- Persistence --------------------------------------------------------

    void save(const std::string& path) const {
        container::Document doc;
        doc.header = {{"format", "rigfield-checkpoint"}, {"format_version", 1}, {"config", cfg_},
                      {"param_count", param_count_}};
        for (const auto& s : layout_) {
            container::Block blk{s.name, {s.rows, s.cols}, {}};
            blk.data.resize(static_cast<std::size_t>(s.size()));
            for (std::int64_t i = 0; i < s.size(); ++i)
                blk.data[static_cast<std::size_t>(i)] = static_cast<float>(params_[static_cast<std::size_t>(s.offset + i)]);
            doc.blocks.push_back(std::move(blk));
        }
        container::write(path, kMagic, doc);
    }

    static BasicAvatarField load(const std::string& path) {
        const auto doc = container::read(path, kMagic);
        if (doc.header.value("format", "") != "rigfield-checkpoint")
            throw FormatError("'" + path + "' is not a field checkpoint");
        FieldConfig cfg;
        try {
            cfg = doc.header.at("config").get<FieldConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad checkpoint config: ") + e.what());
        }
        BasicAvatarField field(cfg);
        for (const auto& s : field.layout_) {
            const auto& blk = doc.block(s.name);
            if (static_cast<std::int64_t>(blk.data.size()) != s.size())
                throw FormatError("block '" + s.name + "' has the wrong size");
            for (std::int64_t i = 0; i < s.size(); ++i)
                field.params_[static_cast<std::size_t>(s.offset + i)] = static_cast<Scalar>(blk.data[static_cast<std::size_t>(i)]);
        }
        return field;
    }

    static constexpr const char* kMagic = "RFFIELD";

    static Scalar sigmoid(Scalar x) {
        return x >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
    }
    static Scalar softplus(Scalar x, Scalar beta) {
        const Scalar bx = beta * x;
        return (std::max(bx, Scalar(0)) + std::log1p(std::exp(-std::abs(bx)))) / beta;
    }

    // Vectorized forms of the two activations.
    template <typename Derived>
    static Mat sigmoid_of(const Eigen::MatrixBase<Derived>& x) {
        return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
    }
    static Mat softplus_of(const Mat& x, Scalar beta) {
        const auto bx = (beta * x.array()).eval();
        return ((bx.max(Scalar(0)) + (-bx.abs()).exp().log1p()) / beta).matrix();
    }

private:
    using CMap = Eigen::Map<const Mat>;
    using MMap = Eigen::Map<Mat>;
    using CVec = Eigen::Map<const Vector<Scalar>>;
    using MVec = Eigen::Map<Vector<Scalar>>;

    void add_slot(const std::string& name, ParamGroup g, std::int64_t rows, std::int64_t cols) {
        layout_.push_back({name, g, param_count_, rows, cols});
        param_count_ += rows * cols;
    }

    void build_layout() {
        layout_.clear();
        param_count_ = 0;
        add_slot("encoding.table", ParamGroup::Encoding, enc_.param_count() / enc_.feature_dim(), enc_.feature_dim());
        const int D = input_dim(), Hs = cfg_.sdf_hidden, G = cfg_.geo_feature_dim, Hc = cfg_.color_hidden;
        add_slot("sdf.w1", ParamGroup::Sdf, Hs, D);
        add_slot("sdf.b1", ParamGroup::Sdf, Hs, 1);
        add_slot("sdf.w2", ParamGroup::Sdf, 1 + G, Hs);
        add_slot("sdf.b2", ParamGroup::Sdf, 1 + G, 1);
        add_slot("color.w1", ParamGroup::Color, Hc, G + direction_dim());
        add_slot("color.b1", ParamGroup::Color, Hc, 1);
        add_slot("color.w2", ParamGroup::Color, Hc, Hc);
        add_slot("color.b2", ParamGroup::Color, Hc, 1);
        add_slot("color.w3", ParamGroup::Color, 3, Hc);
        add_slot("color.b3", ParamGroup::Color, 3, 1);
        add_slot("sharpness.log_s", ParamGroup::Sharpness, 1, 1);
        sharp_off_ = slot("sharpness.log_s").offset;
    }

    CMap weights(const char* name) const {
        const auto& s = slot(name);
        return CMap(params_.data() + s.offset, s.rows, s.cols);
    }
    CVec bias(const char* name) const {
        const auto& s = slot(name);
        return CVec(params_.data() + s.offset, s.rows);
    }
    MMap grad_weights(std::span<Scalar> grad, const char* name) const {
        const auto& s = slot(name);
        return MMap(grad.data() + s.offset, s.rows, s.cols);
    }
    MVec grad_bias(std::span<Scalar> grad, const char* name) const {
        const auto& s = slot(name);
        return MVec(grad.data() + s.offset, s.rows);
    }

    void scatter_encoding(const SdfBatch& b, const Mat& dh, std::span<Scalar> grad) const {
        const int L = enc_.num_levels(), F = enc_.feature_dim();
        for (int i = 0; i < b.n; ++i) {
            for (int l = 0; l < L; ++l) {
                const Lookup& lk = b.lookups[static_cast<std::size_t>(i) * L + l];
                for (int f = 0; f < F; ++f) {
                    const Scalar g = dh(i, l * F + f);
                    if (g == Scalar(0)) continue;
                    for (int k = 0; k < HashGridEncoding::kCorners; ++k)
                        grad[static_cast<std::size_t>(lk.offset[k] + f)] += lk.weight[k] * g;
                }
            }
        }
    }

    void initialize() {
        std::mt19937_64 rng(cfg_.seed);
        std::uniform_real_distribution<double> table_init(-1e-4, 1e-4);
        for (auto& v : feature_table()) v = static_cast<Scalar>(table_init(rng));

        // Geometric initialization: with the encoding columns zeroed, the SDF
        // network starts close to |x - center| - init_radius.
        const int Hs = cfg_.sdf_hidden, D = input_dim(), LF = enc_.output_dim();
        const double sigma = std::sqrt(2.0) / std::sqrt(static_cast<double>(Hs));
        std::normal_distribution<double> n_hidden(0.0, sigma);
        auto w1 = mutable_weights("sdf.w1");
        for (int r = 0; r < Hs; ++r)
            for (int c = 0; c < D; ++c) w1(r, c) = c < LF ? Scalar(0) : static_cast<Scalar>(n_hidden(rng));
        std::normal_distribution<double> n_out(std::sqrt(std::numbers::pi) / std::sqrt(static_cast<double>(Hs)), 1e-4);
        auto w2 = mutable_weights("sdf.w2");
        for (int c = 0; c < Hs; ++c) w2(0, c) = static_cast<Scalar>(n_out(rng));
        for (int r = 1; r < w2.rows(); ++r)
            for (int c = 0; c < Hs; ++c) w2(r, c) = static_cast<Scalar>(n_hidden(rng));
        params_[static_cast<std::size_t>(slot("sdf.b2").offset)] = static_cast<Scalar>(-cfg_.init_radius);

        for (const char* name : {"color.w1", "color.w2", "color.w3"}) {
            auto w = mutable_weights(name);
            const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = static_cast<Scalar>(u(rng));
        }
        params_[static_cast<std::size_t>(sharp_off_)] = static_cast<Scalar>(std::log(cfg_.init_sharpness));
    }

    MMap mutable_weights(const char* name) {
        const auto& s = slot(name);
        return MMap(params_.data() + s.offset, s.rows, s.cols);
    }

    FieldConfig cfg_;
    HashGridEncoding enc_;
    std::vector<TensorSlot> layout_;
    std::int64_t param_count_ = 0;
    std::int64_t sharp_off_ = 0;
    AlignedVector<Scalar> params_;
};

using AvatarField = BasicAvatarField<float>;

}  // namespace rigfield
