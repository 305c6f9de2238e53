#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "rigfield/core/container.hpp"
#include "rigfield/core/errors.hpp"
#include "rigfield/core/types.hpp"

namespace rigfield {

using Face = std::array<int, 3>;

struct RiggedBodyModel {
    std::vector<Vec3d> vertices;             // V_0, N
    std::vector<Face> faces;                 // M
    std::vector<Vec3d> joints;               // rest positions, J
    std::vector<int> parents;                // -1 for the root
    std::vector<std::string> joint_names;
    RowMatrix<double> weights;               // N x J
    Eigen::MatrixXd shape_dirs;              // 3N x K, rows (3v, 3v+1, 3v+2)
    Eigen::MatrixXd joint_shape_dirs;        // 3J x K, may be empty (joints ignore beta)
    std::vector<Vec3d> canonical_pose;       // theta_0, J axis-angles
    std::vector<Vec3f> face_colors;          // optional per-face albedo, M or empty

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int joint_count() const { return static_cast<int>(joints.size()); }
    int shape_count() const { return static_cast<int>(shape_dirs.cols()); }

    // Joints ordered so that every parent precedes its children.
    std::vector<int> topological_order() const {
        const int J = joint_count();
        std::vector<int> order, state(static_cast<std::size_t>(J), 0);
        order.reserve(static_cast<std::size_t>(J));
        for (int j = 0; j < J; ++j) {
            std::vector<int> chain;
            int k = j;
            while (k >= 0 && state[static_cast<std::size_t>(k)] == 0) {
                state[static_cast<std::size_t>(k)] = 1;
                chain.push_back(k);
                k = parents[static_cast<std::size_t>(k)];
            }
            if (k >= 0 && state[static_cast<std::size_t>(k)] == 1)
                throw PreconditionError("rig: joint parents contain a cycle through joint " + std::to_string(k));
            for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
                state[static_cast<std::size_t>(*it)] = 2;
                order.push_back(*it);
            }
        }
        return order;
    }

    void validate() const {
        const int N = vertex_count(), J = joint_count();
        require(N > 0 && J > 0, "rig: needs vertices and joints");
        require(static_cast<int>(parents.size()) == J, "rig: parents size must equal joint count");
        int roots = 0;
        for (int p : parents) {
            require(p >= -1 && p < J, "rig: parent index out of range");
            roots += p == -1;
        }
        require(roots == 1, "rig: joints must form a single rooted tree");
        (void)topological_order();
        for (const auto& f : faces)
            for (int v : f) require(v >= 0 && v < N, "rig: face index out of range");
        require(weights.rows() == N && weights.cols() == J, "rig: skinning weights must be N x J");
        for (int v = 0; v < N; ++v) {
            require(weights.row(v).minCoeff() >= 0, "rig: negative skinning weight at vertex " + std::to_string(v));
            require(std::abs(weights.row(v).sum() - 1.0) <= 1e-6,
                    "rig: skinning weights of vertex " + std::to_string(v) + " do not sum to 1");
        }
        require(shape_dirs.rows() == 3 * N, "rig: shape_dirs must have 3N rows");
        require(joint_shape_dirs.size() == 0 ||
                    (joint_shape_dirs.rows() == 3 * J && joint_shape_dirs.cols() == shape_dirs.cols()),
                "rig: joint_shape_dirs must be 3J x K");
        require(static_cast<int>(canonical_pose.size()) == J, "rig: canonical pose needs one axis-angle per joint");
        require(face_colors.empty() || face_colors.size() == faces.size(), "rig: face_colors must have one entry per face");
    }

    double height(int axis = 1) const {
        double lo = 1e300, hi = -1e300;
        for (const auto& v : vertices) {
            lo = std::min(lo, v[axis]);
            hi = std::max(hi, v[axis]);
        }
        return hi - lo;
    }
};

struct BodyConfiguration {
    std::vector<Vec3d> theta;                 // J axis-angles
    Vec3d root_translation = Vec3d::Zero();
    Eigen::VectorXd beta;                     // K

    static BodyConfiguration canonical(const RiggedBodyModel& m) {
        return {m.canonical_pose, Vec3d::Zero(), Eigen::VectorXd::Zero(m.shape_count())};
    }

    void validate(const RiggedBodyModel& m) const {
        require(static_cast<int>(theta.size()) == m.joint_count(), "pose: theta needs one axis-angle per joint");
        for (const auto& a : theta) require(a.allFinite(), "pose: theta contains a non-finite value");
        require(root_translation.allFinite(), "pose: root translation is not finite");
        require(beta.size() == m.shape_count(), "shape: beta length must equal the number of shape directions");
        require(beta.allFinite(), "shape: beta contains a non-finite value");
    }
};

struct ShapeResult {
    std::vector<Vec3d> vertices;
    std::vector<Vec3d> translation;  // T^beta per vertex
};

struct PoseResult {
    std::vector<Vec3d> vertices;
    std::vector<Mat4d> transforms;  // T^theta per vertex (without root translation)
};

struct VertexTransformSet {
    std::vector<Mat4d> forward;   // T = Trans(root) T^theta T^beta
    std::vector<Mat4d> inverse;
    std::vector<Vec3d> beta_translation;
    std::vector<Mat4d> theta_transform;
    std::vector<Vec3d> posed_vertices;
};

inline Mat3d rodrigues(const Vec3d& aa) {
    const double angle = aa.norm();
    if (angle == 0.0) return Mat3d::Identity();
    return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

inline Mat4d rigid(const Mat3d& r, const Vec3d& t) {
    Mat4d m = Mat4d::Identity();
    m.topLeftCorner<3, 3>() = r;
    m.topRightCorner<3, 1>() = t;
    return m;
}

inline Mat4d translation(const Vec3d& t) { return rigid(Mat3d::Identity(), t); }

inline Vec3d apply(const Mat4d& m, const Vec3d& p) { return m.topLeftCorner<3, 3>() * p + m.topRightCorner<3, 1>(); }

inline ShapeResult shape_blend(const RiggedBodyModel& m, const Eigen::VectorXd& beta) {
    require(beta.size() == m.shape_count(), "shape_blend: beta length must equal the number of shape directions");
    require(beta.allFinite(), "shape_blend: beta contains a non-finite value");
    ShapeResult out;
    const Eigen::VectorXd d = m.shape_dirs * beta;
    out.vertices.resize(m.vertices.size());
    out.translation.resize(m.vertices.size());
    for (std::size_t v = 0; v < m.vertices.size(); ++v) {
        out.translation[v] = d.segment<3>(static_cast<Eigen::Index>(3 * v));
        out.vertices[v] = m.vertices[v] + out.translation[v];
    }
    return out;
}

inline std::vector<Vec3d> shaped_joints(const RiggedBodyModel& m, const Eigen::VectorXd& beta) {
    std::vector<Vec3d> j = m.joints;
    if (m.joint_shape_dirs.size() == 0) return j;
    const Eigen::VectorXd d = m.joint_shape_dirs * beta;
    for (std::size_t k = 0; k < j.size(); ++k) j[k] += d.segment<3>(static_cast<Eigen::Index>(3 * k));
    return j;
}

// Global joint transforms G_j composed down the tree.
inline std::vector<Mat4d> joint_transforms(const RiggedBodyModel& m, const std::vector<Vec3d>& theta,
                                           const std::vector<Vec3d>& joints) {
    std::vector<Mat4d> g(joints.size());
    for (int j : m.topological_order()) {
        const auto k = static_cast<std::size_t>(j);
        const int p = m.parents[k];
        const Vec3d offset = p < 0 ? joints[k] : Vec3d(joints[k] - joints[static_cast<std::size_t>(p)]);
        const Mat4d local = rigid(rodrigues(theta[k]), offset);
        g[k] = p < 0 ? local : Mat4d(g[static_cast<std::size_t>(p)] * local);
    }
    return g;
}

inline PoseResult lbs(const RiggedBodyModel& m, const std::vector<Vec3d>& theta, const std::vector<Vec3d>& shaped,
                      const Eigen::VectorXd& beta) {
    require(static_cast<int>(theta.size()) == m.joint_count(), "lbs: theta needs one axis-angle per joint");
    for (const auto& a : theta)
        if (!a.allFinite()) throw PreconditionError("lbs: theta contains NaN or infinity");
    require(shaped.size() == m.vertices.size(), "lbs: shaped vertex count mismatch");
    const auto joints = shaped_joints(m, beta);
    const auto g = joint_transforms(m, theta, joints);
    const auto g0 = joint_transforms(m, m.canonical_pose, joints);
    // joints whose whole chain sits at the canonical pose get an exact identity
    std::vector<char> rest(g.size(), 0);
    for (int j : m.topological_order()) {
        const auto k = static_cast<std::size_t>(j);
        const int p = m.parents[k];
        rest[k] = theta[k] == m.canonical_pose[k] && (p < 0 || rest[static_cast<std::size_t>(p)]);
    }
    std::vector<Mat4d> rel(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) rel[j] = rest[j] ? Mat4d::Identity() : Mat4d(g[j] * g0[j].inverse());
    PoseResult out;
    out.vertices.resize(shaped.size());
    out.transforms.resize(shaped.size());
    for (std::size_t v = 0; v < shaped.size(); ++v) {
        Mat4d t = Mat4d::Zero();
        bool moved = false;
        for (std::size_t j = 0; j < rel.size(); ++j) {
            const double w = m.weights(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j));
            if (w == 0.0) continue;
            t += w * rel[j];
            moved = moved || !rest[j];
        }
        if (!moved) t = Mat4d::Identity();  // weights sum to 1 only up to rounding
        out.transforms[v] = t;
        out.vertices[v] = apply(t, shaped[v]);
    }
    return out;
}

inline PoseResult lbs(const RiggedBodyModel& m, const std::vector<Vec3d>& theta, const std::vector<Vec3d>& shaped) {
    return lbs(m, theta, shaped, Eigen::VectorXd::Zero(m.shape_count()));
}

inline constexpr double kDegenerateDeterminant = 1e-8;

inline VertexTransformSet vertex_transforms(const RiggedBodyModel& m, const BodyConfiguration& target) {
    target.validate(m);
    const auto shaped = shape_blend(m, target.beta);
    const auto posed = lbs(m, target.theta, shaped.vertices, target.beta);
    VertexTransformSet out;
    const std::size_t n = m.vertices.size();
    out.forward.resize(n);
    out.inverse.resize(n);
    out.beta_translation = shaped.translation;
    out.theta_transform = posed.transforms;
    out.posed_vertices.resize(n);
    const Mat4d root = translation(target.root_translation);
    for (std::size_t v = 0; v < n; ++v) {
        const double det = posed.transforms[v].topLeftCorner<3, 3>().determinant();
        if (!(std::abs(det) >= kDegenerateDeterminant))
            throw DegeneracyError("vertex_transforms: blended transform of vertex " + std::to_string(v) +
                                  " is singular (det " + std::to_string(det) + ")");
        out.forward[v] = root * posed.transforms[v] * translation(shaped.translation[v]);
        out.inverse[v] = out.forward[v].inverse();
        out.posed_vertices[v] = posed.vertices[v] + target.root_translation;
    }
    return out;
}

// ---- rig file ----------------------------------------------------------------

inline constexpr const char* kRigMagic = "RFRIG";

inline void save_rig(const std::string& path, const RiggedBodyModel& m) {
    m.validate();
    using container::Block;
    container::Document doc;
    const auto N = static_cast<std::int64_t>(m.vertices.size()), M = static_cast<std::int64_t>(m.faces.size()),
               J = static_cast<std::int64_t>(m.joints.size()), K = static_cast<std::int64_t>(m.shape_count());
    doc.header = {{"format", "rigfield-rig"},
                  {"format_version", 1},
                  {"vertex_count", N},
                  {"face_count", M},
                  {"joint_count", J},
                  {"shape_count", K},
                  {"joint_names", m.joint_names},
                  {"parents", m.parents}};
    auto vec3_block = [](const std::string& name, const std::vector<Vec3d>& v) {
        Block b{name, {static_cast<std::int64_t>(v.size()), 3}, {}};
        for (const auto& p : v)
            for (int i = 0; i < 3; ++i) b.data.push_back(static_cast<float>(p[i]));
        return b;
    };
    doc.blocks.push_back(vec3_block("vertices", m.vertices));
    Block faces{"faces", {M, 3}, {}};
    for (const auto& f : m.faces)
        for (int v : f) faces.data.push_back(static_cast<float>(v));
    doc.blocks.push_back(faces);
    doc.blocks.push_back(vec3_block("joints", m.joints));
    doc.blocks.push_back(vec3_block("canonical_pose", m.canonical_pose));
    Block w{"weights", {N, J}, {}};
    for (Eigen::Index v = 0; v < N; ++v)
        for (Eigen::Index j = 0; j < J; ++j) w.data.push_back(static_cast<float>(m.weights(v, j)));
    doc.blocks.push_back(w);
    Block s{"shape_dirs", {N, 3, K}, {}};
    for (Eigen::Index r = 0; r < 3 * N; ++r)
        for (Eigen::Index k = 0; k < K; ++k) s.data.push_back(static_cast<float>(m.shape_dirs(r, k)));
    doc.blocks.push_back(s);
    if (m.joint_shape_dirs.size() > 0) {
        Block js{"joint_shape_dirs", {J, 3, K}, {}};
        for (Eigen::Index r = 0; r < 3 * J; ++r)
            for (Eigen::Index k = 0; k < K; ++k) js.data.push_back(static_cast<float>(m.joint_shape_dirs(r, k)));
        doc.blocks.push_back(js);
    }
    if (!m.face_colors.empty()) {
        Block fc{"face_colors", {M, 3}, {}};
        for (const auto& c : m.face_colors)
            for (int i = 0; i < 3; ++i) fc.data.push_back(c[i]);
        doc.blocks.push_back(fc);
    }
    container::write(path, kRigMagic, doc);
}

inline RiggedBodyModel load_rig(const std::string& path) {
    const auto doc = container::read(path, kRigMagic);
    const auto& h = doc.header;
    if (h.value("format", "") != "rigfield-rig") throw FormatError(path + ": not a rig file");
    if (h.value("format_version", 0) != 1) throw FormatError(path + ": unsupported rig format version");
    RiggedBodyModel m;
    const auto N = h.at("vertex_count").get<std::int64_t>(), M = h.at("face_count").get<std::int64_t>(),
               J = h.at("joint_count").get<std::int64_t>(), K = h.at("shape_count").get<std::int64_t>();
    auto expect = [&](const container::Block& b, std::int64_t count) {
        if (static_cast<std::int64_t>(b.data.size()) != count)
            throw FormatError(path + ": block '" + b.name + "' has unexpected size");
        return b.data;
    };
    auto vec3s = [&](const std::string& name, std::int64_t rows) {
        const auto d = expect(doc.block(name), rows * 3);
        std::vector<Vec3d> out(static_cast<std::size_t>(rows));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = Vec3d(d[3 * i], d[3 * i + 1], d[3 * i + 2]);
        return out;
    };
    m.vertices = vec3s("vertices", N);
    m.joints = vec3s("joints", J);
    m.canonical_pose = vec3s("canonical_pose", J);
    const auto f = expect(doc.block("faces"), M * 3);
    m.faces.resize(static_cast<std::size_t>(M));
    for (std::size_t i = 0; i < m.faces.size(); ++i)
        for (int k = 0; k < 3; ++k) {
            const float x = f[3 * i + static_cast<std::size_t>(k)];
            if (x != std::floor(x)) throw FormatError(path + ": non-integer face index");
            m.faces[i][static_cast<std::size_t>(k)] = static_cast<int>(x);
        }
    m.parents = h.at("parents").get<std::vector<int>>();
    m.joint_names = h.value("joint_names", std::vector<std::string>{});
    const auto w = expect(doc.block("weights"), N * J);
    m.weights.resize(N, J);
    for (Eigen::Index v = 0; v < N; ++v)
        for (Eigen::Index j = 0; j < J; ++j) m.weights(v, j) = w[static_cast<std::size_t>(v * J + j)];
    // float storage: renormalize rows so they sum to 1 in double
    for (Eigen::Index v = 0; v < N; ++v) {
        const double s = m.weights.row(v).sum();
        if (s > 0) m.weights.row(v) /= s;
    }
    const auto s = expect(doc.block("shape_dirs"), N * 3 * K);
    m.shape_dirs.resize(3 * N, K);
    for (Eigen::Index r = 0; r < 3 * N; ++r)
        for (Eigen::Index k = 0; k < K; ++k) m.shape_dirs(r, k) = s[static_cast<std::size_t>(r * K + k)];
    if (doc.has_block("joint_shape_dirs")) {
        const auto js = expect(doc.block("joint_shape_dirs"), J * 3 * K);
        m.joint_shape_dirs.resize(3 * J, K);
        for (Eigen::Index r = 0; r < 3 * J; ++r)
            for (Eigen::Index k = 0; k < K; ++k) m.joint_shape_dirs(r, k) = js[static_cast<std::size_t>(r * K + k)];
    }
    if (doc.has_block("face_colors")) {
        const auto c = expect(doc.block("face_colors"), M * 3);
        for (std::int64_t i = 0; i < M; ++i)
            m.face_colors.emplace_back(c[static_cast<std::size_t>(3 * i)], c[static_cast<std::size_t>(3 * i + 1)],
                                       c[static_cast<std::size_t>(3 * i + 2)]);
    }
    try {
        m.validate();
    } catch (const PreconditionError& e) {
        throw FormatError(path + ": " + e.what());
    }
    return m;
}

// ---- pose sequences ------------------------------------------------------------

struct PoseFrame {
    int frame_index = 0;
    BodyConfiguration config;
};

inline std::vector<PoseFrame> parse_pose_sequence(const nlohmann::json& j, const RiggedBodyModel& m) {
    require(j.is_array(), "pose sequence must be a JSON array");
    std::vector<PoseFrame> frames;
    for (const auto& f : j) {
        PoseFrame pf;
        pf.frame_index = f.at("frame_index").get<int>();
        for (const auto& a : f.at("theta")) {
            require(a.is_array() && a.size() == 3, "pose sequence: theta entries must be [x, y, z]");
            pf.config.theta.emplace_back(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
        }
        if (f.contains("root_translation")) {
            const auto& t = f["root_translation"];
            require(t.is_array() && t.size() == 3, "pose sequence: root_translation must be [x, y, z]");
            pf.config.root_translation = Vec3d(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
        }
        const auto beta = f.value("beta", std::vector<double>(static_cast<std::size_t>(m.shape_count()), 0.0));
        pf.config.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
        pf.config.validate(m);
        frames.push_back(std::move(pf));
    }
    return frames;
}

inline std::vector<PoseFrame> load_pose_sequence(const std::string& path, const RiggedBodyModel& m) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open pose sequence: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return parse_pose_sequence(j, m);
}

inline nlohmann::json pose_frame_json(const PoseFrame& f) {
    nlohmann::json theta = nlohmann::json::array();
    for (const auto& a : f.config.theta) theta.push_back({a.x(), a.y(), a.z()});
    const auto& t = f.config.root_translation;
    return {{"frame_index", f.frame_index},
            {"theta", theta},
            {"root_translation", {t.x(), t.y(), t.z()}},
            {"beta", std::vector<double>(f.config.beta.data(), f.config.beta.data() + f.config.beta.size())}};
}

}  // namespace rigfield
