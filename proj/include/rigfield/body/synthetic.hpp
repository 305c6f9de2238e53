#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rigfield/body/body_model.hpp"

namespace rigfield::synthetic {

// Closed capsule mesh around segment [a, b]: pole, hemisphere rings, cylinder, pole.
struct CapsuleMesh {
    std::vector<Vec3d> vertices;
    std::vector<Vec3d> axis_points;  // closest point on the segment, per vertex
    std::vector<Face> faces;
};

inline CapsuleMesh capsule_mesh(const Vec3d& a, const Vec3d& b, double r, int segments = 24, int rings = 8) {
    CapsuleMesh m;
    const Vec3d u = (b - a).normalized();
    const Vec3d helper = std::abs(u.x()) < 0.9 ? Vec3d::UnitX() : Vec3d::UnitY();
    const Vec3d e1 = u.cross(helper).normalized(), e2 = u.cross(e1);
    auto add = [&](const Vec3d& center, const Vec3d& p) {
        m.vertices.push_back(p);
        m.axis_points.push_back(center);
    };
    add(a, a - r * u);
    // ring k: latitude from -pi/2 (exclusive) to +pi/2 (exclusive); equator duplicated at a and b
    std::vector<std::pair<Vec3d, double>> ring_spec;  // (center offset point, latitude)
    for (int i = 1; i <= rings; ++i) ring_spec.emplace_back(a, -M_PI / 2 + M_PI / 2 * i / rings);
    for (int i = 0; i < rings; ++i) ring_spec.emplace_back(b, M_PI / 2 * i / rings);
    for (const auto& [c, lat] : ring_spec)
        for (int s = 0; s < segments; ++s) {
            const double phi = 2 * M_PI * s / segments;
            add(c, c + r * std::sin(lat) * u + r * std::cos(lat) * (std::cos(phi) * e1 + std::sin(phi) * e2));
        }
    add(b, b + r * u);
    const int nring = static_cast<int>(ring_spec.size());
    auto idx = [&](int ring, int s) { return 1 + ring * segments + (s % segments); };
    const int top = static_cast<int>(m.vertices.size()) - 1;
    for (int s = 0; s < segments; ++s) m.faces.push_back({0, idx(0, s + 1), idx(0, s)});
    for (int k = 0; k + 1 < nring; ++k)
        for (int s = 0; s < segments; ++s) {
            m.faces.push_back({idx(k, s), idx(k, s + 1), idx(k + 1, s + 1)});
            m.faces.push_back({idx(k, s), idx(k + 1, s + 1), idx(k + 1, s)});
        }
    for (int s = 0; s < segments; ++s) m.faces.push_back({top, idx(nring - 1, s), idx(nring - 1, s + 1)});
    return m;
}

inline double smoothstep(double lo, double hi, double x) {
    const double t = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
    return t * t * (3 - 2 * t);
}

struct Part {
    Vec3d a, b;
    double radius;
    // skinning weights for a vertex at position p (length J, summing to 1)
    std::function<Eigen::RowVectorXd(const Vec3d&)> skin;
    std::function<Vec3f(const Vec3d&)> color;
};

// Assembles disjoint capsules into one rig. Shape direction 0 scales girth
// radially about each part's axis; an optional direction 1 stretches along y.
inline RiggedBodyModel assemble(const std::vector<Part>& parts, std::vector<Vec3d> joints, std::vector<int> parents,
                                std::vector<std::string> names, double girth_rate, double stretch_rate,
                                int segments = 24, int rings = 8) {
    RiggedBodyModel m;
    const int J = static_cast<int>(joints.size());
    const int K = stretch_rate != 0 ? 2 : 1;
    std::vector<Eigen::RowVectorXd> w;
    std::vector<Vec3d> girth;
    for (const auto& part : parts) {
        const auto cm = capsule_mesh(part.a, part.b, part.radius, segments, rings);
        const int base = static_cast<int>(m.vertices.size());
        for (std::size_t i = 0; i < cm.vertices.size(); ++i) {
            m.vertices.push_back(cm.vertices[i]);
            w.push_back(part.skin(cm.vertices[i]));
            girth.push_back(girth_rate * (cm.vertices[i] - cm.axis_points[i]));
        }
        for (const auto& f : cm.faces) {
            m.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
            if (part.color) {
                const Vec3d c = (cm.vertices[static_cast<std::size_t>(f[0])] + cm.vertices[static_cast<std::size_t>(f[1])] +
                                 cm.vertices[static_cast<std::size_t>(f[2])]) / 3.0;
                m.face_colors.push_back(part.color(c));
            }
        }
    }
    if (m.face_colors.size() != m.faces.size()) m.face_colors.clear();
    const int N = static_cast<int>(m.vertices.size());
    m.weights.resize(N, J);
    for (int v = 0; v < N; ++v) m.weights.row(v) = w[static_cast<std::size_t>(v)] / w[static_cast<std::size_t>(v)].sum();
    m.shape_dirs = Eigen::MatrixXd::Zero(3 * N, K);
    for (int v = 0; v < N; ++v) {
        m.shape_dirs.block<3, 1>(3 * v, 0) = girth[static_cast<std::size_t>(v)];
        if (K > 1) m.shape_dirs(3 * v + 1, 1) = stretch_rate * m.vertices[static_cast<std::size_t>(v)].y();
    }
    m.joint_shape_dirs = Eigen::MatrixXd::Zero(3 * J, K);
    if (K > 1)
        for (int j = 0; j < J; ++j) m.joint_shape_dirs(3 * j + 1, 1) = stretch_rate * joints[static_cast<std::size_t>(j)].y();
    m.joints = std::move(joints);
    m.parents = std::move(parents);
    m.joint_names = std::move(names);
    m.canonical_pose.assign(static_cast<std::size_t>(J), Vec3d::Zero());
    m.validate();
    return m;
}

inline Eigen::RowVectorXd one_hot(int J, int j) {
    Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(J);
    w[j] = 1;
    return w;
}

// Blend between joints `lo` and `hi` as t goes from 0 to 1.
inline Eigen::RowVectorXd blend(int J, int lo, int hi, double t) {
    Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(J);
    w[lo] = 1 - t;
    w[hi] += t;
    return w;
}

// Seven-joint capsule humanoid in T-pose, facing +z with +y up, about 1.75 units tall.
// Joints: root (pelvis), chest, neck, l_shoulder, r_shoulder, l_hip, r_hip.
inline RiggedBodyModel humanoid(int segments = 24, int rings = 8) {
    constexpr int J = 7;
    const std::vector<Vec3d> joints{{0, -0.1, 0},   {0, 0.2, 0},    {0, 0.42, 0},  {0.2, 0.3, 0},
                                    {-0.2, 0.3, 0}, {0.1, -0.25, 0}, {-0.1, -0.25, 0}};
    const std::vector<int> parents{-1, 0, 1, 1, 1, 0, 0};
    const Vec3f skin(0.93f, 0.76f, 0.62f), shirt_a(0.8f, 0.15f, 0.15f), shirt_b(0.95f, 0.95f, 0.9f),
        sleeve(0.15f, 0.3f, 0.75f), pants_a(0.1f, 0.35f, 0.2f), pants_b(0.3f, 0.55f, 0.35f);
    auto bands = [](double x, double width, Vec3f c0, Vec3f c1) {
        return static_cast<long>(std::floor(x / width)) % 2 == 0 ? c0 : c1;
    };
    std::vector<Part> parts;
    parts.push_back({{0, -0.2, 0}, {0, 0.28, 0}, 0.18,
                     [](const Vec3d& p) { return blend(J, 0, 1, smoothstep(-0.02, 0.12, p.y())); },
                     [=](const Vec3d& p) { return bands(p.y() + 1, 0.08, shirt_a, shirt_b); }});
    parts.push_back({{0, 0.36, 0}, {0, 0.5, 0}, 0.06,
                     [](const Vec3d& p) { return blend(J, 1, 2, smoothstep(0.38, 0.46, p.y())); },
                     [=](const Vec3d&) { return skin; }});
    parts.push_back({{0, 0.6, 0}, {0, 0.68, 0}, 0.13, [](const Vec3d&) { return one_hot(J, 2); },
                     [=](const Vec3d& p) { return p.y() > 0.72 || p.z() < -0.02 ? Vec3f(0.25f, 0.15f, 0.08f) : skin; }});
    for (int side : {1, -1}) {
        const int shoulder = side > 0 ? 3 : 4, hip = side > 0 ? 5 : 6;
        parts.push_back({{0.24 * side, 0.3, 0}, {0.82 * side, 0.3, 0}, 0.06,
                         [=](const Vec3d& p) { return blend(J, 1, shoulder, smoothstep(0.22, 0.3, std::abs(p.x()))); },
                         [=](const Vec3d& p) { return std::abs(p.x()) > 0.72 ? skin : sleeve; }});
        parts.push_back({{0.1 * side, -0.3, 0}, {0.1 * side, -0.84, 0}, 0.08,
                         [=](const Vec3d& p) { return blend(J, 0, hip, smoothstep(-0.25, -0.32, p.y())); },
                         [=](const Vec3d& p) { return bands(p.y() + 1, 0.06, pants_a, pants_b); }});
    }
    // a smoothstep with lo > hi flips orientation; the hip blend relies on that
    return assemble(parts, joints, parents, {"root", "chest", "neck", "l_shoulder", "r_shoulder", "l_hip", "r_hip"},
                    0.2, 0.08, segments, rings);
}

// Single joint at the origin; the whole capsule (along y) is rigidly attached.
// Shape direction 0 scales the radius by (1 + 0.5 beta).
inline RiggedBodyModel single_capsule(double half_length = 0.45, double radius = 0.2) {
    std::vector<Part> parts{{{0, -half_length, 0}, {0, half_length, 0}, radius,
                             [](const Vec3d&) { return one_hot(1, 0); },
                             [](const Vec3d& p) { return p.y() > 0 ? Vec3f(0.8f, 0.3f, 0.2f) : Vec3f(0.2f, 0.4f, 0.8f); }}};
    return assemble(parts, {Vec3d::Zero()}, {-1}, {"root"}, 0.5, 0.0, 32, 10);
}

// Three-joint chain along y with blended skinning around each joint.
inline RiggedBodyModel chain3() {
    constexpr int J = 3;
    std::vector<Part> parts{{{0, -0.6, 0}, {0, 0.7, 0}, 0.15,
                             [](const Vec3d& p) {
                                 Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(J);
                                 const double t1 = smoothstep(-0.2, 0.0, p.y()), t2 = smoothstep(0.3, 0.5, p.y());
                                 w[0] = 1 - t1;
                                 w[1] = t1 * (1 - t2);
                                 w[2] = t1 * t2;
                                 return w;
                             },
                             {}}};
    auto m = assemble(parts, {{0, -0.6, 0}, {0, -0.1, 0}, {0, 0.4, 0}}, {-1, 0, 1}, {"base", "middle", "tip"}, 0.3, 0.1,
                      12, 4);
    // a third, non-separable shape direction so the oracle sees generic blend shapes
    const int N = m.vertex_count();
    m.shape_dirs.conservativeResize(Eigen::NoChange, 3);
    m.joint_shape_dirs.conservativeResize(Eigen::NoChange, 3);
    for (int v = 0; v < N; ++v) {
        const Vec3d& p = m.vertices[static_cast<std::size_t>(v)];
        m.shape_dirs.block<3, 1>(3 * v, 2) = 0.05 * Vec3d(std::sin(3 * p.y()), std::cos(2 * p.x() + p.z()), p.x() * p.y());
    }
    m.joint_shape_dirs.col(2).setZero();
    m.joint_shape_dirs(3 * 2 + 0, 2) = 0.03;
    m.validate();
    return m;
}

inline RiggedBodyModel builtin(const std::string& name) {
    if (name == "test_rig" || name == "humanoid") return humanoid();
    if (name == "capsule") return single_capsule();
    if (name == "chain3") return chain3();
    throw PreconditionError("unknown built-in rig '" + name + "'");
}

inline bool is_builtin(const std::string& name) {
    return name == "test_rig" || name == "humanoid" || name == "capsule" || name == "chain3";
}

}  // namespace rigfield::synthetic
