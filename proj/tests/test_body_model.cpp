#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "rigfield/body/body_model.hpp"
#include "rigfield/body/synthetic.hpp"

using namespace rigfield;

namespace {

// Rotation from axis-angle through the explicit Rodrigues sum.
Mat3d rodrigues_oracle(const Vec3d& w) {
    const double th = std::sqrt(w.x() * w.x() + w.y() * w.y() + w.z() * w.z());
    if (th < 1e-300) return Mat3d::Identity();
    const Vec3d k = w / th;
    Mat3d K;
    K << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
    return Mat3d::Identity() + std::sin(th) * K + (1 - std::cos(th)) * K * K;
}

// Global transform of joint j: walk to the root, then compose top-down.
Mat4d global_oracle(const RiggedBodyModel& m, const std::vector<Vec3d>& theta, const std::vector<Vec3d>& joints, int j) {
    std::vector<int> chain;
    for (int k = j; k >= 0; k = m.parents[k]) chain.insert(chain.begin(), k);
    Mat4d g = Mat4d::Identity();
    for (int k : chain) {
        Mat4d local = Mat4d::Identity();
        local.topLeftCorner<3, 3>() = rodrigues_oracle(theta[k]);
        const int p = m.parents[k];
        local.topRightCorner<3, 1>() = p < 0 ? joints[k] : Vec3d(joints[k] - joints[p]);
        g = g * local;
    }
    return g;
}

std::vector<Vec3d> posed_oracle(const RiggedBodyModel& m, const BodyConfiguration& c) {
    const int N = m.vertex_count(), J = m.joint_count(), K = m.shape_count();
    std::vector<Vec3d> joints = m.joints;
    for (int j = 0; j < J; ++j)
        for (int k = 0; k < K; ++k)
            for (int a = 0; a < 3; ++a)
                if (m.joint_shape_dirs.size()) joints[j][a] += c.beta[k] * m.joint_shape_dirs(3 * j + a, k);
    std::vector<Mat4d> rel(J);
    for (int j = 0; j < J; ++j)
        rel[j] = global_oracle(m, c.theta, joints, j) * global_oracle(m, m.canonical_pose, joints, j).inverse();
    std::vector<Vec3d> out(N);
    for (int v = 0; v < N; ++v) {
        Eigen::Vector4d s(m.vertices[v].x(), m.vertices[v].y(), m.vertices[v].z(), 1.0);
        for (int k = 0; k < K; ++k)
            for (int a = 0; a < 3; ++a) s[a] += c.beta[k] * m.shape_dirs(3 * v + a, k);
        Eigen::Vector4d p = Eigen::Vector4d::Zero();
        for (int j = 0; j < J; ++j) p += m.weights(v, j) * (rel[j] * s);
        out[v] = p.head<3>() + c.root_translation;
    }
    return out;
}

BodyConfiguration random_config(const RiggedBodyModel& m, std::mt19937_64& rng, double pose_scale = 1.0) {
    std::uniform_real_distribution<double> u(-1, 1);
    BodyConfiguration c = BodyConfiguration::canonical(m);
    for (auto& a : c.theta) a = pose_scale * Vec3d(u(rng), u(rng), u(rng));
    c.root_translation = 0.3 * Vec3d(u(rng), u(rng), u(rng));
    for (int k = 0; k < c.beta.size(); ++k) c.beta[k] = 2 * u(rng);
    return c;
}

}  // namespace

TEST(BodyModel, SyntheticRigsAreValid) {
    for (const char* name : {"test_rig", "capsule", "chain3"}) {
        const auto m = synthetic::builtin(name);
        EXPECT_NO_THROW(m.validate()) << name;
        for (const auto& v : m.vertices) EXPECT_LE(v.cwiseAbs().maxCoeff(), 1.0) << name;
    }
    const auto h = synthetic::humanoid();
    EXPECT_EQ(h.joint_count(), 7);
    EXPECT_NEAR(h.height(), 1.75, 0.05);
    EXPECT_EQ(h.face_colors.size(), h.faces.size());
}

TEST(BodyModel, ValidationCatchesBrokenRigs) {
    auto m = synthetic::chain3();
    auto bad = m;
    bad.weights(0, 0) += 0.1;
    EXPECT_THROW(bad.validate(), PreconditionError);
    bad = m;
    bad.parents = {1, 2, 0};
    EXPECT_THROW(bad.validate(), PreconditionError);
    bad = m;
    bad.faces[0][1] = m.vertex_count();
    EXPECT_THROW(bad.validate(), PreconditionError);
    bad = m;
    bad.parents = {-1, -1, 1};
    EXPECT_THROW(bad.validate(), PreconditionError);
}

TEST(ShapeBlend, ZeroAndBasisVectors) {
    const auto m = synthetic::chain3();
    const auto zero = shape_blend(m, Eigen::VectorXd::Zero(m.shape_count()));
    for (int v = 0; v < m.vertex_count(); ++v) {
        EXPECT_EQ(zero.vertices[v], m.vertices[v]);
        EXPECT_EQ(zero.translation[v], Vec3d::Zero());
    }
    const auto e1 = shape_blend(m, Eigen::VectorXd::Unit(m.shape_count(), 0));
    for (int v = 0; v < m.vertex_count(); ++v)
        EXPECT_LT((e1.vertices[v] - (m.vertices[v] + m.shape_dirs.block<3, 1>(3 * v, 0))).norm(), 1e-12);
    EXPECT_THROW(shape_blend(m, Eigen::VectorXd::Zero(1)), PreconditionError);
}

TEST(ShapeBlend, MatchesPerVertexSum) {
    const auto m = synthetic::chain3();
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd beta(m.shape_count());
        for (int k = 0; k < beta.size(); ++k) beta[k] = g(rng);
        const auto s = shape_blend(m, beta);
        for (int v = 0; v < m.vertex_count(); ++v) {
            Vec3d want = m.vertices[v];
            for (int k = 0; k < beta.size(); ++k)
                for (int a = 0; a < 3; ++a) want[a] += beta[k] * m.shape_dirs(3 * v + a, k);
            EXPECT_LT((s.vertices[v] - want).norm(), 1e-7);
        }
    }
}

TEST(Lbs, CanonicalPoseIsIdentity) {
    const auto m = synthetic::humanoid();
    const auto t = vertex_transforms(m, BodyConfiguration::canonical(m));
    for (int v = 0; v < m.vertex_count(); ++v) {
        EXPECT_LT((t.forward[v] - Mat4d::Identity()).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LT((t.posed_vertices[v] - m.vertices[v]).norm(), 1e-12);
    }
}

TEST(Lbs, RigidQuarterTurn) {
    const auto m = synthetic::single_capsule();
    BodyConfiguration c = BodyConfiguration::canonical(m);
    c.theta[0] = Vec3d(0, 0, M_PI / 2);
    const auto posed = lbs(m, c.theta, m.vertices);
    for (int v = 0; v < m.vertex_count(); ++v) {
        const Vec3d& p = m.vertices[v];
        EXPECT_LT((posed.vertices[v] - Vec3d(-p.y(), p.x(), p.z())).norm(), 1e-12);
    }
}

TEST(Lbs, MatchesBruteForceForwardKinematics) {
    const auto m = synthetic::chain3();
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = random_config(m, rng);
        const auto t = vertex_transforms(m, c);
        const auto want = posed_oracle(m, c);
        double err = 0;
        for (int v = 0; v < m.vertex_count(); ++v) err = std::max(err, (t.posed_vertices[v] - want[v]).norm());
        ASSERT_LT(err, 1e-6) << "trial " << trial;
    }
}

TEST(Lbs, HumanoidMatchesOracle) {
    const auto m = synthetic::humanoid(12, 4);
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const auto c = random_config(m, rng, 0.6);
        const auto t = vertex_transforms(m, c);
        const auto want = posed_oracle(m, c);
        for (int v = 0; v < m.vertex_count(); ++v) ASSERT_LT((t.posed_vertices[v] - want[v]).norm(), 1e-6);
    }
}

TEST(Lbs, PosedVertexIsConvexCombinationOfRigidPlacements) {
    const auto m = synthetic::chain3();
    std::mt19937_64 rng(13);
    const auto c = random_config(m, rng);
    const auto shaped = shape_blend(m, c.beta);
    const auto joints = shaped_joints(m, c.beta);
    const auto g = joint_transforms(m, c.theta, joints), g0 = joint_transforms(m, m.canonical_pose, joints);
    const auto posed = lbs(m, c.theta, shaped.vertices, c.beta);
    for (int v = 0; v < m.vertex_count(); ++v) {
        Vec3d hull = Vec3d::Zero();
        for (int j = 0; j < m.joint_count(); ++j) {
            const double w = m.weights(v, j);
            ASSERT_GE(w, 0);
            ASSERT_LE(w, 1);
            hull += w * apply(g[j] * g0[j].inverse(), shaped.vertices[v]);
        }
        EXPECT_LT((hull - posed.vertices[v]).norm(), 1e-12);
    }
}

TEST(Lbs, RejectsNanPose) {
    const auto m = synthetic::chain3();
    auto theta = m.canonical_pose;
    theta[1].y() = std::nan("");
    EXPECT_THROW(lbs(m, theta, m.vertices), PreconditionError);
}

TEST(VertexTransforms, ComposeAndInvert) {
    const auto m = synthetic::chain3();
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const auto c = random_config(m, rng);
        const auto t = vertex_transforms(m, c);
        const auto shaped = shape_blend(m, c.beta);
        const auto posed = lbs(m, c.theta, shaped.vertices, c.beta);
        for (int v = 0; v < m.vertex_count(); ++v) {
            EXPECT_LT((t.forward[v] * t.inverse[v] - Mat4d::Identity()).cwiseAbs().maxCoeff(), 1e-5);
            EXPECT_LT((apply(t.forward[v], m.vertices[v]) - (posed.vertices[v] + c.root_translation)).norm(), 1e-6);
            EXPECT_LT((apply(t.inverse[v], t.posed_vertices[v]) - m.vertices[v]).norm(), 1e-5);
        }
    }
}

TEST(VertexTransforms, DegenerateBlendNamesVertex) {
    RiggedBodyModel m;
    m.vertices = {Vec3d(0.1, 0, 0)};
    m.joints = {Vec3d::Zero(), Vec3d::Zero()};
    m.parents = {-1, 0};
    m.weights.resize(1, 2);
    m.weights << 0.5, 0.5;
    m.shape_dirs = Eigen::MatrixXd::Zero(3, 0);
    m.canonical_pose = {Vec3d::Zero(), Vec3d::Zero()};
    m.validate();
    BodyConfiguration c = BodyConfiguration::canonical(m);
    c.theta[1] = Vec3d(0, 0, M_PI);
    try {
        vertex_transforms(m, c);
        FAIL() << "expected DegeneracyError";
    } catch (const DegeneracyError& e) {
        EXPECT_NE(std::string(e.what()).find("vertex 0"), std::string::npos);
    }
}

TEST(VertexTransforms, Deterministic) {
    const auto m = synthetic::chain3();
    std::mt19937_64 rng(19);
    const auto c = random_config(m, rng);
    const auto a = vertex_transforms(m, c), b = vertex_transforms(m, c);
    for (int v = 0; v < m.vertex_count(); ++v) EXPECT_EQ(a.forward[v], b.forward[v]);
}

TEST(RigFile, RoundTrip) {
    const auto m = synthetic::humanoid(12, 4);
    const auto path = (std::filesystem::temp_directory_path() / "rigfield_test.rig").string();
    save_rig(path, m);
    const auto r = load_rig(path);
    std::remove(path.c_str());
    ASSERT_EQ(r.vertex_count(), m.vertex_count());
    EXPECT_EQ(r.faces, m.faces);
    EXPECT_EQ(r.parents, m.parents);
    EXPECT_EQ(r.joint_names, m.joint_names);
    for (int v = 0; v < m.vertex_count(); ++v) EXPECT_LT((r.vertices[v] - m.vertices[v]).norm(), 1e-6);
    EXPECT_LT((r.shape_dirs - m.shape_dirs).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((r.weights - m.weights).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_EQ(r.face_colors.size(), m.face_colors.size());
}

TEST(RigFile, RejectsForeignFile) {
    const auto path = (std::filesystem::temp_directory_path() / "rigfield_not_a_rig.bin").string();
    {
        std::ofstream out(path);
        out << "hello world, definitely not a rig";
    }
    EXPECT_THROW(load_rig(path), FormatError);
    std::remove(path.c_str());
    EXPECT_THROW(load_rig("/nonexistent/rig.rig"), FormatError);
}

TEST(PoseSequence, ParsesAndValidates) {
    const auto m = synthetic::chain3();
    const nlohmann::json j = nlohmann::json::parse(R"([
        {"frame_index": 0, "theta": [[0,0,0],[0,0,0.5],[0,0,0]], "root_translation": [0, 0.1, 0], "beta": [0, 0, 0]},
        {"frame_index": 1, "theta": [[0,0,0],[0,0,1.0],[0,0,0]]}
    ])");
    const auto frames = parse_pose_sequence(j, m);
    ASSERT_EQ(frames.size(), 2u);
    EXPECT_DOUBLE_EQ(frames[0].config.theta[1].z(), 0.5);
    EXPECT_DOUBLE_EQ(frames[0].config.root_translation.y(), 0.1);
    EXPECT_EQ(frames[1].config.beta.size(), 3);
    const auto again = parse_pose_sequence(nlohmann::json::array({pose_frame_json(frames[0])}), m);
    EXPECT_EQ(again[0].config.theta, frames[0].config.theta);
    EXPECT_THROW(parse_pose_sequence(nlohmann::json::parse(R"([{"frame_index":0,"theta":[[0,0,0]]}])"), m),
                 PreconditionError);
}
