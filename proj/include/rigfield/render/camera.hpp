#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "rigfield/core/errors.hpp"
#include "rigfield/core/types.hpp"

namespace rigfield {

// Pinhole camera, OpenCV convention: +z forward, +x right, +y down in camera space.
// `rotation` and `translation` map world to camera: x_cam = R x_world + t.
struct Camera {
    int width = 64;
    int height = 64;
    double focal = 64.0;  // pixels
    double cx = 32.0;
    double cy = 32.0;
    Mat3d rotation = Mat3d::Identity();
    Vec3d translation = Vec3d::Zero();
    double near = 0.1;
    double far = 10.0;

    Vec3d position() const { return -rotation.transpose() * translation; }
    Vec3d forward() const { return rotation.row(2).transpose(); }

    void validate() const {
        require(width >= 1 && height >= 1, "camera image size must be at least 1x1");
        require(focal > 0, "camera focal length must be positive");
        require(near < far && near >= 0, "camera needs 0 <= near < far");
        require((rotation * rotation.transpose() - Mat3d::Identity()).cwiseAbs().maxCoeff() < 1e-6,
                "camera rotation must be orthonormal");
        require(std::abs(rotation.determinant() - 1.0) < 1e-6, "camera rotation must have determinant 1");
    }

    // Number of rays per axis after keeping every `stride`-th pixel.
    int strided_width(int stride) const { return (width + stride - 1) / stride; }
    int strided_height(int stride) const { return (height + stride - 1) / stride; }

    // Unit world-space direction through the continuous image position (u, v) in pixels.
    Vec3d direction_at(double u, double v) const {
        const Vec3d d_cam((u - cx) / focal, (v - cy) / focal, 1.0);
        return (rotation.transpose() * d_cam).normalized();
    }

    // Camera at `eye` looking at `target`; `up` is a world-space hint.
    static Camera look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& up, int width, int height,
                          double fov_y, double near, double far) {
        require(fov_y > 0 && fov_y < M_PI, "field of view must lie in (0, pi)");
        Camera c;
        c.width = width;
        c.height = height;
        c.focal = 0.5 * height / std::tan(0.5 * fov_y);
        c.cx = 0.5 * width;
        c.cy = 0.5 * height;
        const Vec3d fwd = (target - eye).normalized();
        Vec3d right = fwd.cross(up);
        require(right.norm() > 1e-9, "look_at: up vector parallel to view direction");
        right.normalize();
        const Vec3d down = fwd.cross(right);
        c.rotation.row(0) = right.transpose();
        c.rotation.row(1) = down.transpose();
        c.rotation.row(2) = fwd.transpose();
        c.translation = -c.rotation * eye;
        c.near = near;
        c.far = far;
        c.validate();
        return c;
    }

    // Same pose and field of view at a different resolution.
    Camera resized(int new_width, int new_height) const {
        Camera c = *this;
        const double sx = static_cast<double>(new_width) / width, sy = static_cast<double>(new_height) / height;
        c.width = new_width;
        c.height = new_height;
        c.focal = focal * sy;
        c.cx = cx * sx;
        c.cy = cy * sy;
        return c;
    }
};

inline void to_json(nlohmann::json& j, const Camera& c) {
    j = {{"width", c.width},   {"height", c.height}, {"focal", c.focal}, {"cx", c.cx},
         {"cy", c.cy},         {"near", c.near},     {"far", c.far},
         {"rotation", {c.rotation(0, 0), c.rotation(0, 1), c.rotation(0, 2), c.rotation(1, 0), c.rotation(1, 1),
                       c.rotation(1, 2), c.rotation(2, 0), c.rotation(2, 1), c.rotation(2, 2)}},
         {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}}};
}

struct Ray {
    Vec3f origin = Vec3f::Zero();
    Vec3f direction = Vec3f::UnitZ();
    std::vector<float> t;  // strictly increasing sample parameters
};

// Ray through pixel (row, col) of the strided grid. The strided pixel (r, c)
// uses the center of full-resolution pixel (r * stride, c * stride), so a
// stride-k render is an exact subsample of the stride-1 render.
// Samples are stratified over [near, far]; with a jitter RNG each sample is
// uniform inside its stratum, otherwise it sits at the stratum midpoint.
inline Ray sample_ray(const Camera& cam, int row, int col, int n, int stride = 1, std::mt19937_64* jitter = nullptr) {
    require(n >= 2, "sample_ray: need at least 2 samples per ray");
    require(stride >= 1, "sample_ray: stride must be positive");
    require(row >= 0 && row < cam.strided_height(stride) && col >= 0 && col < cam.strided_width(stride),
            "sample_ray: pixel outside the strided image");
    Ray ray;
    ray.origin = cam.position().cast<float>();
    ray.direction = cam.direction_at(col * stride + 0.5, row * stride + 0.5).cast<float>();
    ray.t.resize(static_cast<std::size_t>(n));
    const double step = (cam.far - cam.near) / n;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        const double offset = jitter ? u(*jitter) : 0.5;
        ray.t[static_cast<std::size_t>(i)] = static_cast<float>(cam.near + (i + offset) * step);
    }
    return ray;
}

}  // namespace rigfield
