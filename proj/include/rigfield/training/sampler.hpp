#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rigfield/body/body_model.hpp"
#include "rigfield/guidance/prompt.hpp"
#include "rigfield/render/camera.hpp"
#include "rigfield/render/renderer.hpp"

namespace rigfield {

struct SceneBox {
    Vec3d lo = Vec3d::Constant(-1), hi = Vec3d::Constant(1);

    Vec3d center() const { return 0.5 * (lo + hi); }
    double radius() const { return 0.5 * (hi - lo).norm(); }
    bool contains(const Vec3d& p, double eps = 0) const {
        return (p.array() >= lo.array() - eps).all() && (p.array() <= hi.array() + eps).all();
    }
    bool contains(const SceneBox& o) const { return (o.lo.array() >= lo.array()).all() && (o.hi.array() <= hi.array()).all(); }
    Aabb aabb() const { return {lo.cast<float>(), hi.cast<float>()}; }
};

struct SceneBoxes {
    SceneBox body, face;
    const SceneBox& operator[](BodyPart p) const { return p == BodyPart::Body ? body : face; }
};

struct FaceBoxSettings {
    double top_fraction = 0.15;   // of the canonical height
    double neck_margin = 0.03;    // extra drop below the head region, also a fraction of the height
};

// Body box around every template vertex; face box around the vertices in the
// top slice of the height (y up), lowered by the neck margin.
inline SceneBoxes scene_boxes(const RiggedBodyModel& m, const FaceBoxSettings& fs = {}) {
    require(!m.vertices.empty(), "scene_boxes: rig has no vertices");
    require(fs.top_fraction > 0 && fs.top_fraction <= 1 && fs.neck_margin >= 0, "scene_boxes: bad face-box settings");
    SceneBoxes b;
    b.body.lo = Vec3d::Constant(1e300);
    b.body.hi = Vec3d::Constant(-1e300);
    for (const auto& v : m.vertices) {
        b.body.lo = b.body.lo.cwiseMin(v);
        b.body.hi = b.body.hi.cwiseMax(v);
    }
    const double h = b.body.hi.y() - b.body.lo.y();
    const double cut = b.body.hi.y() - fs.top_fraction * h;
    b.face.lo = Vec3d::Constant(1e300);
    b.face.hi = Vec3d::Constant(-1e300);
    for (const auto& v : m.vertices)
        if (v.y() >= cut) {
            b.face.lo = b.face.lo.cwiseMin(v);
            b.face.hi = b.face.hi.cwiseMax(v);
        }
    b.face.lo.y() = std::max(b.body.lo.y(), b.face.lo.y() - fs.neck_margin * h);
    return b;
}

struct CameraDraw {
    double elevation = 0;
    double azimuth = M_PI;  // wrapped to [0, 2pi); pi looks at the front
    double distance = 2.0;
};

inline void to_json(nlohmann::json& j, const CameraDraw& d) {
    j = {{"elevation", d.elevation}, {"azimuth", d.azimuth}, {"distance", d.distance}};
}

struct CameraSampler {
    double elevation_lo = -M_PI / 6, elevation_hi = M_PI / 6;
    double azimuth_half_width = M_PI / 3;  // around 0 (back) and pi (front)
    double distance_lo = 2.0, distance_hi = 2.2;
    double fov_y = 0.9;

    CameraDraw draw(std::mt19937_64& rng) const {
        std::uniform_real_distribution<double> u(0, 1);
        CameraDraw d;
        d.elevation = elevation_lo + u(rng) * (elevation_hi - elevation_lo);
        const double centre = u(rng) < 0.5 ? 0.0 : M_PI;
        d.azimuth = wrap_azimuth(centre + (2 * u(rng) - 1) * azimuth_half_width);
        d.distance = distance_lo + u(rng) * (distance_hi - distance_lo);
        return d;
    }

    bool in_support(const CameraDraw& d) const {
        const double w = wrap_azimuth(d.azimuth);
        const bool az = w <= azimuth_half_width || w >= 2 * M_PI - azimuth_half_width ||
                        std::abs(w - M_PI) <= azimuth_half_width;
        return d.elevation >= elevation_lo && d.elevation <= elevation_hi && az && d.distance >= distance_lo &&
               d.distance <= distance_hi;
    }
};

// Unit vector from the look-at target towards the camera.
inline Vec3d orbit_direction(double elevation, double azimuth) {
    return {std::sin(azimuth) * std::cos(elevation), std::sin(elevation), -std::cos(azimuth) * std::cos(elevation)};
}

// Camera looking at the box center. Distances are in body-box units: for a
// smaller box the camera moves in by the ratio of box radii so the box fills
// a similar part of the frame. near/far bracket the box's bounding sphere.
inline Camera box_camera(const SceneBox& box, const SceneBox& body, const CameraDraw& d, int width, int height,
                         double fov_y) {
    const double scale = box.radius() / body.radius();
    const double dist = d.distance * scale;
    const Vec3d eye = box.center() + dist * orbit_direction(d.elevation, d.azimuth);
    const double r = 1.05 * box.radius();
    return Camera::look_at(eye, box.center(), Vec3d(0, 1, 0), width, height, fov_y, std::max(0.02, dist - r), dist + r);
}

inline BackgroundKind sample_background_kind(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> k(0, 2);
    return static_cast<BackgroundKind>(k(rng));
}

}  // namespace rigfield
