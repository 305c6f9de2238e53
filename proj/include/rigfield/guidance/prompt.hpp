#pragma once

#include <cmath>
#include <string>

#include "rigfield/core/errors.hpp"

namespace rigfield {

enum class ViewTag { Front, Side, Back };
enum class BodyPart { Body, Face };

inline const char* to_string(ViewTag v) {
    switch (v) {
        case ViewTag::Front: return "front";
        case ViewTag::Side: return "side";
        case ViewTag::Back: return "back";
    }
    return "?";
}

inline const char* to_string(BodyPart p) { return p == BodyPart::Body ? "body" : "face"; }

// Azimuth folded into [0, 2pi).
inline double wrap_azimuth(double phi) {
    double w = std::fmod(phi, 2 * M_PI);
    if (w < 0) w += 2 * M_PI;
    if (w >= 2 * M_PI) w = 0;  // fmod of a value just below a multiple of 2pi
    return w;
}

// phi = 0 looks at the back of the body, phi = pi at its front.
// Boundary azimuths belong to the named (front/back) region.
inline ViewTag view_for_azimuth(double phi) {
    const double w = wrap_azimuth(phi);
    if (w >= 5 * M_PI / 6 && w <= 7 * M_PI / 6) return ViewTag::Front;
    if (w <= M_PI / 6 || w >= 2 * M_PI - M_PI / 6) return ViewTag::Back;  // same rounding as wrap_azimuth(-pi/6)
    return ViewTag::Side;
}

inline std::string augment_prompt(const std::string& prompt, BodyPart part, double phi) {
    static const char* names[] = {"Front", "Side", "Back"};
    return std::string(names[static_cast<int>(view_for_azimuth(phi))]) + " view of the " + to_string(part) + " of " + prompt;
}

}  // namespace rigfield
