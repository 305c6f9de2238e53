#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "rigfield/core/errors.hpp"
#include "rigfield/core/types.hpp"

namespace rigfield {

struct HashGridConfig {
    int num_levels = 16;
    int base_resolution = 16;
    double per_level_scale = 1.38;
    int log2_table_size = 19;
    int feature_dim = 2;
    Aabb domain;

    void validate() const {
        require(num_levels >= 1, "hash grid needs at least one level");
        require(base_resolution >= 1, "base_resolution must be >= 1");
        require(per_level_scale >= 1.0, "per_level_scale must be >= 1");
        require(log2_table_size >= 1 && log2_table_size <= 26, "log2_table_size out of range [1, 26]");
        require(feature_dim >= 1, "feature_dim must be >= 1");
        require((domain.hi.array() > domain.lo.array()).all(), "domain box must have positive extent");
    }
};

inline void to_json(nlohmann::json& j, const HashGridConfig& c) {
    j = {{"num_levels", c.num_levels},
         {"base_resolution", c.base_resolution},
         {"per_level_scale", c.per_level_scale},
         {"log2_table_size", c.log2_table_size},
         {"feature_dim", c.feature_dim},
         {"domain_lo", {c.domain.lo.x(), c.domain.lo.y(), c.domain.lo.z()}},
         {"domain_hi", {c.domain.hi.x(), c.domain.hi.y(), c.domain.hi.z()}}};
}

inline void from_json(const nlohmann::json& j, HashGridConfig& c) {
    c.num_levels = j.at("num_levels").get<int>();
    c.base_resolution = j.at("base_resolution").get<int>();
    c.per_level_scale = j.at("per_level_scale").get<double>();
    c.log2_table_size = j.at("log2_table_size").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    const auto lo = j.at("domain_lo").get<std::array<float, 3>>();
    const auto hi = j.at("domain_hi").get<std::array<float, 3>>();
    c.domain.lo = Vec3f(lo[0], lo[1], lo[2]);
    c.domain.hi = Vec3f(hi[0], hi[1], hi[2]);
}

// Multiresolution voxel grid whose corner features live in per-level tables.
// Coarse levels whose (res+1)^3 corners fit in the table are indexed densely;
// finer levels use an XOR-folded prime hash. The feature tables themselves are
// not owned here: they are a contiguous slice of the owning field's parameters,
// level after level, `level_entries(l) * feature_dim` scalars each.
class HashGridEncoding {
public:
    static constexpr int kCorners = 8;

    struct Level {
        int resolution = 0;         // cells per axis
        std::int64_t entries = 0;   // table rows actually used
        std::int64_t offset = 0;    // first scalar of this level inside the table slice
        bool dense = false;
    };

    HashGridEncoding() = default;
    explicit HashGridEncoding(const HashGridConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        const std::int64_t table = std::int64_t{1} << cfg_.log2_table_size;
        std::int64_t offset = 0;
        for (int l = 0; l < cfg_.num_levels; ++l) {
            Level lv;
            lv.resolution = static_cast<int>(std::floor(cfg_.base_resolution * std::pow(cfg_.per_level_scale, l)));
            const std::int64_t corners = std::int64_t(lv.resolution + 1) * (lv.resolution + 1) * (lv.resolution + 1);
            lv.dense = corners <= table;
            lv.entries = lv.dense ? corners : table;
            lv.offset = offset;
            offset += lv.entries * cfg_.feature_dim;
            levels_.push_back(lv);
        }
        param_count_ = offset;
        const Vec3f ext = cfg_.domain.extent();
        inv_extent_ = Vec3d(1.0 / ext.x(), 1.0 / ext.y(), 1.0 / ext.z());
    }

    const HashGridConfig& config() const { return cfg_; }
    const std::vector<Level>& levels() const { return levels_; }
    int num_levels() const { return cfg_.num_levels; }
    int feature_dim() const { return cfg_.feature_dim; }
    int output_dim() const { return cfg_.num_levels * cfg_.feature_dim; }
    std::int64_t param_count() const { return param_count_; }
    const Aabb& domain() const { return cfg_.domain; }

    // Table row (within its level) for integer corner coordinates.
    std::int64_t corner_index(int level, std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        const Level& lv = levels_[level];
        if (lv.dense) {
            const std::int64_t n = lv.resolution + 1;
            return x + n * (y + n * std::int64_t(z));
        }
        const std::uint32_t h = (x * 1u) ^ (y * 2654435761u) ^ (z * 805459861u);
        return static_cast<std::int64_t>(h & static_cast<std::uint32_t>(lv.entries - 1));
    }

    // Per-level interpolation record of one query point.
    template <typename Scalar>
    struct Lookup {
        std::array<std::int64_t, kCorners> offset;  // scalar offset of each corner's feature row
        std::array<Scalar, kCorners> weight;
        std::array<Scalar, 3> frac;
        Scalar scale[3];  // d(frac)/dx per axis
    };

    bool inside(const Vec3d& x) const {
        constexpr double eps = 1e-6;
        for (int a = 0; a < 3; ++a)
            if (x[a] < cfg_.domain.lo[a] - eps || x[a] > cfg_.domain.hi[a] + eps) return false;
        return true;
    }

    template <typename Scalar>
    void lookup(const Eigen::Matrix<Scalar, 3, 1>& x, int level, Lookup<Scalar>& out) const {
        const Level& lv = levels_[level];
        std::array<std::uint32_t, 3> cell{};
        for (int a = 0; a < 3; ++a) {
            const Scalar u = (x[a] - Scalar(cfg_.domain.lo[a])) * Scalar(inv_extent_[a]);
            const Scalar pos = std::clamp(u, Scalar(0), Scalar(1)) * Scalar(lv.resolution);
            int c = static_cast<int>(std::floor(pos));
            if (c >= lv.resolution) c = lv.resolution - 1;
            if (c < 0) c = 0;
            cell[a] = static_cast<std::uint32_t>(c);
            out.frac[a] = pos - Scalar(c);
            out.scale[a] = Scalar(lv.resolution * inv_extent_[a]);
        }
        for (int k = 0; k < kCorners; ++k) {
            const std::uint32_t cx = cell[0] + (k & 1), cy = cell[1] + ((k >> 1) & 1), cz = cell[2] + ((k >> 2) & 1);
            Scalar w = 1;
            for (int a = 0; a < 3; ++a) w *= ((k >> a) & 1) ? out.frac[a] : Scalar(1) - out.frac[a];
            out.weight[k] = w;
            out.offset[k] = lv.offset + corner_index(level, cx, cy, cz) * cfg_.feature_dim;
        }
    }

    // Gradient of corner k's trilinear weight with respect to x.
    template <typename Scalar>
    static Eigen::Matrix<Scalar, 3, 1> weight_gradient(const Lookup<Scalar>& lk, int k) {
        Eigen::Matrix<Scalar, 3, 1> g;
        for (int a = 0; a < 3; ++a) {
            Scalar d = ((k >> a) & 1) ? Scalar(1) : Scalar(-1);
            for (int b = 0; b < 3; ++b) {
                if (b == a) continue;
                d *= ((k >> b) & 1) ? lk.frac[b] : Scalar(1) - lk.frac[b];
            }
            g[a] = d * lk.scale[a];
        }
        return g;
    }

    // Concatenated per-level features. Throws DomainError outside the domain box.
    template <typename Scalar>
    std::vector<Scalar> encode(const Eigen::Matrix<Scalar, 3, 1>& x, std::span<const Scalar> table) const {
        check_inside(x.template cast<double>());
        std::vector<Scalar> out(static_cast<std::size_t>(output_dim()), Scalar(0));
        Lookup<Scalar> lk;
        for (int l = 0; l < cfg_.num_levels; ++l) {
            lookup(x, l, lk);
            for (int k = 0; k < kCorners; ++k)
                for (int f = 0; f < cfg_.feature_dim; ++f)
                    out[l * cfg_.feature_dim + f] += lk.weight[k] * table[lk.offset[k] + f];
        }
        return out;
    }

    void check_inside(const Vec3d& x) const {
        if (!inside(x)) {
            std::ostringstream msg;
            msg << "point (" << x.x() << ", " << x.y() << ", " << x.z() << ") lies outside the encoding domain";
            throw DomainError(msg.str());
        }
    }

private:
    HashGridConfig cfg_;
    std::vector<Level> levels_;
    std::int64_t param_count_ = 0;
    Vec3d inv_extent_ = Vec3d::Ones();
};

}  // namespace rigfield
