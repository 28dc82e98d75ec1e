#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ddreg/errors.hpp"

namespace ddreg {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
    bool operator==(const Vec3&) const = default;
};

// Voxel lattice in world coordinates. Voxel (i,j,k) has its *center* at
// origin + (i,j,k) * spacing. Axis order is x,y,z everywhere; payloads are
// dense x-fastest: flat = x + nx*(y + ny*z).
struct Grid {
    std::array<int, 3> shape{1, 1, 1};  // voxels
    Vec3 spacing{1, 1, 1};              // mm/voxel
    Vec3 origin{0, 0, 0};               // mm, center of voxel (0,0,0)

    std::int64_t voxel_count() const {
        return static_cast<std::int64_t>(shape[0]) * shape[1] * shape[2];
    }
    std::int64_t flat(int i, int j, int k) const {
        return i + static_cast<std::int64_t>(shape[0]) * (j + static_cast<std::int64_t>(shape[1]) * k);
    }
    Vec3 world(double i, double j, double k) const {
        return {origin.x + i * spacing.x, origin.y + j * spacing.y, origin.z + k * spacing.z};
    }
    // World point -> continuous voxel index (inverse of world()).
    Vec3 continuous_index(const Vec3& p) const {
        return {(p.x - origin.x) / spacing.x, (p.y - origin.y) / spacing.y, (p.z - origin.z) / spacing.z};
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (shape[a] < 1) throw ValidationError("Grid: shape components must be >= 1");
            if (!(spacing[a] > 0) || !std::isfinite(spacing[a]))
                throw ValidationError("Grid: spacing components must be positive finite");
        }
        if (!origin.finite()) throw ValidationError("Grid: origin must be finite");
    }

    bool operator==(const Grid&) const = default;
};

struct Volume {
    Grid grid;
    std::vector<double> data;  // x-fastest scalars

    Volume() = default;
    Volume(const Grid& g, double fill = 0.0) : grid(g), data(g.voxel_count(), fill) { grid.validate(); }

    double& at(int i, int j, int k) { return data[grid.flat(i, j, k)]; }
    double at(int i, int j, int k) const { return data[grid.flat(i, j, k)]; }

    void validate() const {
        grid.validate();
        if (static_cast<std::int64_t>(data.size()) != grid.voxel_count())
            throw ValidationError("Volume: data length does not match grid shape");
    }
    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

struct LabelMap {
    Grid grid;
    std::vector<std::uint8_t> data;      // x-fastest labels, 0 = background
    std::vector<std::uint8_t> labels;    // sorted distinct nonzero values in data

    LabelMap() = default;
    LabelMap(const Grid& g, std::vector<std::uint8_t> d) : grid(g), data(std::move(d)) {
        grid.validate();
        if (static_cast<std::int64_t>(data.size()) != grid.voxel_count())
            throw ValidationError("LabelMap: data length does not match grid shape");
        refresh_labels();
    }

    std::uint8_t at(int i, int j, int k) const { return data[grid.flat(i, j, k)]; }

    void refresh_labels() {
        bool present[256] = {};
        for (std::uint8_t v : data) present[v] = true;
        labels.clear();
        for (int v = 1; v < 256; ++v)
            if (present[v]) labels.push_back(static_cast<std::uint8_t>(v));
    }
    bool has_label(std::uint8_t l) const {
        for (auto v : labels)
            if (v == l) return true;
        return false;
    }
    bool empty_mask() const { return labels.empty(); }
};

// Per-voxel displacement in millimetres, world-axis aligned. Backward-warp
// convention: the image value at voxel x is sampled at world(x) + field(x).
struct DisplacementField {
    Grid grid;
    std::vector<Vec3> vectors;

    DisplacementField() = default;
    explicit DisplacementField(const Grid& g) : grid(g), vectors(g.voxel_count()) { grid.validate(); }

    Vec3& at(int i, int j, int k) { return vectors[grid.flat(i, j, k)]; }
    const Vec3& at(int i, int j, int k) const { return vectors[grid.flat(i, j, k)]; }

    void validate() const {
        grid.validate();
        if (static_cast<std::int64_t>(vectors.size()) != grid.voxel_count())
            throw ValidationError("DisplacementField: vector count does not match grid shape");
        for (const auto& v : vectors)
            if (!v.finite()) throw NumericError("DisplacementField: non-finite vector");
    }
};

// Trilinear sample at a world point, clamp-to-edge outside the grid.
double sample_trilinear(const Volume& v, const Vec3& world_point);

// Label of the voxel nearest to a world point; nearest index = floor(c + 0.5)
// per axis on the continuous index c, clamped to the grid.
std::uint8_t sample_nearest(const LabelMap& m, const Vec3& world_point);

}  // namespace ddreg
