#include "ddreg/volume.hpp"

#include <algorithm>

namespace ddreg {

namespace {

inline double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

double sample_trilinear(const Volume& v, const Vec3& world_point) {
    const Grid& g = v.grid;
    Vec3 c = g.continuous_index(world_point);
    double cx = clampd(c.x, 0.0, g.shape[0] - 1.0);
    double cy = clampd(c.y, 0.0, g.shape[1] - 1.0);
    double cz = clampd(c.z, 0.0, g.shape[2] - 1.0);

    int x0 = static_cast<int>(cx);
    int y0 = static_cast<int>(cy);
    int z0 = static_cast<int>(cz);
    x0 = std::min(x0, g.shape[0] - 1);
    y0 = std::min(y0, g.shape[1] - 1);
    z0 = std::min(z0, g.shape[2] - 1);
    int x1 = std::min(x0 + 1, g.shape[0] - 1);
    int y1 = std::min(y0 + 1, g.shape[1] - 1);
    int z1 = std::min(z0 + 1, g.shape[2] - 1);

    double fx = cx - x0, fy = cy - y0, fz = cz - z0;

    double c000 = v.at(x0, y0, z0), c100 = v.at(x1, y0, z0);
    double c010 = v.at(x0, y1, z0), c110 = v.at(x1, y1, z0);
    double c001 = v.at(x0, y0, z1), c101 = v.at(x1, y0, z1);
    double c011 = v.at(x0, y1, z1), c111 = v.at(x1, y1, z1);

    double c00 = c000 * (1 - fx) + c100 * fx;
    double c10 = c010 * (1 - fx) + c110 * fx;
    double c01 = c001 * (1 - fx) + c101 * fx;
    double c11 = c011 * (1 - fx) + c111 * fx;
    double c0 = c00 * (1 - fy) + c10 * fy;
    double c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
}

std::uint8_t sample_nearest(const LabelMap& m, const Vec3& world_point) {
    const Grid& g = m.grid;
    Vec3 c = g.continuous_index(world_point);
    int i = static_cast<int>(std::floor(c.x + 0.5));
    int j = static_cast<int>(std::floor(c.y + 0.5));
    int k = static_cast<int>(std::floor(c.z + 0.5));
    i = std::clamp(i, 0, g.shape[0] - 1);
    j = std::clamp(j, 0, g.shape[1] - 1);
    k = std::clamp(k, 0, g.shape[2] - 1);
    return m.at(i, j, k);
}

}  // namespace ddreg
