#include "ddreg/warp.hpp"

#include <algorithm>
#include <cmath>

#include "ddreg/threading.hpp"

namespace ddreg {

OneHotStack OneHotStack::from_labelmap(const LabelMap& m) {
    return from_labelmap(m, m.labels);
}

OneHotStack OneHotStack::from_labelmap(const LabelMap& m, const std::vector<std::uint8_t>& basis) {
    OneHotStack s;
    s.grid = m.grid;
    s.channel_labels = basis;
    s.channels.resize(basis.size());
    for (std::size_t c = 0; c < basis.size(); ++c) {
        s.channels[c].assign(m.data.size(), 0.0);
        std::uint8_t l = basis[c];
        for (std::size_t i = 0; i < m.data.size(); ++i)
            if (m.data[i] == l) s.channels[c][i] = 1.0;
    }
    return s;
}

namespace {

inline void decode(std::int64_t idx, int nx, int ny, int& i, int& j, int& k) {
    i = static_cast<int>(idx % nx);
    j = static_cast<int>((idx / nx) % ny);
    k = static_cast<int>(idx / (static_cast<std::int64_t>(nx) * ny));
}

}  // namespace

Volume warp_trilinear(const Volume& v, const DisplacementField& f) {
    if (!(v.grid == f.grid)) throw ShapeError("warp_trilinear: volume and field grids differ");
    Volume out(v.grid);
    const int nx = v.grid.shape[0], ny = v.grid.shape[1];
    parallel_for(v.grid.voxel_count(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t idx = b; idx < e; ++idx) {
            int i, j, k;
            decode(idx, nx, ny, i, j, k);
            Vec3 p = v.grid.world(i, j, k) + f.vectors[idx];
            out.data[idx] = sample_trilinear(v, p);
        }
    });
    return out;
}

LabelMap warp_nearest(const LabelMap& m, const DisplacementField& f) {
    if (!(m.grid == f.grid)) throw ShapeError("warp_nearest: label map and field grids differ");
    std::vector<std::uint8_t> data(m.data.size());
    const int nx = m.grid.shape[0], ny = m.grid.shape[1];
    parallel_for(m.grid.voxel_count(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t idx = b; idx < e; ++idx) {
            int i, j, k;
            decode(idx, nx, ny, i, j, k);
            Vec3 p = m.grid.world(i, j, k) + f.vectors[idx];
            data[idx] = sample_nearest(m, p);
        }
    });
    return LabelMap(m.grid, std::move(data));
}

OneHotStack warp_onehot(const OneHotStack& s, const DisplacementField& f) {
    if (!(s.grid == f.grid)) throw ShapeError("warp_onehot: stack and field grids differ");
    OneHotStack out;
    out.grid = s.grid;
    out.channel_labels = s.channel_labels;
    out.channels.resize(s.channels.size());
    for (std::size_t c = 0; c < s.channels.size(); ++c) {
        Volume chan;
        chan.grid = s.grid;
        chan.data = s.channels[c];
        out.channels[c] = warp_trilinear(chan, f).data;
    }
    return out;
}

void warp_backward(const Volume& v, const DisplacementField& f, const Volume& upstream,
                   Volume& grad_v, DisplacementField& grad_f) {
    if (!(v.grid == f.grid) || !(v.grid == upstream.grid))
        throw ShapeError("warp_backward: grids differ");
    const Grid& g = v.grid;
    grad_v = Volume(g);
    grad_f = DisplacementField(g);
    const int nx = g.shape[0], ny = g.shape[1];

    // grad_f has disjoint writes and parallelizes; grad_v is a scatter-add
    // over the 8 interpolation corners, accumulated serially afterwards so
    // results do not depend on the thread partition.
    parallel_for(g.voxel_count(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t idx = b; idx < e; ++idx) {
            int i, j, k;
            decode(idx, nx, ny, i, j, k);
            Vec3 p = g.world(i, j, k) + f.vectors[idx];
            Vec3 c = g.continuous_index(p);

            double cx = c.x, cy = c.y, cz = c.z;
            bool clx = cx <= 0.0 || cx >= g.shape[0] - 1.0;
            bool cly = cy <= 0.0 || cy >= g.shape[1] - 1.0;
            bool clz = cz <= 0.0 || cz >= g.shape[2] - 1.0;
            cx = std::clamp(cx, 0.0, g.shape[0] - 1.0);
            cy = std::clamp(cy, 0.0, g.shape[1] - 1.0);
            cz = std::clamp(cz, 0.0, g.shape[2] - 1.0);

            int x0 = std::min(static_cast<int>(cx), g.shape[0] - 1);
            int y0 = std::min(static_cast<int>(cy), g.shape[1] - 1);
            int z0 = std::min(static_cast<int>(cz), g.shape[2] - 1);
            int x1 = std::min(x0 + 1, g.shape[0] - 1);
            int y1 = std::min(y0 + 1, g.shape[1] - 1);
            int z1 = std::min(z0 + 1, g.shape[2] - 1);
            double fx = cx - x0, fy = cy - y0, fz = cz - z0;

            double c000 = v.at(x0, y0, z0), c100 = v.at(x1, y0, z0);
            double c010 = v.at(x0, y1, z0), c110 = v.at(x1, y1, z0);
            double c001 = v.at(x0, y0, z1), c101 = v.at(x1, y0, z1);
            double c011 = v.at(x0, y1, z1), c111 = v.at(x1, y1, z1);

            // d(out)/d(continuous index), piecewise-linear cell derivatives
            double dx = (c100 - c000) * (1 - fy) * (1 - fz) + (c110 - c010) * fy * (1 - fz) +
                        (c101 - c001) * (1 - fy) * fz + (c111 - c011) * fy * fz;
            double dy = (c010 - c000) * (1 - fx) * (1 - fz) + (c110 - c100) * fx * (1 - fz) +
                        (c011 - c001) * (1 - fx) * fz + (c111 - c101) * fx * fz;
            double dz = (c001 - c000) * (1 - fx) * (1 - fy) + (c101 - c100) * fx * (1 - fy) +
                        (c011 - c010) * (1 - fx) * fy + (c111 - c110) * fx * fy;

            double u = upstream.data[idx];
            grad_f.vectors[idx] = {clx ? 0.0 : u * dx / g.spacing.x,
                                   cly ? 0.0 : u * dy / g.spacing.y,
                                   clz ? 0.0 : u * dz / g.spacing.z};
        }
    });

    for (std::int64_t idx = 0; idx < g.voxel_count(); ++idx) {
        int i, j, k;
        decode(idx, nx, ny, i, j, k);
        Vec3 p = g.world(i, j, k) + f.vectors[idx];
        Vec3 c = g.continuous_index(p);
        double cx = std::clamp(c.x, 0.0, g.shape[0] - 1.0);
        double cy = std::clamp(c.y, 0.0, g.shape[1] - 1.0);
        double cz = std::clamp(c.z, 0.0, g.shape[2] - 1.0);
        int x0 = std::min(static_cast<int>(cx), g.shape[0] - 1);
        int y0 = std::min(static_cast<int>(cy), g.shape[1] - 1);
        int z0 = std::min(static_cast<int>(cz), g.shape[2] - 1);
        int x1 = std::min(x0 + 1, g.shape[0] - 1);
        int y1 = std::min(y0 + 1, g.shape[1] - 1);
        int z1 = std::min(z0 + 1, g.shape[2] - 1);
        double fx = cx - x0, fy = cy - y0, fz = cz - z0;
        double u = upstream.data[idx];

        grad_v.at(x0, y0, z0) += u * (1 - fx) * (1 - fy) * (1 - fz);
        grad_v.at(x1, y0, z0) += u * fx * (1 - fy) * (1 - fz);
        grad_v.at(x0, y1, z0) += u * (1 - fx) * fy * (1 - fz);
        grad_v.at(x1, y1, z0) += u * fx * fy * (1 - fz);
        grad_v.at(x0, y0, z1) += u * (1 - fx) * (1 - fy) * fz;
        grad_v.at(x1, y0, z1) += u * fx * (1 - fy) * fz;
        grad_v.at(x0, y1, z1) += u * (1 - fx) * fy * fz;
        grad_v.at(x1, y1, z1) += u * fx * fy * fz;
    }
}

}  // namespace ddreg
