// Independent reference implementations the tests check against. These are
// deliberately written as direct loops over definitions, sharing no code
// with the library paths they verify.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ddreg/graph.hpp"
#include "ddreg/rng.hpp"
#include "ddreg/volume.hpp"
#include "ddreg/warp.hpp"

namespace oracle {

using ddreg::Grid;
using ddreg::LabelMap;
using ddreg::Vec3;
using ddreg::Volume;

// Trilinear sample at a world point, clamp-to-edge, corner-loop form.
inline double trilinear(const Volume& v, const Vec3& p) {
    const Grid& g = v.grid;
    double c[3];
    for (int a = 0; a < 3; ++a) {
        c[a] = (p[a] - g.origin[a]) / g.spacing[a];
        c[a] = std::max(0.0, std::min(c[a], g.shape[a] - 1.0));
    }
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        base[a] = std::min(static_cast<int>(std::floor(c[a])), g.shape[a] - 1);
        frac[a] = c[a] - base[a];
    }
    double acc = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                int i = std::min(base[0] + dx, g.shape[0] - 1);
                int j = std::min(base[1] + dy, g.shape[1] - 1);
                int k = std::min(base[2] + dz, g.shape[2] - 1);
                double w = (dx ? frac[0] : 1 - frac[0]) * (dy ? frac[1] : 1 - frac[1]) *
                           (dz ? frac[2] : 1 - frac[2]);
                acc += w * v.at(i, j, k);
            }
    return acc;
}

// Nearest-voxel label via the documented floor(c + 0.5) rule.
inline std::uint8_t nearest_label(const LabelMap& m, const Vec3& p) {
    const Grid& g = m.grid;
    int idx[3];
    for (int a = 0; a < 3; ++a) {
        double c = (p[a] - g.origin[a]) / g.spacing[a];
        idx[a] = static_cast<int>(std::floor(c + 0.5));
        idx[a] = std::max(0, std::min(idx[a], g.shape[a] - 1));
    }
    return m.at(idx[0], idx[1], idx[2]);
}

// Tight bounding box of nonzero voxels by exhaustive scan: {lo, hi} per axis.
struct Box {
    int lo[3], hi[3];
};
inline Box mask_bbox(const LabelMap& m) {
    Box b{{m.grid.shape[0], m.grid.shape[1], m.grid.shape[2]}, {-1, -1, -1}};
    for (int k = 0; k < m.grid.shape[2]; ++k)
        for (int j = 0; j < m.grid.shape[1]; ++j)
            for (int i = 0; i < m.grid.shape[0]; ++i)
                if (m.at(i, j, k)) {
                    b.lo[0] = std::min(b.lo[0], i);
                    b.hi[0] = std::max(b.hi[0], i);
                    b.lo[1] = std::min(b.lo[1], j);
                    b.hi[1] = std::max(b.hi[1], j);
                    b.lo[2] = std::min(b.lo[2], k);
                    b.hi[2] = std::max(b.hi[2], k);
                }
    return b;
}

inline Vec3 centroid(const LabelMap& m, std::uint8_t label) {
    Vec3 s{0, 0, 0};
    long n = 0;
    for (int k = 0; k < m.grid.shape[2]; ++k)
        for (int j = 0; j < m.grid.shape[1]; ++j)
            for (int i = 0; i < m.grid.shape[0]; ++i)
                if (m.at(i, j, k) == label) {
                    s += m.grid.world(i, j, k);
                    ++n;
                }
    return s / static_cast<double>(n);
}

// Exhaustive exact distance transform: min over all labeled voxels, squared
// sums accumulated x then y then z to match the separable pass order.
inline Volume edt_bruteforce(const LabelMap& m, std::uint8_t label) {
    Volume out(m.grid);
    std::vector<std::array<int, 3>> sites;
    for (int k = 0; k < m.grid.shape[2]; ++k)
        for (int j = 0; j < m.grid.shape[1]; ++j)
            for (int i = 0; i < m.grid.shape[0]; ++i)
                if (m.at(i, j, k) == label) sites.push_back({i, j, k});
    const Vec3 s = m.grid.spacing;
    std::int64_t idx = 0;
    for (int k = 0; k < m.grid.shape[2]; ++k)
        for (int j = 0; j < m.grid.shape[1]; ++j)
            for (int i = 0; i < m.grid.shape[0]; ++i, ++idx) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& q : sites) {
                    double dx = (i - q[0]) * s.x;
                    double acc = dx * dx;
                    double dy = (j - q[1]) * s.y;
                    acc += dy * dy;
                    double dz = (k - q[2]) * s.z;
                    acc += dz * dz;
                    best = std::min(best, acc);
                }
                out.data[idx] = std::sqrt(best);
            }
    return out;
}

// 6-connectivity boundary voxel positions of one label.
inline std::vector<std::array<int, 3>> boundary_voxels(const LabelMap& m, std::uint8_t label) {
    std::vector<std::array<int, 3>> out;
    const auto& sh = m.grid.shape;
    auto is = [&](int i, int j, int k) {
        if (i < 0 || j < 0 || k < 0 || i >= sh[0] || j >= sh[1] || k >= sh[2]) return false;
        return m.at(i, j, k) == label;
    };
    for (int k = 0; k < sh[2]; ++k)
        for (int j = 0; j < sh[1]; ++j)
            for (int i = 0; i < sh[0]; ++i) {
                if (!is(i, j, k)) continue;
                if (!is(i - 1, j, k) || !is(i + 1, j, k) || !is(i, j - 1, k) || !is(i, j + 1, k) ||
                    !is(i, j, k - 1) || !is(i, j, k + 1))
                    out.push_back({i, j, k});
            }
    return out;
}

// All directed boundary distances d(a -> B) by exhaustive pairwise scan.
inline std::vector<double> directed_distances(const std::vector<std::array<int, 3>>& A,
                                              const std::vector<std::array<int, 3>>& B, const Vec3& s) {
    std::vector<double> out;
    for (const auto& a : A) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : B) {
            double dx = (a[0] - b[0]) * s.x;
            double acc = dx * dx;
            double dy = (a[1] - b[1]) * s.y;
            acc += dy * dy;
            double dz = (a[2] - b[2]) * s.z;
            acc += dz * dz;
            best = std::min(best, acc);
        }
        out.push_back(std::sqrt(best));
    }
    return out;
}

// Zero-normalized cross-correlation, plain two-pass textbook form.
inline double zncc(const Volume& a, const Volume& b) {
    double ma = 0, mb = 0;
    const std::size_t n = a.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        ma += a.data[i];
        mb += b.data[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, qa = 0, qb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (a.data[i] - ma) * (b.data[i] - mb);
        qa += (a.data[i] - ma) * (a.data[i] - ma);
        qb += (b.data[i] - mb) * (b.data[i] - mb);
    }
    return num / std::sqrt(qa * qb);
}

// Mean local SSIM with a 7^3 uniform window clipped at borders, evaluated
// window by window.
inline double ssim_mean(const Volume& p, const Volume& f, double c1 = 1e-4, double c2 = 9e-4) {
    const auto& sh = p.grid.shape;
    double total = 0;
    for (int z = 0; z < sh[2]; ++z)
        for (int y = 0; y < sh[1]; ++y)
            for (int x = 0; x < sh[0]; ++x) {
                double sp = 0, sf = 0, spp = 0, sff = 0, spf = 0;
                int n = 0;
                for (int dz = -3; dz <= 3; ++dz)
                    for (int dy = -3; dy <= 3; ++dy)
                        for (int dx = -3; dx <= 3; ++dx) {
                            int i = x + dx, j = y + dy, k = z + dz;
                            if (i < 0 || j < 0 || k < 0 || i >= sh[0] || j >= sh[1] || k >= sh[2])
                                continue;
                            double pv = p.at(i, j, k), fv = f.at(i, j, k);
                            sp += pv;
                            sf += fv;
                            spp += pv * pv;
                            sff += fv * fv;
                            spf += pv * fv;
                            ++n;
                        }
                double mp = sp / n, mf = sf / n;
                double vp = spp / n - mp * mp, vf = sff / n - mf * mf;
                double cov = spf / n - mp * mf;
                total += ((2 * mp * mf + c1) * (2 * cov + c2)) /
                         ((mp * mp + mf * mf + c1) * (vp + vf + c2));
            }
    return total / (static_cast<double>(sh[0]) * sh[1] * sh[2]);
}

// Reference Adam recurrence, scalar per element.
struct AdamRef {
    double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    long t = 0;
    void step(std::vector<double>& x, const std::vector<double>& g, double lr) {
        if (m.empty()) {
            m.assign(x.size(), 0);
            v.assign(x.size(), 0);
        }
        ++t;
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            double mh = m[i] / (1 - std::pow(b1, t));
            double vh = v[i] / (1 - std::pow(b2, t));
            x[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
};

// Direct 6-nested-loop 3D cross-correlation with zero padding.
inline std::vector<double> conv3d_loops(const std::vector<double>& x, int in_c, int nx, int ny, int nz,
                                        const std::vector<double>& k, int out_c,
                                        const std::vector<double>& bias) {
    std::vector<double> out(static_cast<std::size_t>(out_c) * nx * ny * nz, 0.0);
    auto xat = [&](int c, int i, int j, int kk) -> double {
        if (i < 0 || j < 0 || kk < 0 || i >= nx || j >= ny || kk >= nz) return 0.0;
        return x[((static_cast<std::size_t>(c) * nz + kk) * ny + j) * nx + i];
    };
    for (int oc = 0; oc < out_c; ++oc)
        for (int kk = 0; kk < nz; ++kk)
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    double acc = bias[oc];
                    for (int ic = 0; ic < in_c; ++ic)
                        for (int dz = -1; dz <= 1; ++dz)
                            for (int dy = -1; dy <= 1; ++dy)
                                for (int dx = -1; dx <= 1; ++dx)
                                    acc += k[(((static_cast<std::size_t>(oc) * in_c + ic) * 3 +
                                               (dz + 1)) * 3 + (dy + 1)) * 3 + (dx + 1)] *
                                           xat(ic, i + dx, j + dy, kk + dz);
                    out[((static_cast<std::size_t>(oc) * nz + kk) * ny + j) * nx + i] = acc;
                }
    return out;
}

// Helpers for random test data.
inline Volume random_volume(const Grid& g, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Volume v(g);
    ddreg::Rng rng = ddreg::Rng::keyed(seed, 0, 100);
    for (auto& x : v.data) x = rng.uniform(lo, hi);
    return v;
}

inline LabelMap random_labels(const Grid& g, std::uint64_t seed, int max_label = 2,
                              double fill = 0.25) {
    ddreg::Rng rng = ddreg::Rng::keyed(seed, 0, 101);
    std::vector<std::uint8_t> data(g.voxel_count(), 0);
    for (auto& d : data)
        if (rng.uniform01() < fill)
            d = static_cast<std::uint8_t>(1 + static_cast<int>(rng.uniform01() * max_label) % max_label);
    return LabelMap(g, std::move(data));
}

}  // namespace oracle
