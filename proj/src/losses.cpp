#include "ddreg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ddreg {

const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::NCC: return "ncc";
        case LossKind::SSIM: return "ssim";
        case LossKind::DSC: return "dsc";
        case LossKind::HD: return "hd";
        case LossKind::REG: return "reg";
    }
    return "?";
}

namespace {

constexpr double NCC_EPS = 1e-8;
constexpr double DICE_EPS = 1e-7;
constexpr double HD_EPS = 1e-7;
constexpr double SSIM_C1 = 1e-4;
constexpr double SSIM_C2 = 9e-4;
constexpr int SSIM_RADIUS = 3;  // 7^3 window

void require_same_grid(const Grid& a, const Grid& b, const char* who) {
    if (!(a == b)) throw ShapeError(std::string(who) + ": grids differ");
}

}  // namespace

namespace {

bool is_constant(const Volume& v) {
    for (double x : v.data)
        if (x != v.data[0]) return false;
    return true;
}

}  // namespace

LossResult loss_ncc(const Volume& pred, const Volume& fixed, bool with_grad) {
    require_same_grid(pred.grid, fixed.grid, "loss_ncc");
    const std::int64_t n = pred.grid.voxel_count();
    double mp = 0, mf = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        mp += pred.data[i];
        mf += fixed.data[i];
    }
    mp /= n;
    mf /= n;
    double s = 0, qp = 0, qf = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        double cp = pred.data[i] - mp;
        double cf = fixed.data[i] - mf;
        s += cp * cf;
        qp += cp * cp;
        qf += cf * cf;
    }

    LossResult r;
    if (is_constant(pred) && is_constant(fixed)) {
        r.value = 1.0;
        r.degenerate = true;
        if (with_grad) r.grad.assign(n, 0.0);
        return r;
    }
    double varp = qp / n + NCC_EPS;
    double varf = qf / n + NCC_EPS;
    double denom = std::sqrt(varp * varf);
    double rho = (s / n) / denom;
    r.value = 1.0 - rho;
    if (with_grad) {
        r.grad.resize(n);
        for (std::int64_t i = 0; i < n; ++i) {
            double cp = pred.data[i] - mp;
            double cf = fixed.data[i] - mf;
            r.grad[i] = -(cf / (n * denom) - rho * cp / (n * varp));
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// SSIM

namespace {

// Clipped box filter of radius r along each axis, 7-tap direct sums so the
// result is independent of traversal order.
void box_sum_axis(const std::vector<double>& in, std::vector<double>& out, const std::array<int, 3>& sh,
                  int axis, int r) {
    const int nx = sh[0], ny = sh[1];
    const std::int64_t strides[3] = {1, nx, static_cast<std::int64_t>(nx) * ny};
    const int n = sh[axis];
    const std::int64_t stride = strides[axis];
    int oa = (axis + 1) % 3, ob = (axis + 2) % 3;
    for (int b = 0; b < sh[ob]; ++b)
        for (int a = 0; a < sh[oa]; ++a) {
            std::int64_t base = a * strides[oa] + b * strides[ob];
            for (int i = 0; i < n; ++i) {
                int lo = std::max(0, i - r), hi = std::min(n - 1, i + r);
                double sum = 0;
                for (int j = lo; j <= hi; ++j) sum += in[base + j * stride];
                out[base + i * stride] = sum;
            }
        }
}

std::vector<double> box_sum(const std::vector<double>& in, const std::array<int, 3>& sh, int r) {
    std::vector<double> a(in.size()), b(in.size());
    box_sum_axis(in, a, sh, 0, r);
    box_sum_axis(a, b, sh, 1, r);
    box_sum_axis(b, a, sh, 2, r);
    return a;
}

inline double window_count(int i, int n, int r) {
    return std::min(n - 1, i + r) - std::max(0, i - r) + 1.0;
}

}  // namespace

LossResult loss_ssim(const Volume& pred, const Volume& fixed, bool with_grad) {
    require_same_grid(pred.grid, fixed.grid, "loss_ssim");
    const auto& sh = pred.grid.shape;
    const std::int64_t n = pred.grid.voxel_count();
    const int r = SSIM_RADIUS;

    std::vector<double> pf(n), pp(n), ff(n);
    for (std::int64_t i = 0; i < n; ++i) {
        pf[i] = pred.data[i] * fixed.data[i];
        pp[i] = pred.data[i] * pred.data[i];
        ff[i] = fixed.data[i] * fixed.data[i];
    }
    std::vector<double> sp = box_sum(pred.data, sh, r);
    std::vector<double> sf = box_sum(fixed.data, sh, r);
    std::vector<double> spf = box_sum(pf, sh, r);
    std::vector<double> spp = box_sum(pp, sh, r);
    std::vector<double> sff = box_sum(ff, sh, r);

    // Per-window coefficients for the transposed (gradient) pass:
    // dSSIM_o/dp_v = (u_o + s2_o * f_v + s3_o * p_v) for v in window o.
    std::vector<double> u, s2, s3;
    if (with_grad) {
        u.resize(n);
        s2.resize(n);
        s3.resize(n);
    }

    double total = 0;
    std::int64_t idx = 0;
    for (int z = 0; z < sh[2]; ++z) {
        double cz = window_count(z, sh[2], r);
        for (int y = 0; y < sh[1]; ++y) {
            double cyz = window_count(y, sh[1], r) * cz;
            for (int x = 0; x < sh[0]; ++x, ++idx) {
                double cnt = window_count(x, sh[0], r) * cyz;
                double mu_p = sp[idx] / cnt;
                double mu_f = sf[idx] / cnt;
                double cov = spf[idx] / cnt - mu_p * mu_f;
                double var_p = spp[idx] / cnt - mu_p * mu_p;
                double var_f = sff[idx] / cnt - mu_f * mu_f;
                double a1 = 2 * mu_p * mu_f + SSIM_C1;
                double a2 = 2 * cov + SSIM_C2;
                double b1 = mu_p * mu_p + mu_f * mu_f + SSIM_C1;
                double b2 = var_p + var_f + SSIM_C2;
                double ssim = (a1 * a2) / (b1 * b2);
                total += ssim;
                if (with_grad) {
                    double inv_b1b2 = 1.0 / (b1 * b2);
                    double c1 = 2 * mu_f * a2 * inv_b1b2 - 2 * ssim * mu_p / b1;
                    double c2v = 2 * a1 * inv_b1b2;
                    double c3v = -2 * ssim / b2;
                    u[idx] = (c1 - c2v * mu_f - c3v * mu_p) / cnt;
                    s2[idx] = c2v / cnt;
                    s3[idx] = c3v / cnt;
                }
            }
        }
    }

    LossResult out;
    out.value = 1.0 - total / n;
    if (with_grad) {
        // The window membership relation is symmetric, so the transpose of
        // the clipped box filter is the same filter.
        std::vector<double> U = box_sum(u, sh, r);
        std::vector<double> S2 = box_sum(s2, sh, r);
        std::vector<double> S3 = box_sum(s3, sh, r);
        out.grad.resize(n);
        for (std::int64_t i = 0; i < n; ++i)
            out.grad[i] = -(U[i] + fixed.data[i] * S2[i] + pred.data[i] * S3[i]) / n;
    }
    return out;
}

// ---------------------------------------------------------------------------

ChannelLossResult loss_dice(const OneHotStack& pred, const OneHotStack& fixed, bool with_grad) {
    if (pred.channels.size() != fixed.channels.size())
        throw ShapeError("loss_dice: channel counts differ");
    require_same_grid(pred.grid, fixed.grid, "loss_dice");

    ChannelLossResult r;
    if (with_grad) r.grad.resize(pred.channels.size());
    struct Scored {
        std::size_t c;
        double spq, sppqq;
    };
    std::vector<Scored> scored;
    for (std::size_t c = 0; c < pred.channels.size(); ++c) {
        const auto& p = pred.channels[c];
        const auto& q = fixed.channels[c];
        double spq = 0, spp = 0, sqq = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            spq += p[i] * q[i];
            spp += p[i] * p[i];
            sqq += q[i] * q[i];
        }
        if (spp == 0.0 && sqq == 0.0) {
            r.skipped_labels.push_back(pred.channel_labels[c]);
            if (with_grad) r.grad[c].assign(p.size(), 0.0);
            continue;
        }
        scored.push_back({c, spq, spp + sqq + DICE_EPS});
    }
    if (scored.empty()) {
        r.value = 0.0;
        return r;
    }
    double mean_dice = 0;
    for (const auto& s : scored) mean_dice += 2.0 * s.spq / s.sppqq;
    mean_dice /= scored.size();
    r.value = 1.0 - mean_dice;
    if (with_grad) {
        double inv_l = 1.0 / scored.size();
        for (const auto& s : scored) {
            const auto& p = pred.channels[s.c];
            const auto& q = fixed.channels[s.c];
            auto& g = r.grad[s.c];
            g.resize(p.size());
            double denom2 = s.sppqq * s.sppqq;
            for (std::size_t i = 0; i < p.size(); ++i)
                g[i] = -inv_l * (2.0 * q[i] * s.sppqq - 2.0 * s.spq * 2.0 * p[i]) / denom2;
        }
    }
    return r;
}

ChannelLossResult loss_hd_approx(const OneHotStack& pred, const std::vector<Volume>& dt_fixed,
                                 const std::vector<std::uint8_t>& dt_labels, bool with_grad) {
    if (dt_fixed.size() != dt_labels.size())
        throw ValidationError("loss_hd_approx: distance map / label count mismatch");

    ChannelLossResult r;
    if (with_grad) r.grad.resize(pred.channels.size());
    struct Scored {
        std::size_t c;       // pred channel
        std::size_t d;       // distance map
        double swd, sp;      // sum(p*dt^2), sum(p)
    };
    std::vector<Scored> scored;
    for (std::size_t c = 0; c < pred.channels.size(); ++c) {
        std::size_t d = dt_labels.size();
        for (std::size_t j = 0; j < dt_labels.size(); ++j)
            if (dt_labels[j] == pred.channel_labels[c]) d = j;
        if (d == dt_labels.size()) {
            // no fixed mask for this label: skipped, not scored
            r.skipped_labels.push_back(pred.channel_labels[c]);
            if (with_grad) r.grad[c].assign(pred.channels[c].size(), 0.0);
            continue;
        }
        require_same_grid(pred.grid, dt_fixed[d].grid, "loss_hd_approx");
        const auto& p = pred.channels[c];
        const auto& dt = dt_fixed[d].data;
        double swd = 0, sp = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            swd += p[i] * dt[i] * dt[i];
            sp += p[i];
        }
        scored.push_back({c, d, swd, sp});
    }
    if (scored.empty()) {
        r.value = 0.0;
        return r;
    }
    double total = 0;
    for (const auto& s : scored) total += s.swd / (s.sp + HD_EPS);
    r.value = total / scored.size();
    if (with_grad) {
        double inv_l = 1.0 / scored.size();
        for (const auto& s : scored) {
            const auto& p = pred.channels[s.c];
            const auto& dt = dt_fixed[s.d].data;
            auto& g = r.grad[s.c];
            g.resize(p.size());
            double denom = s.sp + HD_EPS;
            double denom2 = denom * denom;
            for (std::size_t i = 0; i < p.size(); ++i)
                g[i] = inv_l * (dt[i] * dt[i] * denom - s.swd) / denom2;
        }
    }
    return r;
}

FieldLossResult reg_smoothness(const DisplacementField& field, bool with_grad) {
    const Grid& g = field.grid;
    const std::int64_t v = g.voxel_count();
    FieldLossResult r;
    if (with_grad) r.grad.assign(v, Vec3{0, 0, 0});

    const std::int64_t strides[3] = {1, g.shape[0], static_cast<std::int64_t>(g.shape[0]) * g.shape[1]};
    double total = 0;
    double norm = 1.0 / (3.0 * v);
    for (int axis = 0; axis < 3; ++axis) {
        int n = g.shape[axis];
        if (n < 2) continue;
        double inv_s = 1.0 / g.spacing[axis];
        int oa = (axis + 1) % 3, ob = (axis + 2) % 3;
        for (int b = 0; b < g.shape[ob]; ++b)
            for (int a = 0; a < g.shape[oa]; ++a) {
                std::int64_t base = a * strides[oa] + b * strides[ob];
                for (int i = 0; i + 1 < n; ++i) {
                    std::int64_t at = base + i * strides[axis];
                    std::int64_t nxt = at + strides[axis];
                    // the final difference along an axis counts twice: the
                    // last voxel reuses it as its own gradient sample
                    double w = (i == n - 2) ? 2.0 : 1.0;
                    for (int comp = 0; comp < 3; ++comp) {
                        double d = (field.vectors[nxt][comp] - field.vectors[at][comp]) * inv_s;
                        total += w * d * d;
                        if (with_grad) {
                            double gcontrib = 2.0 * w * d * inv_s * norm;
                            r.grad[nxt][comp] += gcontrib;
                            r.grad[at][comp] -= gcontrib;
                        }
                    }
                }
            }
    }
    r.value = total * norm;
    return r;
}

// ---------------------------------------------------------------------------
// exact Euclidean distance transform

namespace {

constexpr double INF = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas f(j) + (s*(i-j))^2 evaluated at all i.
// Sites with infinite f do not contribute.
void edt_pass_1d(std::vector<double>& f, double s, std::vector<int>& hull, std::vector<double>& bounds) {
    const int n = static_cast<int>(f.size());
    hull.clear();    // parabola sites on the envelope
    bounds.clear();  // bounds[k] = left edge of hull[k]'s domain

    for (int q = 0; q < n; ++q) {
        if (f[q] == INF) continue;
        double xq = s * q;
        double vq = f[q] + xq * xq;
        double zint = -INF;
        while (!hull.empty()) {
            int p = hull.back();
            double xp = s * p;
            zint = (vq - (f[p] + xp * xp)) / (2 * xq - 2 * xp);
            if (zint <= bounds.back()) {
                hull.pop_back();
                bounds.pop_back();
            } else {
                break;
            }
        }
        if (hull.empty()) zint = -INF;
        hull.push_back(q);
        bounds.push_back(zint);
    }
    if (hull.empty()) return;  // entire line infinite

    std::vector<double> out(n);
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
        double xi = s * i;
        while (k + 1 < hull.size() && bounds[k + 1] < xi) ++k;
        int j = hull[k];
        double dx = s * (i - j);
        out[i] = f[j] + dx * dx;
    }
    f = std::move(out);
}

}  // namespace

Volume distance_transform(const LabelMap& mask, std::uint8_t label) {
    if (mask.empty_mask()) throw EmptyMaskError("distance_transform: label map is empty");
    if (!mask.has_label(label))
        throw LabelNotFoundError("distance_transform: label " + std::to_string(label) + " not present");

    const Grid& g = mask.grid;
    Volume d2(g);
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        d2.data[i] = (mask.data[i] == label) ? 0.0 : INF;

    const std::int64_t strides[3] = {1, g.shape[0], static_cast<std::int64_t>(g.shape[0]) * g.shape[1]};
    std::vector<double> line;
    std::vector<int> hull;
    std::vector<double> bounds;
    for (int axis = 0; axis < 3; ++axis) {
        int n = g.shape[axis];
        int oa = (axis + 1) % 3, ob = (axis + 2) % 3;
        line.resize(n);
        for (int b = 0; b < g.shape[ob]; ++b)
            for (int a = 0; a < g.shape[oa]; ++a) {
                std::int64_t base = a * strides[oa] + b * strides[ob];
                for (int i = 0; i < n; ++i) line[i] = d2.data[base + i * strides[axis]];
                edt_pass_1d(line, g.spacing[axis], hull, bounds);
                for (int i = 0; i < n; ++i) d2.data[base + i * strides[axis]] = line[i];
            }
    }
    for (auto& v : d2.data) v = std::sqrt(v);
    return d2;
}

}  // namespace ddreg
