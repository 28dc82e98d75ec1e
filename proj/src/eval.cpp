#include "ddreg/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "ddreg/losses.hpp"
#include "ddreg/preprocess.hpp"
#include "ddreg/warp.hpp"

namespace ddreg {

std::optional<double> metric_ncc(const Volume& a, const Volume& b) {
    if (!(a.grid == b.grid)) throw ShapeError("metric_ncc: grids differ");
    auto constant = [](const Volume& v) {
        for (double x : v.data)
            if (x != v.data[0]) return false;
        return true;
    };
    if (constant(a) || constant(b)) return std::nullopt;  // undefined on constant input
    const std::int64_t n = a.grid.voxel_count();
    double ma = 0, mb = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        ma += a.data[i];
        mb += b.data[i];
    }
    ma /= n;
    mb /= n;
    double s = 0, qa = 0, qb = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        double ca = a.data[i] - ma, cb = b.data[i] - mb;
        s += ca * cb;
        qa += ca * ca;
        qb += cb * cb;
    }
    return s / std::sqrt(qa * qb);
}

double metric_ssim(const Volume& a, const Volume& b) {
    // same windowed mean as the loss, reported raw
    return 1.0 - loss_ssim(a, b, /*with_grad=*/false).value;
}

std::optional<double> metric_dsc(const LabelMap& a, const LabelMap& b, std::uint8_t label) {
    if (!(a.grid == b.grid)) throw ShapeError("metric_dsc: grids differ");
    std::int64_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        bool ia = a.data[i] == label, ib = b.data[i] == label;
        na += ia;
        nb += ib;
        both += ia && ib;
    }
    if (na == 0 && nb == 0) return std::nullopt;
    return 2.0 * both / static_cast<double>(na + nb);
}

namespace {

// 6-connectivity boundary: a labeled voxel with any face neighbor (or the
// volume edge) not carrying the label.
LabelMap boundary_mask(const LabelMap& m, std::uint8_t label) {
    const Grid& g = m.grid;
    std::vector<std::uint8_t> out(m.data.size(), 0);
    for (int k = 0; k < g.shape[2]; ++k)
        for (int j = 0; j < g.shape[1]; ++j)
            for (int i = 0; i < g.shape[0]; ++i) {
                if (m.at(i, j, k) != label) continue;
                bool edge = i == 0 || j == 0 || k == 0 || i == g.shape[0] - 1 ||
                            j == g.shape[1] - 1 || k == g.shape[2] - 1;
                if (!edge) {
                    edge = m.at(i - 1, j, k) != label || m.at(i + 1, j, k) != label ||
                           m.at(i, j - 1, k) != label || m.at(i, j + 1, k) != label ||
                           m.at(i, j, k - 1) != label || m.at(i, j, k + 1) != label;
                }
                if (edge) out[g.flat(i, j, k)] = 1;
            }
    return LabelMap(g, std::move(out));
}

// Directed boundary distances d(a -> boundary(B)) for every boundary voxel
// of A, via the exact distance transform of B's boundary.
std::vector<double> directed_boundary_distances(const LabelMap& bnd_a, const LabelMap& bnd_b) {
    Volume dt = distance_transform(bnd_b, 1);
    std::vector<double> out;
    for (std::size_t i = 0; i < bnd_a.data.size(); ++i)
        if (bnd_a.data[i]) out.push_back(dt.data[i]);
    return out;
}

bool both_present(const LabelMap& a, const LabelMap& b, std::uint8_t label) {
    return a.has_label(label) && b.has_label(label);
}

double percentile_linear(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    double pos = q * (values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - lo;
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace

std::optional<double> metric_hd(const LabelMap& a, const LabelMap& b, std::uint8_t label) {
    if (!(a.grid == b.grid)) throw ShapeError("metric_hd: grids differ");
    if (!both_present(a, b, label)) return std::nullopt;
    LabelMap ba = boundary_mask(a, label), bb = boundary_mask(b, label);
    double worst = 0;
    for (double d : directed_boundary_distances(ba, bb)) worst = std::max(worst, d);
    for (double d : directed_boundary_distances(bb, ba)) worst = std::max(worst, d);
    return worst;
}

std::optional<double> metric_hd95(const LabelMap& a, const LabelMap& b, std::uint8_t label) {
    if (!(a.grid == b.grid)) throw ShapeError("metric_hd95: grids differ");
    if (!both_present(a, b, label)) return std::nullopt;
    LabelMap ba = boundary_mask(a, label), bb = boundary_mask(b, label);
    std::vector<double> pooled = directed_boundary_distances(ba, bb);
    std::vector<double> rev = directed_boundary_distances(bb, ba);
    pooled.insert(pooled.end(), rev.begin(), rev.end());
    return percentile_linear(std::move(pooled), 0.95);
}

std::optional<double> metric_tre(const LabelMap& fixed_labels, const LabelMap& pred_labels,
                                 std::uint8_t label) {
    if (!both_present(fixed_labels, pred_labels, label)) return std::nullopt;
    return (centroid_mm(fixed_labels, label) - centroid_mm(pred_labels, label)).norm();
}

// ---------------------------------------------------------------------------

PairMetrics evaluate_pair(ParameterStore& params, const NetConfig& net,
                          const std::array<int, 3>& net_shape, const EvalPair& pair) {
    PairMetrics out;

    // resize to network resolution when the pair grid differs
    bool needs_resize = pair.fixed.grid.shape != net_shape;
    Volume fixed_net = needs_resize ? resize(pair.fixed, net_shape) : pair.fixed;
    Volume moving_net = needs_resize ? resize(pair.moving, net_shape) : pair.moving;

    auto t0 = std::chrono::steady_clock::now();
    DisplacementField phi_net = unet_forward(fixed_net, moving_net, params, net);
    // displacement maps go back to the pair's isotropic grid before scoring
    DisplacementField phi = (phi_net.grid == pair.fixed.grid)
                                ? phi_net
                                : resample_field(phi_net, pair.fixed.grid);
    Volume pred = warp_trilinear(pair.moving, phi);
    LabelMap pred_labels = warp_nearest(pair.moving_labels, phi);
    auto t1 = std::chrono::steady_clock::now();
    out.runtime_s = std::chrono::duration<double>(t1 - t0).count();

    out.ncc = metric_ncc(pred, pair.fixed);
    out.ssim = metric_ssim(pred, pair.fixed);

    double dsc = 0, hd = 0, hd95 = 0, tre = 0;
    int n = 0;
    for (std::uint8_t l : pair.fixed_labels.labels) {
        auto d = metric_dsc(pred_labels, pair.fixed_labels, l);
        auto h = metric_hd(pred_labels, pair.fixed_labels, l);
        auto h95 = metric_hd95(pred_labels, pair.fixed_labels, l);
        auto t = metric_tre(pair.fixed_labels, pred_labels, l);
        if (d && h && h95 && t) {
            dsc += *d;
            hd += *h;
            hd95 += *h95;
            tre += *t;
            ++n;
        } else {
            ++out.labels_missing;
        }
    }
    out.labels_scored = n;
    if (n > 0) {
        out.dsc = dsc / n;
        out.hd = hd / n;
        out.hd95 = hd95 / n;
        out.tre = tre / n;
    }
    return out;
}

namespace {

// Kahan-compensated aggregation keeps the mean independent of pair order.
Stat make_stat(const std::vector<double>& xs) {
    Stat s;
    s.count = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    double sum = 0, comp = 0;
    for (double x : xs) {
        double y = x - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    s.mean = sum / xs.size();
    if (xs.size() > 1) {
        double sq = 0;
        for (double x : xs) sq += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(sq / (xs.size() - 1));
    }
    return s;
}

std::vector<double> collect(const std::vector<PairMetrics>& pm,
                            std::optional<double> PairMetrics::* field) {
    std::vector<double> xs;
    for (const auto& p : pm)
        if (p.*field) xs.push_back(*(p.*field));
    return xs;
}

}  // namespace

MetricRow aggregate_metrics(const std::string& method, const std::vector<PairMetrics>& per_pair) {
    MetricRow row;
    row.method = method;
    row.pairs = static_cast<int>(per_pair.size());
    row.ncc = make_stat(collect(per_pair, &PairMetrics::ncc));
    row.ssim = make_stat(collect(per_pair, &PairMetrics::ssim));
    row.dsc = make_stat(collect(per_pair, &PairMetrics::dsc));
    row.hd = make_stat(collect(per_pair, &PairMetrics::hd));
    row.hd95 = make_stat(collect(per_pair, &PairMetrics::hd95));
    row.tre = make_stat(collect(per_pair, &PairMetrics::tre));
    std::vector<double> rt;
    for (const auto& p : per_pair) rt.push_back(p.runtime_s);
    row.runtime = make_stat(rt);
    return row;
}

MetricRow evaluate_model(ParameterStore& params, const NetConfig& net,
                         const std::array<int, 3>& net_shape, const std::vector<EvalPair>& pairs,
                         const std::string& method, std::vector<PairMetrics>* per_pair_out) {
    std::vector<PairMetrics> pm;
    for (const auto& pair : pairs) pm.push_back(evaluate_pair(params, net, net_shape, pair));
    if (per_pair_out) *per_pair_out = pm;
    return aggregate_metrics(method, pm);
}

// ---------------------------------------------------------------------------

namespace {

struct Column {
    const char* name;
    Stat MetricRow::* field;
    bool higher_better;
};

constexpr Column COLUMNS[] = {
    {"SSIM", &MetricRow::ssim, true},   {"NCC", &MetricRow::ncc, true},
    {"DSC", &MetricRow::dsc, true},     {"HD", &MetricRow::hd, false},
    {"HD95", &MetricRow::hd95, false},  {"TRE", &MetricRow::tre, false},
    {"Runtime", &MetricRow::runtime, false},
};

// Best mean wins; ties go to the lower standard deviation.
int best_row(const std::vector<MetricRow>& rows, const Column& col) {
    int best = -1;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Stat& s = rows[r].*(col.field);
        if (s.count == 0) continue;
        if (best < 0) {
            best = static_cast<int>(r);
            continue;
        }
        const Stat& b = rows[best].*(col.field);
        bool better = col.higher_better ? s.mean > b.mean : s.mean < b.mean;
        bool tie = s.mean == b.mean && s.stddev < b.stddev;
        if (better || tie) best = static_cast<int>(r);
    }
    return best;
}

std::string cell(const Stat& s, bool bold) {
    if (s.count == 0) return "-";
    std::ostringstream o;
    o << std::fixed << std::setprecision(3) << s.mean << "±" << s.stddev;
    std::string text = o.str();
    return bold ? "*" + text + "*" : text;
}

}  // namespace

std::string report_table(const std::vector<MetricRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header = {"Model"};
    for (const auto& c : COLUMNS) header.push_back(c.name);
    cells.push_back(header);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::vector<std::string> line = {rows[r].method};
        for (const auto& c : COLUMNS)
            line.push_back(cell(rows[r].*(c.field), best_row(rows, c) == static_cast<int>(r)));
        cells.push_back(std::move(line));
    }

    std::vector<std::size_t> width(cells[0].size(), 0);
    for (const auto& line : cells)
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    std::ostringstream out;
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            out << std::left << std::setw(static_cast<int>(width[i]) + 2) << line[i];
        }
        out << "\n";
    }
    return out.str();
}

std::string report_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out.precision(10);
    out << "model,pairs";
    for (const auto& c : COLUMNS) {
        std::string n = c.name;
        std::transform(n.begin(), n.end(), n.begin(), [](char ch) { return std::tolower(ch); });
        out << "," << n << "_mean," << n << "_std," << n << "_n," << n << "_best";
    }
    out << "\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out << rows[r].method << "," << rows[r].pairs;
        for (const auto& c : COLUMNS) {
            const Stat& s = rows[r].*(c.field);
            out << "," << s.mean << "," << s.stddev << "," << s.count << ","
                << (best_row(rows, c) == static_cast<int>(r) ? 1 : 0);
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace ddreg
