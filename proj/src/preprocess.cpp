#include "ddreg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddreg/threading.hpp"

namespace ddreg {

namespace {

Grid isotropic_grid(const Grid& in, double t) {
    Grid out;
    for (int a = 0; a < 3; ++a)
        out.shape[a] = std::max<int>(1, static_cast<int>(std::llround((in.shape[a] - 1) * in.spacing[a] / t)) + 1);
    out.spacing = {t, t, t};
    out.origin = in.origin;
    return out;
}

Grid resized_grid(const Grid& in, const std::array<int, 3>& shape) {
    Grid out;
    out.shape = shape;
    for (int a = 0; a < 3; ++a) {
        if (shape[a] < 1) throw ValidationError("resize: shape components must be >= 1");
        double s_out = static_cast<double>(in.shape[a]) * in.spacing[a] / shape[a];
        out.spacing[a] = s_out;
        out.origin[a] = in.origin[a] - in.spacing[a] / 2.0 + s_out / 2.0;
    }
    return out;
}

Volume sample_volume_on(const Volume& v, const Grid& out_grid) {
    Volume out(out_grid);
    const int nx = out_grid.shape[0], ny = out_grid.shape[1];
    parallel_for(out_grid.voxel_count(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t idx = b; idx < e; ++idx) {
            int i = static_cast<int>(idx % nx);
            int j = static_cast<int>((idx / nx) % ny);
            int k = static_cast<int>(idx / (static_cast<std::int64_t>(nx) * ny));
            out.data[idx] = sample_trilinear(v, out_grid.world(i, j, k));
        }
    });
    return out;
}

LabelMap sample_labels_on(const LabelMap& m, const Grid& out_grid) {
    std::vector<std::uint8_t> data(out_grid.voxel_count());
    const int nx = out_grid.shape[0], ny = out_grid.shape[1];
    parallel_for(out_grid.voxel_count(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t idx = b; idx < e; ++idx) {
            int i = static_cast<int>(idx % nx);
            int j = static_cast<int>((idx / nx) % ny);
            int k = static_cast<int>(idx / (static_cast<std::int64_t>(nx) * ny));
            data[idx] = sample_nearest(m, out_grid.world(i, j, k));
        }
    });
    return LabelMap(out_grid, std::move(data));
}

}  // namespace

Volume resample_isotropic(const Volume& v, double target_spacing) {
    v.validate();
    if (!(target_spacing > 0)) throw ValidationError("resample_isotropic: target_spacing must be > 0");
    if (!v.all_finite()) throw ValidationError("resample_isotropic: input has non-finite values");
    return sample_volume_on(v, isotropic_grid(v.grid, target_spacing));
}

LabelMap resample_isotropic(const LabelMap& m, double target_spacing) {
    if (!(target_spacing > 0)) throw ValidationError("resample_isotropic: target_spacing must be > 0");
    return sample_labels_on(m, isotropic_grid(m.grid, target_spacing));
}

Volume resize(const Volume& v, const std::array<int, 3>& shape) {
    v.validate();
    return sample_volume_on(v, resized_grid(v.grid, shape));
}

LabelMap resize(const LabelMap& m, const std::array<int, 3>& shape) {
    return sample_labels_on(m, resized_grid(m.grid, shape));
}

std::pair<Volume, CropRecord> crop_to_mask(const Volume& v, const LabelMap& m, double margin_mm) {
    v.validate();
    if (!(v.grid == m.grid)) throw ShapeError("crop_to_mask: volume and mask grids differ");
    if (m.empty_mask()) throw EmptyMaskError("crop_to_mask: mask has no nonzero voxels");
    if (margin_mm < 0) throw ValidationError("crop_to_mask: margin must be >= 0");

    int lo[3] = {m.grid.shape[0], m.grid.shape[1], m.grid.shape[2]};
    int hi[3] = {-1, -1, -1};
    for (int k = 0; k < m.grid.shape[2]; ++k)
        for (int j = 0; j < m.grid.shape[1]; ++j)
            for (int i = 0; i < m.grid.shape[0]; ++i)
                if (m.at(i, j, k) != 0) {
                    lo[0] = std::min(lo[0], i); hi[0] = std::max(hi[0], i);
                    lo[1] = std::min(lo[1], j); hi[1] = std::max(hi[1], j);
                    lo[2] = std::min(lo[2], k); hi[2] = std::max(hi[2], k);
                }

    CropRecord rec;
    rec.original_shape = v.grid.shape;
    for (int a = 0; a < 3; ++a) {
        int margin_vox = static_cast<int>(std::ceil(margin_mm / v.grid.spacing[a] - 1e-9));
        lo[a] = std::max(0, lo[a] - margin_vox);
        hi[a] = std::min(v.grid.shape[a] - 1, hi[a] + margin_vox);
        rec.offset[a] = lo[a];
        rec.size[a] = hi[a] - lo[a] + 1;
    }

    Grid out_grid;
    out_grid.shape = rec.size;
    out_grid.spacing = v.grid.spacing;
    out_grid.origin = v.grid.world(rec.offset[0], rec.offset[1], rec.offset[2]);
    Volume out(out_grid);
    for (int k = 0; k < rec.size[2]; ++k)
        for (int j = 0; j < rec.size[1]; ++j)
            for (int i = 0; i < rec.size[0]; ++i)
                out.at(i, j, k) = v.at(i + rec.offset[0], j + rec.offset[1], k + rec.offset[2]);
    return {std::move(out), rec};
}

LabelMap apply_crop(const LabelMap& m, const CropRecord& rec) {
    if (m.grid.shape != rec.original_shape)
        throw ShapeError("apply_crop: record does not match label map shape");
    Grid out_grid;
    out_grid.shape = rec.size;
    out_grid.spacing = m.grid.spacing;
    out_grid.origin = m.grid.world(rec.offset[0], rec.offset[1], rec.offset[2]);
    std::vector<std::uint8_t> data(out_grid.voxel_count());
    for (int k = 0; k < rec.size[2]; ++k)
        for (int j = 0; j < rec.size[1]; ++j)
            for (int i = 0; i < rec.size[0]; ++i)
                data[out_grid.flat(i, j, k)] = m.at(i + rec.offset[0], j + rec.offset[1], k + rec.offset[2]);
    return LabelMap(out_grid, std::move(data));
}

DisplacementField resample_field(const DisplacementField& f, const Grid& target) {
    f.validate();
    target.validate();
    DisplacementField out(target);
    for (int comp = 0; comp < 3; ++comp) {
        Volume chan(f.grid);
        for (std::size_t i = 0; i < f.vectors.size(); ++i) chan.data[i] = f.vectors[i][comp];
        Volume res = sample_volume_on(chan, target);
        for (std::size_t i = 0; i < out.vectors.size(); ++i) out.vectors[i][comp] = res.data[i];
    }
    return out;
}

Volume normalize_intensity(const Volume& v) {
    v.validate();
    if (!v.all_finite()) throw ValidationError("normalize_intensity: input has non-finite values");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : v.data) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    Volume out(v.grid);
    if (hi <= lo) return out;  // constant -> zeros
    double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = (v.data[i] - lo) * scale;
    return out;
}

Vec3 centroid_mm(const LabelMap& m, std::uint8_t label) {
    if (m.empty_mask()) throw EmptyMaskError("centroid_mm: label map is empty");
    if (!m.has_label(label))
        throw LabelNotFoundError("centroid_mm: label " + std::to_string(label) + " not present");
    Vec3 sum{0, 0, 0};
    std::int64_t count = 0;
    for (int k = 0; k < m.grid.shape[2]; ++k)
        for (int j = 0; j < m.grid.shape[1]; ++j)
            for (int i = 0; i < m.grid.shape[0]; ++i)
                if (m.at(i, j, k) == label) {
                    sum += m.grid.world(i, j, k);
                    ++count;
                }
    return sum / static_cast<double>(count);
}

}  // namespace ddreg
