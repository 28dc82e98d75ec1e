#pragma once

#include <utility>

#include "ddreg/volume.hpp"

namespace ddreg {

// Grid conventions for the two resolution changes:
//  - resample_isotropic keeps the origin (voxel centers stay aligned at the
//    first voxel) and picks shape n' = round((n-1)*s/t) + 1 per axis, so the
//    span between first and last voxel centers is preserved to within one
//    voxel.
//  - resize fixes the shape exactly and preserves the physical bounding box
//    [origin - s/2, origin + (n - 1/2)*s]: spacing' = n*s/n', origin shifts
//    by (spacing' - s)/2.
// Volumes resample with trilinear interpolation, label maps with nearest
// neighbor; out-of-range samples clamp to the edge.

Volume resample_isotropic(const Volume& v, double target_spacing);
LabelMap resample_isotropic(const LabelMap& m, double target_spacing);

Volume resize(const Volume& v, const std::array<int, 3>& shape);
LabelMap resize(const LabelMap& m, const std::array<int, 3>& shape);

// Offsets recorded when cropping so the crop can be undone.
struct CropRecord {
    std::array<int, 3> offset{0, 0, 0};  // low corner of the kept box, voxels
    std::array<int, 3> size{0, 0, 0};
    std::array<int, 3> original_shape{0, 0, 0};
};

// Keeps the mask's tight bounding box dilated by margin_mm (rounded up to
// whole voxels per axis), clamped to the volume. Throws EmptyMaskError on an
// all-background mask.
std::pair<Volume, CropRecord> crop_to_mask(const Volume& v, const LabelMap& m, double margin_mm);

LabelMap apply_crop(const LabelMap& m, const CropRecord& rec);

// Trilinear resample of each vector component onto the target grid. Vectors
// are world-space millimetres, so values carry over unchanged; only the
// sampling lattice moves.
DisplacementField resample_field(const DisplacementField& f, const Grid& target);

// Affine min->0, max->1. A constant volume maps to all zeros.
Volume normalize_intensity(const Volume& v);

// Unweighted mean of member-voxel world coordinates (mm).
Vec3 centroid_mm(const LabelMap& m, std::uint8_t label);

}  // namespace ddreg
