#pragma once

#include <vector>

#include "ddreg/volume.hpp"
#include "ddreg/warp.hpp"

namespace ddreg {

enum class LossKind { NCC, SSIM, DSC, HD, REG };

const char* loss_name(LossKind k);

// Scalar loss with its analytic gradient with respect to the first argument.
// `degenerate` marks inputs outside the metric's domain (e.g. two constant
// images for NCC), handled by the documented fallback rather than an error.
struct LossResult {
    double value = 0;
    std::vector<double> grad;  // dL/d(pred), same layout as the input
    bool degenerate = false;
};

// 1 - ZNCC(pred, fixed), global statistics, eps 1e-8 in the variance
// denominators. Two constant images define the loss as 1 with the
// degeneracy flag set.
LossResult loss_ncc(const Volume& pred, const Volume& fixed, bool with_grad = true);

// 1 - mean local SSIM, 7^3 uniform window clipped at borders, C1 = 1e-4,
// C2 = 9e-4; inputs in [0,1].
LossResult loss_ssim(const Volume& pred, const Volume& fixed, bool with_grad = true);

// Per-channel loss over a OneHotStack; channels absent from both sides are
// skipped (not scored) and reported.
struct ChannelLossResult {
    double value = 0;
    std::vector<std::vector<double>> grad;  // per channel, dL/d(pred channel)
    std::vector<std::uint8_t> skipped_labels;
};

// 1 - mean soft Dice, 2*sum(pq) / (sum(p^2) + sum(q^2) + 1e-7) per channel.
ChannelLossResult loss_dice(const OneHotStack& pred, const OneHotStack& fixed, bool with_grad = true);

// One-sided distance-transform Hausdorff surrogate:
// mean over labels of sum(p * dt^2) / (sum(p) + 1e-7), dt in mm from the
// fixed hard mask. Labels with empty fixed masks are skipped.
ChannelLossResult loss_hd_approx(const OneHotStack& pred, const std::vector<Volume>& dt_fixed,
                                 const std::vector<std::uint8_t>& dt_labels, bool with_grad = true);

// Diffusion regularizer: mean over voxels and components of the squared
// spatial gradient of the field (forward differences, spacing-aware; the
// last sample along an axis reuses the preceding difference so every voxel
// contributes a full gradient).
struct FieldLossResult {
    double value = 0;
    std::vector<Vec3> grad;  // dL/d(field vector), per voxel
};

FieldLossResult reg_smoothness(const DisplacementField& field, bool with_grad = true);

// Exact Euclidean distance (mm) from each voxel center to the nearest voxel
// center carrying `label`. Separable lower-envelope passes; exact for
// arbitrary anisotropic spacing.
Volume distance_transform(const LabelMap& mask, std::uint8_t label);

}  // namespace ddreg
