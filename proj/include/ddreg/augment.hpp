#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddreg/tps.hpp"
#include "ddreg/volume.hpp"
#include "ddreg/warp.hpp"

namespace ddreg {

struct AugmentConfig {
    double gamma_lo = 0.5;
    double gamma_hi = 2.0;
    double brightness_frac = 0.2;             // +/- additive shift
    double max_rotation_deg = 10.0;           // per Euler axis
    double max_rigid_translation_mm = 30.0;   // vector norm bound
    double max_nonrigid_mm = 6.0;             // per-control-point norm bound
    std::array<int, 3> control_grid{8, 8, 8};
    double tps_ridge = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

// Everything sampled for one pair; sufficient to rebuild the pair from the
// fixed image alone.
struct AugmentParams {
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
    double gamma = 1.0;
    double brightness = 0.0;
    Vec3 euler_deg{0, 0, 0};
    Vec3 translation_mm{0, 0, 0};
    std::vector<Vec3> control_displacements_mm;

    std::string to_json() const;
    static AugmentParams from_json(const std::string& text);
};

struct AugmentSample {
    Volume moving;
    LabelMap moving_labels;
    DisplacementField gt_field;
    AugmentParams params;
};

// out = v^gamma elementwise; expects values in [0,1].
Volume apply_gamma(const Volume& v, double gamma);

// out = clamp(v + delta, 0, 1).
Volume apply_brightness(const Volume& v, double delta);

// Synthesizes (moving image, warped labels, ground-truth field) from a fixed
// image. Geometry: rigid (uniform Euler angles about the volume center,
// translation uniform in the 30 mm ball) composed with a TPS whose
// per-control-point displacements are uniform in the 6 mm ball. Intensity:
// gamma then brightness, moving image only. Deterministic in
// (cfg.seed, index); an empty fixed_labels map passes through empty.
AugmentSample generate_pair(const Volume& fixed, const LabelMap& fixed_labels,
                            const AugmentConfig& cfg, std::uint64_t index);

// The rigid+TPS geometry rebuilt from a params record (for auditing pairs
// against their sidecars).
DisplacementField field_from_params(const AugmentParams& p, const AugmentConfig& cfg, const Grid& grid);

}  // namespace ddreg
