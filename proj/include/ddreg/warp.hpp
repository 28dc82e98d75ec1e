#pragma once

#include <vector>

#include "ddreg/volume.hpp"

namespace ddreg {

// One scalar channel per label, values in [0,1]. Built hard from a LabelMap;
// warping makes the channels soft, which is what gives the segmentation
// losses a usable gradient.
struct OneHotStack {
    Grid grid;
    std::vector<std::uint8_t> channel_labels;   // sorted, parallel to channels
    std::vector<std::vector<double>> channels;  // x-fastest per channel

    static OneHotStack from_labelmap(const LabelMap& m);
    // Channels for every label in `basis` whether or not present in m.
    static OneHotStack from_labelmap(const LabelMap& m, const std::vector<std::uint8_t>& basis);
};

// out(x) = trilinear sample of v at world(x) + f(x), clamp-to-edge.
Volume warp_trilinear(const Volume& v, const DisplacementField& f);

// Label at x taken from the voxel nearest to world(x) + f(x).
LabelMap warp_nearest(const LabelMap& m, const DisplacementField& f);

// Each channel warped with warp_trilinear.
OneHotStack warp_onehot(const OneHotStack& s, const DisplacementField& f);

// Analytic gradients of warp_trilinear. `upstream` is dL/d(out) on the same
// grid. grad_v is dL/dv; grad_f is dL/df in 1/mm per component. Clamped
// sample coordinates are treated as constants, so their field gradient is
// zero (finite-difference checks are only well-posed at interior samples).
void warp_backward(const Volume& v, const DisplacementField& f, const Volume& upstream,
                   Volume& grad_v, DisplacementField& grad_f);

}  // namespace ddreg
