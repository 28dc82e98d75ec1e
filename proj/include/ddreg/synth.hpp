#pragma once

#include <cstdint>

#include "ddreg/volume.hpp"

namespace ddreg {

enum class PhantomKind { Sphere, Ellipsoid };

// Synthetic blob phantom: smooth radial intensity with low-frequency texture
// (normalized to [0,1]) and two nested labels, 1 = body, 2 = core. Fully
// determined by (seed, index).
struct Phantom {
    Volume image;
    LabelMap labels;
};

Phantom make_phantom(PhantomKind kind, const std::array<int, 3>& shape, double spacing_mm,
                     std::uint64_t seed, std::uint64_t index);

}  // namespace ddreg
