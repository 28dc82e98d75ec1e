#include "ddreg/synth.hpp"

#include <cmath>

#include "ddreg/preprocess.hpp"
#include "ddreg/rng.hpp"

namespace ddreg {

Phantom make_phantom(PhantomKind kind, const std::array<int, 3>& shape, double spacing_mm,
                     std::uint64_t seed, std::uint64_t index) {
    Grid grid;
    grid.shape = shape;
    grid.spacing = {spacing_mm, spacing_mm, spacing_mm};
    grid.origin = {0, 0, 0};
    grid.validate();

    Rng rng = Rng::keyed(seed, index, /*stream=*/3);

    Vec3 extent{(shape[0] - 1) * spacing_mm, (shape[1] - 1) * spacing_mm, (shape[2] - 1) * spacing_mm};
    Vec3 center;
    for (int a = 0; a < 3; ++a)
        center[a] = extent[a] * (0.5 + rng.uniform(-0.08, 0.08));

    Vec3 radii;
    double base_r = 0.30 * std::min({extent.x, extent.y, extent.z});
    if (kind == PhantomKind::Sphere) {
        double r = base_r * rng.uniform(0.85, 1.15);
        radii = {r, r, r};
    } else {
        for (int a = 0; a < 3; ++a) radii[a] = base_r * rng.uniform(0.7, 1.3);
    }

    // low-frequency texture phases/frequencies
    double freq[3], phase[3];
    for (int a = 0; a < 3; ++a) {
        freq[a] = 2.0 * 3.14159265358979323846 / (extent[a] * rng.uniform(0.35, 0.7) + 1e-9);
        phase[a] = rng.uniform(0.0, 6.283185307179586);
    }

    Volume img(grid);
    std::vector<std::uint8_t> lab(grid.voxel_count(), 0);
    std::int64_t idx = 0;
    for (int k = 0; k < shape[2]; ++k)
        for (int j = 0; j < shape[1]; ++j)
            for (int i = 0; i < shape[0]; ++i, ++idx) {
                Vec3 p = grid.world(i, j, k);
                Vec3 d = p - center;
                double rho = std::sqrt((d.x / radii.x) * (d.x / radii.x) +
                                       (d.y / radii.y) * (d.y / radii.y) +
                                       (d.z / radii.z) * (d.z / radii.z));
                double body = std::clamp(1.25 - rho, 0.0, 1.0);
                double core = 0.6 * std::clamp(0.5 - rho, 0.0, 1.0) / 0.5;
                double texture = 0.12 * std::sin(freq[0] * p.x + phase[0]) *
                                 std::sin(freq[1] * p.y + phase[1]) *
                                 std::sin(freq[2] * p.z + phase[2]);
                img.data[idx] = body * body * 0.8 + core + texture * body + 0.05;
                if (rho <= 0.45) {
                    lab[idx] = 2;
                } else if (rho <= 1.0) {
                    lab[idx] = 1;
                }
            }

    Phantom ph;
    ph.image = normalize_intensity(img);
    ph.labels = LabelMap(grid, std::move(lab));
    return ph;
}

}  // namespace ddreg
