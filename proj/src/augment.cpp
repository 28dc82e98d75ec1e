#include "ddreg/augment.hpp"

#include <cmath>

#include <json.hpp>

#include "ddreg/rng.hpp"

namespace ddreg {

void AugmentConfig::validate() const {
    if (!(gamma_lo > 0) || !(gamma_hi >= gamma_lo))
        throw ValidationError("AugmentConfig: gamma range must satisfy 0 < lo <= hi");
    if (brightness_frac < 0 || max_rotation_deg < 0 || max_rigid_translation_mm < 0 || max_nonrigid_mm < 0)
        throw ValidationError("AugmentConfig: maxima must be >= 0");
    for (int a = 0; a < 3; ++a)
        if (control_grid[a] < 2) throw ValidationError("AugmentConfig: control grid needs >= 2 nodes per axis");
    if (tps_ridge < 0) throw ValidationError("AugmentConfig: tps_ridge must be >= 0");
}

Volume apply_gamma(const Volume& v, double gamma) {
    if (!(gamma > 0)) throw ValidationError("apply_gamma: gamma must be > 0");
    Volume out(v.grid);
    if (gamma == 1.0) {
        out.data = v.data;
        return out;
    }
    for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = std::pow(v.data[i], gamma);
    return out;
}

Volume apply_brightness(const Volume& v, double delta) {
    Volume out(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        out.data[i] = std::clamp(v.data[i] + delta, 0.0, 1.0);
    return out;
}

AugmentSample generate_pair(const Volume& fixed, const LabelMap& fixed_labels,
                            const AugmentConfig& cfg, std::uint64_t index) {
    cfg.validate();
    fixed.validate();
    if (!fixed_labels.data.empty() && !(fixed_labels.grid == fixed.grid))
        throw ShapeError("generate_pair: fixed image and label grids differ");
    for (double x : fixed.data)
        if (x < 0.0 || x > 1.0 || !std::isfinite(x))
            throw ValidationError("generate_pair: fixed image must be normalized to [0,1]");

    // Draw order is part of the determinism contract: gamma, brightness,
    // Euler angles (x,y,z), translation, control displacements in lattice
    // order.
    Rng rng = Rng::keyed(cfg.seed, index);
    AugmentParams params;
    params.seed = cfg.seed;
    params.index = index;
    params.gamma = rng.uniform(cfg.gamma_lo, cfg.gamma_hi);
    params.brightness = rng.uniform(-cfg.brightness_frac, cfg.brightness_frac);
    for (int a = 0; a < 3; ++a)
        params.euler_deg[a] = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    double t[3];
    rng.uniform_in_ball(cfg.max_rigid_translation_mm, t);
    params.translation_mm = {t[0], t[1], t[2]};

    std::int64_t n_ctrl = static_cast<std::int64_t>(cfg.control_grid[0]) * cfg.control_grid[1] * cfg.control_grid[2];
    params.control_displacements_mm.resize(n_ctrl);
    for (auto& d : params.control_displacements_mm) {
        double v[3];
        rng.uniform_in_ball(cfg.max_nonrigid_mm, v);
        d = {v[0], v[1], v[2]};
    }

    AugmentSample sample;
    sample.params = params;
    sample.gt_field = field_from_params(params, cfg, fixed.grid);

    Volume moving_geom = warp_trilinear(fixed, sample.gt_field);
    sample.moving = apply_brightness(apply_gamma(moving_geom, params.gamma), params.brightness);
    if (fixed_labels.data.empty()) {
        sample.moving_labels = fixed_labels;
    } else {
        sample.moving_labels = warp_nearest(fixed_labels, sample.gt_field);
    }
    return sample;
}

DisplacementField field_from_params(const AugmentParams& p, const AugmentConfig& cfg, const Grid& grid) {
    Vec3 center = grid.world((grid.shape[0] - 1) / 2.0, (grid.shape[1] - 1) / 2.0, (grid.shape[2] - 1) / 2.0);
    RigidTransform rigid = rigid_from_euler(p.euler_deg, p.translation_mm, center);

    ControlGrid cg = make_control_lattice(grid, cfg.control_grid);
    if (cg.points.size() != p.control_displacements_mm.size())
        throw ValidationError("field_from_params: control displacement count does not match lattice");
    cg.displacements = p.control_displacements_mm;
    TpsModel tps = tps_fit(cg, cfg.tps_ridge);
    return compose_rigid_then_tps(rigid, tps, grid);
}

std::string AugmentParams::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["index"] = index;
    j["gamma"] = gamma;
    j["brightness"] = brightness;
    j["euler_deg"] = {euler_deg.x, euler_deg.y, euler_deg.z};
    j["translation_mm"] = {translation_mm.x, translation_mm.y, translation_mm.z};
    j["control_displacements_mm"] = nlohmann::json::array();
    for (const auto& d : control_displacements_mm)
        j["control_displacements_mm"].push_back({d.x, d.y, d.z});
    return j.dump(2);
}

AugmentParams AugmentParams::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    AugmentParams p;
    p.seed = j.at("seed");
    p.index = j.at("index");
    p.gamma = j.at("gamma");
    p.brightness = j.at("brightness");
    for (int a = 0; a < 3; ++a) {
        p.euler_deg[a] = j.at("euler_deg")[a];
        p.translation_mm[a] = j.at("translation_mm")[a];
    }
    for (const auto& d : j.at("control_displacements_mm"))
        p.control_displacements_mm.push_back({d[0], d[1], d[2]});
    return p;
}

}  // namespace ddreg
