#pragma once

#include <string>
#include <vector>

#include "ddreg/volume.hpp"

namespace ddreg {

// Scattered displacement constraints for a TPS fit. Well-posedness needs at
// least 4 non-coplanar points.
struct ControlGrid {
    std::vector<Vec3> points;         // world mm
    std::vector<Vec3> displacements;  // mm, one per point
};

// Control points at the nodes of a uniform nx x ny x nz lattice spanning the
// grid's world bounding box (voxel centers), boundaries included.
ControlGrid make_control_lattice(const Grid& grid, const std::array<int, 3>& nodes);

// Fitted 3D thin plate spline with the r (biharmonic) kernel:
//   f(x) = A_lin * x + A_t + sum_i w_i * |x - p_i|
// Kernel weights satisfy sum w = 0 and sum w p^T = 0 per component.
struct TpsModel {
    std::vector<Vec3> control_points;
    std::vector<Vec3> kernel_weights;      // one 3-vector per control point
    double affine[3][4] = {};              // rows: output component; cols: x,y,z,1
    double ridge = 0.0;

    Vec3 evaluate(const Vec3& x) const;

    std::string to_json() const;
    static TpsModel from_json(const std::string& text);
};

// Direct dense solve of the interpolation system; ridge (>= 0) is added to
// the kernel block for conditioning. With ridge 0 the model interpolates the
// displacements at the control points. Throws FitError when the point set is
// coplanar or the system is singular.
TpsModel tps_fit(const ControlGrid& cg, double ridge = 1e-8);

// Dense field over all grid voxels: field(x) = model(x).
DisplacementField tps_evaluate(const TpsModel& model, const Grid& grid);

// Rotation about a pivot plus translation; y = R*(x - center) + center + t.
struct RigidTransform {
    double rotation[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    Vec3 translation{0, 0, 0};
    Vec3 center{0, 0, 0};

    Vec3 apply(const Vec3& x) const;
    void validate() const;  // det = +1 and R^T R = I within 1e-10
};

// Euler angles in degrees applied as Rz(az) * Ry(ay) * Rx(ax).
RigidTransform rigid_from_euler(const Vec3& angles_deg, const Vec3& translation, const Vec3& center);

// Single backward-warp field for T_tps(T_rigid(x)):
//   field(x) = T_tps(T_rigid(x)) - x, evaluated densely. Exact composition,
// not an additive approximation.
DisplacementField compose_rigid_then_tps(const RigidTransform& r, const TpsModel& model, const Grid& grid);

// Maximum Euclidean vector norm over the field.
double max_displacement(const DisplacementField& field);

}  // namespace ddreg
