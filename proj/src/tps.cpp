#include "ddreg/tps.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <json.hpp>

#include "ddreg/threading.hpp"

namespace ddreg {

namespace {

inline double kernel(double r) { return r; }  // 3D biharmonic fundamental solution

inline double dist(const Vec3& a, const Vec3& b) {
    double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

ControlGrid make_control_lattice(const Grid& grid, const std::array<int, 3>& nodes) {
    for (int a = 0; a < 3; ++a)
        if (nodes[a] < 2) throw ValidationError("make_control_lattice: need >= 2 nodes per axis");
    ControlGrid cg;
    cg.points.reserve(static_cast<std::size_t>(nodes[0]) * nodes[1] * nodes[2]);
    Vec3 lo = grid.world(0, 0, 0);
    Vec3 hi = grid.world(grid.shape[0] - 1, grid.shape[1] - 1, grid.shape[2] - 1);
    for (int k = 0; k < nodes[2]; ++k)
        for (int j = 0; j < nodes[1]; ++j)
            for (int i = 0; i < nodes[0]; ++i) {
                double fx = static_cast<double>(i) / (nodes[0] - 1);
                double fy = static_cast<double>(j) / (nodes[1] - 1);
                double fz = static_cast<double>(k) / (nodes[2] - 1);
                cg.points.push_back({lo.x + fx * (hi.x - lo.x),
                                     lo.y + fy * (hi.y - lo.y),
                                     lo.z + fz * (hi.z - lo.z)});
            }
    cg.displacements.assign(cg.points.size(), Vec3{0, 0, 0});
    return cg;
}

TpsModel tps_fit(const ControlGrid& cg, double ridge) {
    const std::size_t n = cg.points.size();
    if (n < 4) throw FitError("tps_fit: need at least 4 control points");
    if (cg.displacements.size() != n)
        throw ValidationError("tps_fit: displacement count does not match point count");
    if (ridge < 0) throw ValidationError("tps_fit: ridge must be >= 0");
    for (const auto& d : cg.displacements)
        if (!d.finite()) throw ValidationError("tps_fit: non-finite displacement");

    // Centering the points improves the conditioning of the polynomial block;
    // the kernel block is translation invariant so weights are unaffected.
    Vec3 c{0, 0, 0};
    for (const auto& p : cg.points) c += p;
    c = c / static_cast<double>(n);

    const Eigen::Index m = static_cast<Eigen::Index>(n) + 4;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            A(i, j) = kernel(dist(cg.points[i], cg.points[j]));
        A(i, i) += ridge;
        Vec3 p = cg.points[i] - c;
        A(i, n + 0) = 1.0;
        A(i, n + 1) = p.x;
        A(i, n + 2) = p.y;
        A(i, n + 3) = p.z;
        A(n + 0, i) = 1.0;
        A(n + 1, i) = p.x;
        A(n + 2, i) = p.y;
        A(n + 3, i) = p.z;
    }

    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, 3);
    for (std::size_t i = 0; i < n; ++i) {
        b(i, 0) = cg.displacements[i].x;
        b(i, 1) = cg.displacements[i].y;
        b(i, 2) = cg.displacements[i].z;
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible())
        throw FitError("tps_fit: singular interpolation system (control points coplanar or duplicated)");

    Eigen::MatrixXd x = lu.solve(b);
    // Two rounds of iterative refinement tighten the interpolation residual
    // toward machine precision.
    for (int round = 0; round < 2; ++round) {
        Eigen::MatrixXd r = b - A * x;
        x += lu.solve(r);
    }

    TpsModel model;
    model.ridge = ridge;
    model.control_points = cg.points;
    model.kernel_weights.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        model.kernel_weights[i] = {x(i, 0), x(i, 1), x(i, 2)};
    for (int comp = 0; comp < 3; ++comp) {
        double a0 = x(n + 0, comp);
        Vec3 lin{x(n + 1, comp), x(n + 2, comp), x(n + 3, comp)};
        // Un-center: a0' + lin.(x - c) = (a0' - lin.c) + lin.x
        model.affine[comp][0] = lin.x;
        model.affine[comp][1] = lin.y;
        model.affine[comp][2] = lin.z;
        model.affine[comp][3] = a0 - lin.dot(c);
    }
    return model;
}

Vec3 TpsModel::evaluate(const Vec3& p) const {
    Vec3 out;
    for (int comp = 0; comp < 3; ++comp)
        out[comp] = affine[comp][0] * p.x + affine[comp][1] * p.y + affine[comp][2] * p.z + affine[comp][3];
    for (std::size_t i = 0; i < control_points.size(); ++i) {
        double k = kernel(dist(p, control_points[i]));
        out.x += kernel_weights[i].x * k;
        out.y += kernel_weights[i].y * k;
        out.z += kernel_weights[i].z * k;
    }
    return out;
}

DisplacementField tps_evaluate(const TpsModel& model, const Grid& grid) {
    DisplacementField field(grid);
    const int nx = grid.shape[0], ny = grid.shape[1];
    parallel_for(grid.voxel_count(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t idx = b; idx < e; ++idx) {
            int i = static_cast<int>(idx % nx);
            int j = static_cast<int>((idx / nx) % ny);
            int k = static_cast<int>(idx / (static_cast<std::int64_t>(nx) * ny));
            field.vectors[idx] = model.evaluate(grid.world(i, j, k));
        }
    });
    return field;
}

Vec3 RigidTransform::apply(const Vec3& x) const {
    // grouped as R*x + (c - R*c + t): the identity transform maps x to x
    // bit-exactly, which keeps the zero-augmentation path exact
    Vec3 rx, rc;
    for (int r = 0; r < 3; ++r) {
        rx[r] = rotation[r][0] * x.x + rotation[r][1] * x.y + rotation[r][2] * x.z;
        rc[r] = rotation[r][0] * center.x + rotation[r][1] * center.y + rotation[r][2] * center.z;
    }
    Vec3 offset = (center - rc) + translation;
    return rx + offset;
}

void RigidTransform::validate() const {
    const double(&R)[3][3] = rotation;
    double det = R[0][0] * (R[1][1] * R[2][2] - R[1][2] * R[2][1]) -
                 R[0][1] * (R[1][0] * R[2][2] - R[1][2] * R[2][0]) +
                 R[0][2] * (R[1][0] * R[2][1] - R[1][1] * R[2][0]);
    if (std::abs(det - 1.0) > 1e-10)
        throw ValidationError("RigidTransform: rotation determinant must be +1");
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double dot = R[0][i] * R[0][j] + R[1][i] * R[1][j] + R[2][i] * R[2][j];
            double expect = (i == j) ? 1.0 : 0.0;
            if (std::abs(dot - expect) > 1e-10)
                throw ValidationError("RigidTransform: rotation is not orthonormal");
        }
}

RigidTransform rigid_from_euler(const Vec3& angles_deg, const Vec3& translation, const Vec3& center) {
    constexpr double DEG = 3.14159265358979323846 / 180.0;
    double ax = angles_deg.x * DEG, ay = angles_deg.y * DEG, az = angles_deg.z * DEG;
    double cx = std::cos(ax), sx = std::sin(ax);
    double cy = std::cos(ay), sy = std::sin(ay);
    double cz = std::cos(az), sz = std::sin(az);
    // R = Rz * Ry * Rx
    RigidTransform t;
    t.rotation[0][0] = cz * cy;
    t.rotation[0][1] = cz * sy * sx - sz * cx;
    t.rotation[0][2] = cz * sy * cx + sz * sx;
    t.rotation[1][0] = sz * cy;
    t.rotation[1][1] = sz * sy * sx + cz * cx;
    t.rotation[1][2] = sz * sy * cx - cz * sx;
    t.rotation[2][0] = -sy;
    t.rotation[2][1] = cy * sx;
    t.rotation[2][2] = cy * cx;
    t.translation = translation;
    t.center = center;
    return t;
}

DisplacementField compose_rigid_then_tps(const RigidTransform& r, const TpsModel& model, const Grid& grid) {
    DisplacementField field(grid);
    const int nx = grid.shape[0], ny = grid.shape[1];
    parallel_for(grid.voxel_count(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t idx = b; idx < e; ++idx) {
            int i = static_cast<int>(idx % nx);
            int j = static_cast<int>((idx / nx) % ny);
            int k = static_cast<int>(idx / (static_cast<std::int64_t>(nx) * ny));
            Vec3 x = grid.world(i, j, k);
            Vec3 y = r.apply(x);
            Vec3 mapped = y + model.evaluate(y);
            field.vectors[idx] = mapped - x;
        }
    });
    return field;
}

double max_displacement(const DisplacementField& field) {
    double best_sq = 0;
    for (const auto& v : field.vectors)
        best_sq = std::max(best_sq, v.dot(v));
    return std::sqrt(best_sq);
}

std::string TpsModel::to_json() const {
    nlohmann::json j;
    j["points"] = nlohmann::json::array();
    j["weights"] = nlohmann::json::array();
    j["affine"] = nlohmann::json::array();
    for (const auto& p : control_points) j["points"].push_back({p.x, p.y, p.z});
    for (const auto& w : kernel_weights) j["weights"].push_back({w.x, w.y, w.z});
    for (int r = 0; r < 3; ++r) j["affine"].push_back({affine[r][0], affine[r][1], affine[r][2], affine[r][3]});
    j["ridge"] = ridge;
    return j.dump(2);
}

TpsModel TpsModel::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    TpsModel m;
    for (const auto& p : j.at("points")) m.control_points.push_back({p[0], p[1], p[2]});
    for (const auto& w : j.at("weights")) m.kernel_weights.push_back({w[0], w[1], w[2]});
    if (m.kernel_weights.size() != m.control_points.size())
        throw ValidationError("TpsModel: weight/point count mismatch");
    auto aff = j.at("affine");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) m.affine[r][c] = aff[r][c];
    m.ridge = j.at("ridge");
    return m;
}

}  // namespace ddreg
