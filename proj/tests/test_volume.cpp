#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ddreg/ddvol_io.hpp"
#include "ddreg/preprocess.hpp"
#include "oracles.hpp"

using namespace ddreg;

namespace {

Grid make_grid(int nx, int ny, int nz, Vec3 spacing = {1, 1, 1}, Vec3 origin = {0, 0, 0}) {
    Grid g;
    g.shape = {nx, ny, nz};
    g.spacing = spacing;
    g.origin = origin;
    return g;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE_BEGIN("volume");

TEST_CASE("grid world/voxel mapping round trips") {
    Grid g = make_grid(9, 7, 5, {0.7, 1.3, 2.4}, {-3.5, 10.0, 0.25});
    Rng rng(42);
    for (int t = 0; t < 200; ++t) {
        double i = rng.uniform(0, 8), j = rng.uniform(0, 6), k = rng.uniform(0, 4);
        Vec3 p = g.world(i, j, k);
        Vec3 c = g.continuous_index(p);
        CHECK(std::abs(c.x - i) < 1e-12);
        CHECK(std::abs(c.y - j) < 1e-12);
        CHECK(std::abs(c.z - k) < 1e-12);
    }
}

TEST_CASE("grid validation rejects bad shapes and spacings") {
    CHECK_THROWS_AS(make_grid(0, 2, 2).validate(), ValidationError);
    CHECK_THROWS_AS(make_grid(2, 2, 2, {0, 1, 1}).validate(), ValidationError);
    CHECK_THROWS_AS(make_grid(2, 2, 2, {-1, 1, 1}).validate(), ValidationError);
    CHECK_NOTHROW(make_grid(1, 1, 1).validate());
}

TEST_CASE("resample_isotropic at identical spacing is bit-identical") {
    Volume v = oracle::random_volume(make_grid(6, 5, 4), 1);
    Volume out = resample_isotropic(v, 1.0);
    CHECK(out.grid == v.grid);
    CHECK(out.data == v.data);
}

TEST_CASE("resample_isotropic interpolates the 2-voxel ramp at x=1mm") {
    Volume v(make_grid(2, 1, 1, {2, 1, 1}));
    v.at(0, 0, 0) = 0.0;
    v.at(1, 0, 0) = 1.0;
    Volume out = resample_isotropic(v, 1.0);
    REQUIRE(out.grid.shape[0] == 3);
    CHECK(out.at(0, 0, 0) == doctest::Approx(0.0));
    CHECK(out.at(1, 0, 0) == doctest::Approx(0.5));  // world x = 1 mm
    CHECK(out.at(2, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("resample_isotropic matches the direct trilinear oracle") {
    Volume v = oracle::random_volume(make_grid(7, 7, 7, {2, 1.5, 1}, {1, -2, 3}), 2);
    Volume out = resample_isotropic(v, 1.0);
    for (int k = 0; k < out.grid.shape[2]; ++k)
        for (int j = 0; j < out.grid.shape[1]; ++j)
            for (int i = 0; i < out.grid.shape[0]; ++i)
                CHECK(out.at(i, j, k) ==
                      doctest::Approx(oracle::trilinear(v, out.grid.world(i, j, k))).epsilon(1e-12));
}

TEST_CASE("resample rejects non-finite input") {
    Volume v(make_grid(3, 3, 3));
    v.at(1, 1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(resample_isotropic(v, 1.0), ValidationError);
}

TEST_CASE("resample preserves world extent to within one voxel") {
    Grid g = make_grid(11, 6, 9, {1.7, 2.3, 0.9});
    Volume v = oracle::random_volume(g, 3);
    Volume out = resample_isotropic(v, 1.25);
    for (int a = 0; a < 3; ++a) {
        double in_extent = (g.shape[a] - 1) * g.spacing[a];
        double out_extent = (out.grid.shape[a] - 1) * 1.25;
        CHECK(std::abs(in_extent - out_extent) <= 1.25);
    }
}

TEST_CASE("resize to own shape is identical") {
    Volume v = oracle::random_volume(make_grid(5, 6, 7, {1.1, 0.9, 2.0}), 4);
    Volume out = resize(v, {5, 6, 7});
    CHECK(out.data == v.data);
    CHECK(out.grid == v.grid);
}

TEST_CASE("resize keeps constant volumes constant") {
    Volume v(make_grid(4, 4, 4), 0.73);
    Volume out = resize(v, {3, 7, 2});
    for (double x : out.data) CHECK(x == doctest::Approx(0.73));
}

TEST_CASE("resize matches trilinear oracle at output centers") {
    Volume v = oracle::random_volume(make_grid(8, 8, 8, {1.5, 1, 2}), 5);
    Volume out = resize(v, {4, 4, 4});
    // box convention: spacing scales by n_in/n_out, origin shifts to keep the box
    for (int a = 0; a < 3; ++a)
        CHECK(out.grid.spacing[a] ==
              doctest::Approx(v.grid.spacing[a] * v.grid.shape[a] / out.grid.shape[a]));
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i)
                CHECK(out.at(i, j, k) ==
                      doctest::Approx(oracle::trilinear(v, out.grid.world(i, j, k))).epsilon(1e-12));
}

TEST_CASE("resize rejects non-positive target shapes") {
    Volume v = oracle::random_volume(make_grid(4, 4, 4), 6);
    CHECK_THROWS_AS(resize(v, {0, 4, 4}), ValidationError);
}

TEST_CASE("label resampling never invents labels") {
    Grid g = make_grid(9, 9, 9, {1.3, 0.8, 1.0});
    LabelMap m = oracle::random_labels(g, 7, 3);
    for (const LabelMap& out : {resample_isotropic(m, 0.7), resize(m, {5, 11, 4})}) {
        for (std::uint8_t l : out.labels) CHECK(m.has_label(l));
    }
}

TEST_CASE("crop_to_mask identity when mask covers everything") {
    Grid g = make_grid(5, 5, 5);
    Volume v = oracle::random_volume(g, 8);
    LabelMap m(g, std::vector<std::uint8_t>(g.voxel_count(), 1));
    auto [out, rec] = crop_to_mask(v, m, 0.0);
    CHECK(out.data == v.data);
    CHECK(rec.offset == std::array<int, 3>{0, 0, 0});
    CHECK(rec.size == g.shape);
}

TEST_CASE("crop_to_mask single voxel with 2mm margin gives [3,7] box") {
    Grid g = make_grid(16, 16, 16);
    Volume v = oracle::random_volume(g, 9);
    std::vector<std::uint8_t> data(g.voxel_count(), 0);
    data[g.flat(5, 5, 5)] = 1;
    LabelMap m(g, std::move(data));
    auto [out, rec] = crop_to_mask(v, m, 2.0);
    CHECK(rec.offset == std::array<int, 3>{3, 3, 3});
    CHECK(rec.size == std::array<int, 3>{5, 5, 5});
    CHECK(out.grid.origin.x == doctest::Approx(3.0));
}

TEST_CASE("crop_to_mask equals brute-force bounding box oracle") {
    Rng rng(77);
    for (int t = 0; t < 30; ++t) {
        Grid g = make_grid(10, 12, 8, {1, 1.5, 2});
        Volume v = oracle::random_volume(g, 100 + t);
        LabelMap m = oracle::random_labels(g, 200 + t, 2, 0.05);
        if (m.empty_mask()) continue;
        double margin = rng.uniform(0, 4);
        auto [out, rec] = crop_to_mask(v, m, margin);
        oracle::Box box = oracle::mask_bbox(m);
        for (int a = 0; a < 3; ++a) {
            int mv = static_cast<int>(std::ceil(margin / g.spacing[a] - 1e-9));
            CHECK(rec.offset[a] == std::max(0, box.lo[a] - mv));
            int hi = std::min(g.shape[a] - 1, box.hi[a] + mv);
            CHECK(rec.size[a] == hi - std::max(0, box.lo[a] - mv) + 1);
        }
    }
}

TEST_CASE("crop_to_mask rejects empty masks") {
    Grid g = make_grid(4, 4, 4);
    Volume v = oracle::random_volume(g, 10);
    LabelMap m(g, std::vector<std::uint8_t>(g.voxel_count(), 0));
    CHECK_THROWS_AS(crop_to_mask(v, m, 0.0), EmptyMaskError);
}

TEST_CASE("normalize_intensity maps {10,20,30} to {0,0.5,1}") {
    Volume v(make_grid(3, 1, 1));
    v.data = {10, 20, 30};
    Volume out = normalize_intensity(v);
    CHECK(out.data[0] == doctest::Approx(0.0));
    CHECK(out.data[1] == doctest::Approx(0.5));
    CHECK(out.data[2] == doctest::Approx(1.0));
}

TEST_CASE("normalize_intensity maps constant volumes to zeros") {
    Volume v(make_grid(4, 4, 4), 5.5);
    Volume out = normalize_intensity(v);
    for (double x : out.data) CHECK(x == 0.0);
}

TEST_CASE("normalize_intensity is idempotent") {
    Volume v = oracle::random_volume(make_grid(6, 6, 6), 11, -4, 9);
    Volume once = normalize_intensity(v);
    Volume twice = normalize_intensity(once);
    CHECK(once.data == twice.data);  // min 0, max 1 -> affine map is identity
}

TEST_CASE("centroid_mm trivial cases") {
    Grid g = make_grid(8, 8, 8);
    std::vector<std::uint8_t> data(g.voxel_count(), 0);
    data[g.flat(2, 3, 4)] = 1;
    LabelMap single(g, data);
    Vec3 c = centroid_mm(single, 1);
    CHECK(c.x == doctest::Approx(2));
    CHECK(c.y == doctest::Approx(3));
    CHECK(c.z == doctest::Approx(4));

    data[g.flat(4, 3, 4)] = 0;
    data[g.flat(0, 0, 0)] = 2;
    data[g.flat(4, 0, 0)] = 2;
    LabelMap two(g, data);
    CHECK(centroid_mm(two, 2).x == doctest::Approx(2.0));
}

TEST_CASE("centroid_mm matches the exhaustive oracle") {
    Grid g = make_grid(9, 7, 6, {0.8, 1.2, 2.0}, {5, -1, 0});
    LabelMap m = oracle::random_labels(g, 12, 2);
    for (std::uint8_t l : m.labels) {
        Vec3 got = centroid_mm(m, l);
        Vec3 want = oracle::centroid(m, l);
        CHECK((got - want).norm() < 1e-10);
    }
}

TEST_CASE("centroid_mm distinguishes absent-label from empty-map errors") {
    Grid g = make_grid(4, 4, 4);
    LabelMap empty(g, std::vector<std::uint8_t>(g.voxel_count(), 0));
    CHECK_THROWS_AS(centroid_mm(empty, 1), EmptyMaskError);
    std::vector<std::uint8_t> data(g.voxel_count(), 0);
    data[0] = 3;
    LabelMap nonempty(g, data);
    CHECK_THROWS_AS(centroid_mm(nonempty, 1), LabelNotFoundError);
    CHECK_NOTHROW(centroid_mm(nonempty, 3));
}

TEST_CASE("resample round trip error stays within interpolation error on smooth volumes") {
    Grid g = make_grid(12, 12, 12, {2, 2, 2});
    Volume v(g);
    for (int k = 0; k < 12; ++k)
        for (int j = 0; j < 12; ++j)
            for (int i = 0; i < 12; ++i)
                v.at(i, j, k) = 0.5 + 0.4 * std::sin(0.3 * i) * std::cos(0.25 * j + 0.1 * k);
    Volume back = resample_isotropic(resample_isotropic(v, 1.0), 2.0);
    REQUIRE(back.grid.shape == g.shape);
    double worst = 0;
    for (std::size_t i = 0; i < v.data.size(); ++i)
        worst = std::max(worst, std::abs(v.data[i] - back.data[i]));
    CHECK(worst < 0.05);  // two interpolation steps on a smooth field

    Volume constant(g, 0.37);
    Volume cback = resample_isotropic(resample_isotropic(constant, 1.0), 2.0);
    for (double x : cback.data) CHECK(x == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("ddvol round trip is bit-exact for volumes and label maps") {
    Grid g = make_grid(5, 4, 3, {1, 1.5, 2}, {0.5, -1, 2});
    Volume v = oracle::random_volume(g, 13);
    std::string vp = temp_path("ddreg_test_vol.ddvol");
    save_ddvol(v, vp);
    Volume v2 = load_volume(vp);
    std::string vp2 = temp_path("ddreg_test_vol2.ddvol");
    save_ddvol(v2, vp2);

    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    CHECK(slurp(vp) == slurp(vp2));
    CHECK(slurp(vp + ".raw") == slurp(vp2 + ".raw"));
    CHECK(v2.grid == v.grid);

    LabelMap m = oracle::random_labels(g, 14, 3);
    std::string mp = temp_path("ddreg_test_labels.ddvol");
    save_ddvol(m, mp);
    LabelMap m2 = load_labelmap(mp);
    CHECK(m2.data == m.data);
    CHECK(m2.labels == m.labels);

    for (const auto& p : {vp, vp + ".raw", vp2, vp2 + ".raw", mp, mp + ".raw"})
        std::remove(p.c_str());
}

TEST_CASE("ddvol rejects payload size mismatches and wrong dtypes") {
    Grid g = make_grid(3, 3, 3);
    Volume v = oracle::random_volume(g, 15);
    std::string p = temp_path("ddreg_test_bad.ddvol");
    save_ddvol(v, p);
    {
        std::ofstream raw(p + ".raw", std::ios::binary | std::ios::trunc);
        raw << "short";
    }
    CHECK_THROWS_AS(load_volume(p), IoError);
    save_ddvol(v, p);
    CHECK_THROWS_AS(load_labelmap(p), IoError);  // dtype f32, not u8
    std::remove(p.c_str());
    std::remove((p + ".raw").c_str());
}

TEST_CASE("displacement field round trips through component ddvols") {
    Grid g = make_grid(4, 5, 6);
    DisplacementField f(g);
    Rng rng(21);
    for (auto& vec : f.vectors) vec = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    std::string p = temp_path("ddreg_test_field");
    save_field(f, p);
    DisplacementField f2 = load_field(p);
    CHECK(f2.grid == f.grid);
    for (std::size_t i = 0; i < f.vectors.size(); ++i) {
        // f32 payload: compare after float rounding
        CHECK(static_cast<float>(f.vectors[i].x) == static_cast<float>(f2.vectors[i].x));
        CHECK(static_cast<float>(f.vectors[i].y) == static_cast<float>(f2.vectors[i].y));
        CHECK(static_cast<float>(f.vectors[i].z) == static_cast<float>(f2.vectors[i].z));
    }
    for (const char* ax : {".x.ddvol", ".y.ddvol", ".z.ddvol"}) {
        std::remove((p + ax).c_str());
        std::remove((p + ax + ".raw").c_str());
    }
}

TEST_SUITE_END();
