#include <doctest.h>

#include "ddreg/losses.hpp"
#include "oracles.hpp"

using namespace ddreg;

namespace {

Grid make_grid(int n, Vec3 spacing = {1, 1, 1}) {
    Grid g;
    g.shape = {n, n, n};
    g.spacing = spacing;
    return g;
}

}  // namespace

TEST_SUITE_BEGIN("losses");

TEST_CASE("loss_ncc: identity, affine invariance, formula oracle") {
    Grid g = make_grid(5);
    Volume fixed = oracle::random_volume(g, 1);

    CHECK(loss_ncc(fixed, fixed, false).value == doctest::Approx(0.0).epsilon(1e-6));

    Volume scaled(g);
    for (std::size_t i = 0; i < fixed.data.size(); ++i) scaled.data[i] = 2.5 * fixed.data[i] + 0.3;
    CHECK(loss_ncc(scaled, fixed, false).value == doctest::Approx(0.0).epsilon(1e-6));

    Volume pred = oracle::random_volume(g, 2);
    double rho = oracle::zncc(pred, fixed);
    // eps in the variance denominators shifts the value by O(eps)
    CHECK(loss_ncc(pred, fixed, false).value == doctest::Approx(1.0 - rho).epsilon(1e-6));

    // symmetry
    CHECK(loss_ncc(pred, fixed, false).value ==
          doctest::Approx(loss_ncc(fixed, pred, false).value).epsilon(1e-12));
}

TEST_CASE("loss_ncc flags the doubly-constant degenerate case as loss 1") {
    Grid g = make_grid(4);
    Volume a(g, 0.5), b(g, 0.8);
    LossResult r = loss_ncc(a, b);
    CHECK(r.value == 1.0);
    CHECK(r.degenerate);
    for (double x : r.grad) CHECK(x == 0.0);
}

TEST_CASE("loss_ssim: identity and constant pairs score SSIM 1") {
    Grid g = make_grid(8);
    Volume v = oracle::random_volume(g, 3);
    CHECK(loss_ssim(v, v, false).value == doctest::Approx(0.0).epsilon(1e-9));
    Volume c1(g, 0.5), c2(g, 0.5);
    CHECK(loss_ssim(c1, c2, false).value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("loss_ssim matches the direct-window oracle") {
    Grid g = make_grid(9);
    Volume pred = oracle::random_volume(g, 4);
    Volume fixed = oracle::random_volume(g, 5);
    double want = 1.0 - oracle::ssim_mean(pred, fixed);
    CHECK(loss_ssim(pred, fixed, false).value == doctest::Approx(want).epsilon(1e-8));
}

TEST_CASE("loss_dice trivial values") {
    Grid g = make_grid(4);
    std::vector<std::uint8_t> a(g.voxel_count(), 0), b(g.voxel_count(), 0);
    a[0] = a[1] = 1;
    b[0] = b[1] = 1;
    OneHotStack sa = OneHotStack::from_labelmap(LabelMap(g, a));
    CHECK(loss_dice(sa, sa, false).value == doctest::Approx(0.0).epsilon(1e-6));

    b[0] = b[1] = 0;
    b[2] = b[3] = 1;
    OneHotStack sb = OneHotStack::from_labelmap(LabelMap(g, b), sa.channel_labels);
    CHECK(loss_dice(sa, sb, false).value == doctest::Approx(1.0).epsilon(1e-6));

    // |A| = |B| = 2, overlap 1 -> soft dice 2*1/(2+2) = 0.5
    b[0] = 0;
    b[1] = 1;
    b[2] = 1;
    b[3] = 0;
    OneHotStack sc = OneHotStack::from_labelmap(LabelMap(g, b), sa.channel_labels);
    CHECK(loss_dice(sa, sc, false).value == doctest::Approx(0.5).epsilon(1e-6));

    // symmetry
    OneHotStack sp = sa, sq = sc;
    CHECK(loss_dice(sp, sq, false).value == doctest::Approx(loss_dice(sq, sp, false).value));
}

TEST_CASE("loss_dice skips labels absent from both sides") {
    Grid g = make_grid(4);
    std::vector<std::uint8_t> a(g.voxel_count(), 0);
    a[0] = 1;
    LabelMap la(g, a);
    std::vector<std::uint8_t> basis = {1, 2};  // label 2 exists nowhere
    OneHotStack sa = OneHotStack::from_labelmap(la, basis);
    ChannelLossResult r = loss_dice(sa, sa);
    CHECK(r.value == doctest::Approx(0.0).epsilon(1e-6));
    REQUIRE(r.skipped_labels.size() == 1);
    CHECK(r.skipped_labels[0] == 2);
}

TEST_CASE("loss_hd_approx trivial and oracle cases") {
    Grid g = make_grid(6);
    std::vector<std::uint8_t> mask(g.voxel_count(), 0);
    for (int k = 2; k < 4; ++k)
        for (int j = 2; j < 4; ++j)
            for (int i = 2; i < 4; ++i) mask[g.flat(i, j, k)] = 1;
    LabelMap fixed(g, mask);
    std::vector<Volume> dt = {distance_transform(fixed, 1)};
    std::vector<std::uint8_t> dtl = {1};

    OneHotStack pred = OneHotStack::from_labelmap(fixed);
    CHECK(loss_hd_approx(pred, dt, dtl, false).value == doctest::Approx(0.0).epsilon(1e-6));

    // a single predicted voxel 3 mm from a single-site mask scores distance^2 = 9
    std::vector<std::uint8_t> site(g.voxel_count(), 0);
    site[g.flat(1, 1, 1)] = 1;
    LabelMap single(g, site);
    std::vector<Volume> dts = {distance_transform(single, 1)};
    OneHotStack p2;
    p2.grid = g;
    p2.channel_labels = {1};
    p2.channels = {std::vector<double>(g.voxel_count(), 0.0)};
    p2.channels[0][g.flat(4, 1, 1)] = 1.0;  // 3 voxels along x at 1 mm
    CHECK(loss_hd_approx(p2, dts, {1}, false).value == doctest::Approx(9.0).epsilon(1e-6));

    // random soft masks against the direct weighted-sum formula
    Rng rng(7);
    OneHotStack soft;
    soft.grid = g;
    soft.channel_labels = {1};
    soft.channels = {std::vector<double>(g.voxel_count())};
    for (auto& x : soft.channels[0]) x = rng.uniform01();
    double num = 0, den = 0;
    for (std::int64_t i = 0; i < g.voxel_count(); ++i) {
        num += soft.channels[0][i] * dts[0].data[i] * dts[0].data[i];
        den += soft.channels[0][i];
    }
    CHECK(loss_hd_approx(soft, dts, {1}, false).value ==
          doctest::Approx(num / (den + 1e-7)).epsilon(1e-10));
}

TEST_CASE("reg_smoothness: constant fields are free, linear fields cost 1/3") {
    Grid g = make_grid(5);
    DisplacementField f(g);
    for (auto& v : f.vectors) v = {4.2, -1.0, 3.3};
    CHECK(reg_smoothness(f, false).value == 0.0);

    DisplacementField lin(g);
    for (int k = 0; k < 5; ++k)
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 5; ++i) lin.at(i, j, k) = {static_cast<double>(i), 0, 0};
    CHECK(reg_smoothness(lin, false).value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("reg_smoothness matches a direct-difference oracle and is shift invariant") {
    Grid g = make_grid(5, {1, 1.5, 2});
    DisplacementField f(g);
    Rng rng(8);
    for (auto& v : f.vectors) v = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};

    // direct evaluation of the documented scheme: forward differences, last
    // sample reuses the preceding difference
    double total = 0;
    for (int comp = 0; comp < 3; ++comp)
        for (int axis = 0; axis < 3; ++axis) {
            int idx[3];
            for (idx[2] = 0; idx[2] < 5; ++idx[2])
                for (idx[1] = 0; idx[1] < 5; ++idx[1])
                    for (idx[0] = 0; idx[0] < 5; ++idx[0]) {
                        int q[3] = {idx[0], idx[1], idx[2]};
                        if (q[axis] == 4) q[axis] = 3;  // reuse last difference
                        int r[3] = {q[0], q[1], q[2]};
                        r[axis] += 1;
                        double d = (f.at(r[0], r[1], r[2])[comp] - f.at(q[0], q[1], q[2])[comp]) /
                                   g.spacing[axis];
                        total += d * d;
                    }
        }
    total /= 3.0 * g.voxel_count();
    CHECK(reg_smoothness(f, false).value == doctest::Approx(total).epsilon(1e-12));

    DisplacementField shifted = f;
    for (auto& v : shifted.vectors) v += Vec3{10, -20, 5};
    CHECK(reg_smoothness(shifted, false).value == doctest::Approx(reg_smoothness(f, false).value));
}

TEST_CASE("distance_transform trivial cases") {
    Grid g = make_grid(7);
    std::vector<std::uint8_t> data(g.voxel_count(), 0);
    data[g.flat(3, 3, 3)] = 1;
    LabelMap m(g, std::move(data));
    Volume dt = distance_transform(m, 1);
    CHECK(dt.at(3, 3, 3) == 0.0);
    CHECK(dt.at(0, 3, 3) == doctest::Approx(3.0));
    CHECK(dt.at(3, 6, 3) == doctest::Approx(3.0));
    CHECK_THROWS_AS(distance_transform(m, 2), LabelNotFoundError);
    LabelMap empty(g, std::vector<std::uint8_t>(g.voxel_count(), 0));
    CHECK_THROWS_AS(distance_transform(empty, 1), EmptyMaskError);
}

TEST_CASE("distance_transform equals the brute-force oracle exactly") {
    // binary-fraction spacings make every squared distance exactly
    // representable, so the separable pass and the exhaustive scan agree to
    // the last bit
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        Grid g;
        g.shape = {9, 11, 7};
        g.spacing = {1.0, 1.5, 2.5};
        LabelMap m = oracle::random_labels(g, seed, 2, 0.08);
        if (m.empty_mask()) continue;
        for (std::uint8_t l : m.labels) {
            Volume got = distance_transform(m, l);
            Volume want = oracle::edt_bruteforce(m, l);
            for (std::size_t i = 0; i < got.data.size(); ++i) CHECK(got.data[i] == want.data[i]);
        }
    }
}

TEST_CASE("losses are non-negative on random inputs") {
    Grid g = make_grid(6);
    for (std::uint64_t s = 1; s <= 10; ++s) {
        Volume a = oracle::random_volume(g, 2 * s);
        Volume b = oracle::random_volume(g, 2 * s + 1);
        CHECK(loss_ncc(a, b, false).value >= 0.0);
        CHECK(loss_ncc(a, b, false).value <= 2.0);
        CHECK(loss_ssim(a, b, false).value >= 0.0);
        LabelMap la = oracle::random_labels(g, 3 * s, 2, 0.3);
        LabelMap lb = oracle::random_labels(g, 3 * s + 1, 2, 0.3);
        if (la.labels.empty() || lb.labels.empty()) continue;
        OneHotStack sa = OneHotStack::from_labelmap(la, {1, 2});
        OneHotStack sb = OneHotStack::from_labelmap(lb, {1, 2});
        double d = loss_dice(sa, sb, false).value;
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
    }
}

TEST_SUITE_END();
