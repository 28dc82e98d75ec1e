#include "ddreg/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "ddreg/graph_ops.hpp"
#include "ddreg/net.hpp"
#include "ddreg/rng.hpp"
#include "ddreg/synth.hpp"

namespace ddreg {

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(1.0, std::abs(a) + std::abs(b));
}

// Central finite difference over every element of `storage`, comparing
// against the matching analytic gradient. Piecewise-smooth graphs (maxpool
// argmax switches, LeakyReLU kinks) make the difference quotient invalid
// when the step straddles a kink; shrinking h moves the stencil off the
// kink, while a genuine gradient bug persists at every h.
double fd_sweep(std::vector<double>& storage, const std::vector<double>& analytic,
                const std::function<double()>& eval, double h, double accept = 1e-5) {
    double worst = 0;
    for (std::size_t i = 0; i < storage.size(); ++i) {
        double save = storage[i];
        double best = std::numeric_limits<double>::infinity();
        for (double step = h; step >= h / 512; step /= 8) {
            storage[i] = save + step;
            double lp = eval();
            storage[i] = save - step;
            double lm = eval();
            double fd = (lp - lm) / (2 * step);
            best = std::min(best, rel_err(analytic[i], fd));
            if (best <= accept) break;
        }
        storage[i] = save;
        worst = std::max(worst, best);
    }
    return worst;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

Grid unit_grid(int nx, int ny, int nz, Vec3 spacing = {1, 1, 1}) {
    Grid g;
    g.shape = {nx, ny, nz};
    g.spacing = spacing;
    return g;
}

// ---- per-op checks ----

double check_conv3d(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 11);
    ad::Shape xs{1, 2, 4, 4, 4}, ks{3, 2, 3, 3, 3}, bs{1, 3, 1, 1, 1};
    std::vector<double> x = random_vec(rng, xs.numel(), -1, 1);
    std::vector<double> k = random_vec(rng, ks.numel(), -1, 1);
    std::vector<double> b = random_vec(rng, bs.numel(), -1, 1);
    std::vector<double> R = random_vec(rng, xs.spatial() * 3, -1, 1);

    auto build = [&](bool grad) {
        auto xn = ad::leaf(xs, x, grad);
        auto kn = ad::leaf(ks, k, grad);
        auto bn = ad::leaf(bs, b, grad);
        auto root = ad::weighted_sum(ad::conv3d(xn, kn, bn), R);
        return std::tuple{root, xn, kn, bn};
    };
    auto [root, xn, kn, bn] = build(true);
    ad::backward(root);
    auto eval = [&] { return std::get<0>(build(false))->value[0]; };

    double e = fd_sweep(x, xn->grad, eval, 1e-5);
    e = std::max(e, fd_sweep(k, kn->grad, eval, 1e-5));
    e = std::max(e, fd_sweep(b, bn->grad, eval, 1e-5));
    return e;
}

double check_leaky(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 12);
    ad::Shape xs{1, 2, 5, 5, 5};
    std::vector<double> x(xs.numel());
    for (auto& v : x) {
        double mag = rng.uniform(0.01, 1.0);  // keep clear of the kink at 0
        v = rng.uniform01() < 0.5 ? -mag : mag;
    }
    std::vector<double> R = random_vec(rng, x.size(), -1, 1);
    auto build = [&](bool grad) {
        auto xn = ad::leaf(xs, x, grad);
        return std::pair{ad::weighted_sum(ad::leaky_relu(xn, 0.2), R), xn};
    };
    auto [root, xn] = build(true);
    ad::backward(root);
    auto eval = [&] { return build(false).first->value[0]; };
    return fd_sweep(x, xn->grad, eval, 1e-6);
}

double check_maxpool(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 13);
    ad::Shape xs{1, 2, 4, 4, 4};
    std::vector<double> x = random_vec(rng, xs.numel(), 0, 1);
    // widen any near-tied window maximum so finite differences stay on one
    // side of the argmax switch
    for (int c = 0; c < 2; ++c)
        for (int oz = 0; oz < 2; ++oz)
            for (int oy = 0; oy < 2; ++oy)
                for (int ox = 0; ox < 2; ++ox) {
                    double best = -1, second = -1;
                    std::size_t best_at = 0;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                std::size_t p = ((c * 4 + 2 * oz + dz) * 4 + 2 * oy + dy) * 4 +
                                                2 * ox + dx;
                                if (x[p] > best) {
                                    second = best;
                                    best = x[p];
                                    best_at = p;
                                } else if (x[p] > second) {
                                    second = x[p];
                                }
                            }
                    if (best - second < 1e-4) x[best_at] += 2e-4;
                }
    std::vector<double> R = random_vec(rng, x.size() / 8, -1, 1);
    auto build = [&](bool grad) {
        auto xn = ad::leaf(xs, x, grad);
        return std::pair{ad::weighted_sum(ad::maxpool3d(xn), R), xn};
    };
    auto [root, xn] = build(true);
    ad::backward(root);
    auto eval = [&] { return build(false).first->value[0]; };
    return fd_sweep(x, xn->grad, eval, 1e-6);
}

double check_upsample(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 14);
    ad::Shape xs{1, 2, 3, 3, 3};
    std::vector<double> x = random_vec(rng, xs.numel(), -1, 1);
    std::vector<double> R = random_vec(rng, x.size() * 8, -1, 1);
    auto build = [&](bool grad) {
        auto xn = ad::leaf(xs, x, grad);
        return std::pair{ad::weighted_sum(ad::upsample_nn(xn), R), xn};
    };
    auto [root, xn] = build(true);
    ad::backward(root);
    auto eval = [&] { return build(false).first->value[0]; };
    return fd_sweep(x, xn->grad, eval, 1e-6);
}

// field gradient through the graph node
double check_warp_field(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 15);
    Grid g = unit_grid(6, 6, 6);
    Volume v(g);
    for (auto& x : v.data) x = rng.uniform01();
    // offsets stay inside (0.05, 0.45) voxels: off-lattice, clamp-consistent
    ad::Shape ps{1, 3, 6, 6, 6};
    std::vector<double> phi(ps.numel());
    for (auto& x : phi) {
        double mag = rng.uniform(0.05, 0.45);
        x = rng.uniform01() < 0.5 ? -mag : mag;
    }
    std::vector<double> R = random_vec(rng, g.voxel_count(), -1, 1);
    auto build = [&](bool grad) {
        auto pn = ad::leaf(ps, phi, grad);
        return std::pair{ad::weighted_sum(ad::warp_volume_node(v, pn, g), R), pn};
    };
    auto [root, pn] = build(true);
    ad::backward(root);
    auto eval = [&] { return build(false).first->value[0]; };
    return fd_sweep(phi, pn->grad, eval, 1e-5);
}

// source-volume gradient via warp_backward directly
double check_warp_source(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 16);
    Grid g = unit_grid(5, 5, 5);
    Volume v(g);
    for (auto& x : v.data) x = rng.uniform01();
    DisplacementField f(g);
    for (auto& vec : f.vectors)
        for (int a = 0; a < 3; ++a) {
            double mag = rng.uniform(0.05, 0.45);
            vec[a] = rng.uniform01() < 0.5 ? -mag : mag;
        }
    Volume upstream(g);
    for (auto& x : upstream.data) x = rng.uniform(-1, 1);

    Volume grad_v;
    DisplacementField grad_f;
    warp_backward(v, f, upstream, grad_v, grad_f);

    auto eval = [&] {
        Volume out = warp_trilinear(v, f);
        double s = 0;
        for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * upstream.data[i];
        return s;
    };
    return fd_sweep(v.data, grad_v.data, eval, 1e-5);
}

double check_ncc(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 17);
    Grid g = unit_grid(5, 5, 5);
    Volume pred(g), fixed(g);
    for (auto& x : pred.data) x = rng.uniform01();
    for (auto& x : fixed.data) x = rng.uniform01();
    LossResult r = loss_ncc(pred, fixed);
    auto eval = [&] { return loss_ncc(pred, fixed, false).value; };
    return fd_sweep(pred.data, r.grad, eval, 1e-6);
}

double check_ssim(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 18);
    Grid g = unit_grid(9, 9, 9);
    Volume pred(g), fixed(g);
    for (auto& x : pred.data) x = rng.uniform01();
    for (auto& x : fixed.data) x = rng.uniform01();
    LossResult r = loss_ssim(pred, fixed);
    auto eval = [&] { return loss_ssim(pred, fixed, false).value; };
    return fd_sweep(pred.data, r.grad, eval, 1e-6);
}

OneHotStack random_stack(Rng& rng, const Grid& g, int channels, bool binary) {
    OneHotStack s;
    s.grid = g;
    for (int c = 0; c < channels; ++c) {
        s.channel_labels.push_back(static_cast<std::uint8_t>(c + 1));
        std::vector<double> chan(g.voxel_count());
        for (auto& x : chan) x = binary ? (rng.uniform01() < 0.3 ? 1.0 : 0.0) : rng.uniform01();
        s.channels.push_back(std::move(chan));
    }
    return s;
}

double check_dice(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 19);
    Grid g = unit_grid(5, 5, 5);
    OneHotStack pred = random_stack(rng, g, 2, false);
    OneHotStack fixed = random_stack(rng, g, 2, true);
    ChannelLossResult r = loss_dice(pred, fixed);
    double worst = 0;
    for (std::size_t c = 0; c < pred.channels.size(); ++c) {
        auto eval = [&] { return loss_dice(pred, fixed, false).value; };
        worst = std::max(worst, fd_sweep(pred.channels[c], r.grad[c], eval, 1e-6));
    }
    return worst;
}

double check_hd(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 20);
    Grid g = unit_grid(5, 5, 5, {1, 1.5, 2});
    std::vector<std::uint8_t> lab(g.voxel_count(), 0);
    for (auto& l : lab) {
        double u = rng.uniform01();
        l = u < 0.2 ? 1 : (u < 0.35 ? 2 : 0);
    }
    lab[0] = 1;  // keep both labels present
    lab[1] = 2;
    LabelMap mask(g, std::move(lab));
    std::vector<Volume> dts;
    std::vector<std::uint8_t> dtl;
    for (std::uint8_t l : mask.labels) {
        dts.push_back(distance_transform(mask, l));
        dtl.push_back(l);
    }
    OneHotStack pred = random_stack(rng, g, 2, false);
    ChannelLossResult r = loss_hd_approx(pred, dts, dtl);
    double worst = 0;
    for (std::size_t c = 0; c < pred.channels.size(); ++c) {
        auto eval = [&] { return loss_hd_approx(pred, dts, dtl, false).value; };
        worst = std::max(worst, fd_sweep(pred.channels[c], r.grad[c], eval, 1e-6));
    }
    return worst;
}

double check_smoothness(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 21);
    Grid g = unit_grid(5, 4, 6, {1, 1.5, 2});
    DisplacementField f(g);
    for (auto& v : f.vectors)
        for (int a = 0; a < 3; ++a) v[a] = rng.uniform(-2, 2);
    FieldLossResult r = reg_smoothness(f);

    // flatten vectors for the sweep
    std::vector<double> flat(f.vectors.size() * 3), grad(f.vectors.size() * 3);
    for (std::size_t i = 0; i < f.vectors.size(); ++i)
        for (int a = 0; a < 3; ++a) {
            flat[3 * i + a] = f.vectors[i][a];
            grad[3 * i + a] = r.grad[i][a];
        }
    auto eval = [&] {
        DisplacementField ff(g);
        for (std::size_t i = 0; i < ff.vectors.size(); ++i)
            for (int a = 0; a < 3; ++a) ff.vectors[i][a] = flat[3 * i + a];
        return reg_smoothness(ff, false).value;
    };
    return fd_sweep(flat, grad, eval, 1e-6);
}

double check_combine(std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0, 22);
    std::vector<LossKind> kinds = {LossKind::NCC, LossKind::SSIM, LossKind::DSC};
    WeightState state = init_weights(kinds, 1, 5e-3);
    for (auto& l : state.logits) l += rng.uniform(-1, 1);
    std::vector<double> terms = random_vec(rng, 4, 0, 2);
    CombineResult r = combine(terms, state);
    auto eval = [&] { return combine(terms, state, false).value; };
    return fd_sweep(state.logits, r.dlogits, eval, 1e-6);
}

// ---- end-to-end: full training graph through a depth-2 net ----

double check_end_to_end(std::uint64_t seed, int f0, int f1, int head, int extent) {
    NetConfig net;
    net.depth = 2;
    net.filters = {f0, f1};
    net.head_filters = head;

    Phantom fixed_ph = make_phantom(PhantomKind::Sphere, {extent, extent, extent}, 1.0, seed, 1);
    Phantom moving_ph = make_phantom(PhantomKind::Sphere, {extent, extent, extent}, 1.0, seed, 2);
    const Volume& fixed = fixed_ph.image;
    const Volume& moving = moving_ph.image;

    ParameterStore store = init_unet_params(net, seed);
    Rng rng = Rng::keyed(seed, 0, 23);
    // Zero biases put every background pre-activation exactly on the
    // LeakyReLU kink (constant-zero image regions), where the difference
    // quotient is ill-posed no matter how small the step. Random biases move
    // the check off the kink almost everywhere.
    for (auto& p : store.all())
        if (p.name.ends_with(".bias"))
            for (auto& v : p.value) v = rng.uniform(0.02, 0.08) * (rng.uniform01() < 0.5 ? -1 : 1);
    // off-lattice warp coordinates: bias the output conv away from zero and
    // give its kernel a small random component
    Parameter& ok = store.get("head.out.kernel");
    for (auto& v : ok.value) v = rng.uniform(-0.02, 0.02);
    Parameter& ob = store.get("head.out.bias");
    ob.value = {0.23, 0.31, 0.27};

    WeightState ws = init_weights({LossKind::NCC, LossKind::DSC}, 1, 5e-3);
    Parameter& logits = store.add("uw.logits", {static_cast<int>(ws.logits.size())}, true);
    logits.value = ws.logits;
    for (auto& l : logits.value) l += rng.uniform(-0.3, 0.3);

    OneHotStack fixed_onehot = OneHotStack::from_labelmap(fixed_ph.labels);
    OneHotStack moving_onehot =
        OneHotStack::from_labelmap(moving_ph.labels, fixed_onehot.channel_labels);

    struct Built {
        ad::NodePtr root;
        std::vector<std::pair<Parameter*, ad::NodePtr>> leaves;
    };
    auto build = [&](bool grad) {
        Built b;
        ad::NodePtr phi = unet_graph(fixed, moving, store, net, b.leaves, grad);
        ad::NodePtr pred = ad::warp_volume_node(moving, phi, fixed.grid);
        ad::NodePtr stack = ad::warp_onehot_node(moving_onehot, phi);
        std::vector<ad::NodePtr> terms = {ad::ncc_loss_node(pred, fixed),
                                          ad::dice_loss_node(stack, fixed_onehot),
                                          ad::smoothness_node(phi, fixed.grid)};
        ad::Shape ls{1, static_cast<int>(logits.value.size()), 1, 1, 1};
        auto ln = ad::leaf(ls, logits.value, grad, "uw.logits");
        b.leaves.push_back({&logits, ln});
        b.root = ad::combine_node(terms, ln);
        return b;
    };

    Built b = build(true);
    ad::backward(b.root);
    auto eval = [&] { return build(false).root->value[0]; };

    double worst = 0;
    for (auto& [param, node] : b.leaves) {
        if (node->grad.empty()) node->grad.assign(node->value.size(), 0.0);
        worst = std::max(worst, fd_sweep(param->value, node->grad, eval, 1e-5));
    }
    return worst;
}

GradCheck run_one(const std::string& name, int seeds, double tol,
                  const std::function<double(std::uint64_t)>& body) {
    GradCheck c;
    c.name = name;
    c.seeds = seeds;
    c.tolerance = tol;
    for (int s = 1; s <= seeds; ++s) c.max_err = std::max(c.max_err, body(static_cast<std::uint64_t>(s)));
    c.pass = c.max_err <= tol;
    return c;
}

}  // namespace

std::vector<GradCheck> run_gradcheck_suite(bool thorough) {
    std::vector<GradCheck> out;
    out.push_back(run_one("conv3d", 20, 1e-4, check_conv3d));
    out.push_back(run_one("leaky_relu", 20, 1e-4, check_leaky));
    out.push_back(run_one("maxpool3d", 20, 1e-4, check_maxpool));
    out.push_back(run_one("upsample_nn", 20, 1e-4, check_upsample));
    out.push_back(run_one("warp_trilinear/field", 20, 1e-4, check_warp_field));
    out.push_back(run_one("warp_trilinear/source", 20, 1e-4, check_warp_source));
    out.push_back(run_one("loss_ncc", 20, 1e-4, check_ncc));
    out.push_back(run_one("loss_ssim", 20, 1e-4, check_ssim));
    out.push_back(run_one("loss_dice", 20, 1e-4, check_dice));
    out.push_back(run_one("loss_hd_approx", 20, 1e-4, check_hd));
    out.push_back(run_one("reg_smoothness", 20, 1e-4, check_smoothness));
    out.push_back(run_one("combine/logits", 20, 1e-6, check_combine));
    out.push_back(run_one("end_to_end/depth2", 20, 1e-3,
                          [](std::uint64_t s) { return check_end_to_end(s, 2, 3, 2, 8); }));
    if (thorough) {
        out.push_back(run_one("end_to_end/depth2_f4_8_16cube", 1, 1e-3,
                              [](std::uint64_t s) { return check_end_to_end(s, 4, 8, 4, 16); }));
    }
    return out;
}

bool gradcheck_all_passed(const std::vector<GradCheck>& checks) {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

std::string format_gradcheck(const std::vector<GradCheck>& checks) {
    std::ostringstream out;
    for (const auto& c : checks) {
        out << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  seeds=" << c.seeds
            << "  max_err=" << c.max_err << "  tol=" << c.tolerance << "\n";
    }
    return out.str();
}

}  // namespace ddreg
