#include "ddreg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "ddreg/threading.hpp"

namespace ddreg::ad {

NodePtr make_node(const Shape& shape, const char* op) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value.assign(shape.numel(), 0.0);
    n->op = op;
    return n;
}

NodePtr leaf(const Shape& shape, const std::vector<double>& values, bool requires_grad, const char* op) {
    if (static_cast<std::int64_t>(values.size()) != shape.numel())
        throw ShapeError("leaf: value count does not match shape");
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = values;
    n->requires_grad = requires_grad;
    n->op = op;
    return n;
}

NodePtr constant(const Shape& shape, std::vector<double> values, const char* op) {
    if (static_cast<std::int64_t>(values.size()) != shape.numel())
        throw ShapeError("constant: value count does not match shape");
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(values);
    n->op = op;
    return n;
}

void check_finite(const Node& n) {
    for (double v : n.value)
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value after op '") + n.op + "'");
}

void backward(const NodePtr& root) {
    if (root->value.size() != 1) throw ShapeError("backward: root must be scalar");

    // Iterative post-order DFS; parents precede children in `order`.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->requires_grad && !n->grad.empty()) n->backprop(*n);
    }
}

namespace {

bool needs_grad(std::initializer_list<const NodePtr*> parents) {
    for (const NodePtr* p : parents)
        if ((*p)->requires_grad) return true;
    return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv3d

namespace {

// One output row (fixed oc, z, y; x contiguous). Shared by forward and the
// input-gradient pass, which is a correlation with the flipped kernel.
inline void conv_row_accumulate(double* out_row, const double* in_row, double w0, double w1, double w2, int nx) {
    // taps at x-1, x, x+1 with zero padding
    if (nx == 1) {
        out_row[0] += w1 * in_row[0];
        return;
    }
    out_row[0] += w1 * in_row[0] + w2 * in_row[1];
    for (int x = 1; x < nx - 1; ++x)
        out_row[x] += w0 * in_row[x - 1] + w1 * in_row[x] + w2 * in_row[x + 1];
    out_row[nx - 1] += w0 * in_row[nx - 2] + w1 * in_row[nx - 1];
}

}  // namespace

NodePtr conv3d(const NodePtr& x, const NodePtr& kernel, const NodePtr& bias) {
    const Shape& xs = x->shape;
    const Shape& ks = kernel->shape;
    if (xs.n != 1) throw ShapeError("conv3d: batch must be 1");
    if (ks.x != 3 || ks.y != 3 || ks.z != 3) throw ShapeError("conv3d: kernel must be 3x3x3");
    if (ks.c != xs.c)
        throw ShapeError("conv3d: kernel expects " + std::to_string(ks.c) + " input channels, got " +
                         std::to_string(xs.c));
    const int out_c = ks.n;
    if (bias->shape.numel() != out_c) throw ShapeError("conv3d: bias size must equal output channels");

    Shape os = xs;
    os.c = out_c;
    auto out = make_node(os, "conv3d");
    out->parents = {x, kernel, bias};
    out->requires_grad = needs_grad({&x, &kernel, &bias});

    const int nx = xs.x, ny = xs.y, nz = xs.z, in_c = xs.c;
    const std::int64_t plane = static_cast<std::int64_t>(nx) * ny;
    const std::int64_t chan = plane * nz;
    const double* in = x->value.data();
    const double* kw = kernel->value.data();
    const double* bv = bias->value.data();
    double* ov = out->value.data();

    parallel_for(static_cast<std::int64_t>(out_c) * nz, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t) {
            int oc = static_cast<int>(t / nz);
            int z = static_cast<int>(t % nz);
            for (int y = 0; y < ny; ++y) {
                double* out_row = ov + oc * chan + z * plane + y * nx;
                for (int xx = 0; xx < nx; ++xx) out_row[xx] = bv[oc];
                for (int ic = 0; ic < in_c; ++ic) {
                    const double* kbase = kw + ((static_cast<std::int64_t>(oc) * in_c + ic) * 27);
                    for (int dz = -1; dz <= 1; ++dz) {
                        int zz = z + dz;
                        if (zz < 0 || zz >= nz) continue;
                        for (int dy = -1; dy <= 1; ++dy) {
                            int yy = y + dy;
                            if (yy < 0 || yy >= ny) continue;
                            const double* k3 = kbase + ((dz + 1) * 3 + (dy + 1)) * 3;
                            const double* in_row = in + ic * chan + zz * plane + yy * nx;
                            conv_row_accumulate(out_row, in_row, k3[0], k3[1], k3[2], nx);
                        }
                    }
                }
            }
        }
    });
    check_finite(*out);

    std::weak_ptr<Node> wx = x, wk = kernel, wb = bias;
    out->backprop = [wx, wk, wb, nx, ny, nz, in_c, out_c, plane, chan](Node& self) {
        auto xp = wx.lock();
        auto kp = wk.lock();
        auto bp = wb.lock();
        const double* up = self.grad.data();
        const double* kw = kp->value.data();

        if (bp->requires_grad) {
            bp->ensure_grad();
            for (int oc = 0; oc < out_c; ++oc) {
                double s = 0;
                const double* u = up + oc * chan;
                for (std::int64_t i = 0; i < chan; ++i) s += u[i];
                bp->grad[oc] += s;
            }
        }

        if (xp->requires_grad) {
            xp->ensure_grad();
            double* gx = xp->grad.data();
            // dL/dx[ic] = sum_oc corr(up[oc], flip(k[oc][ic])); row taps swap.
            parallel_for(static_cast<std::int64_t>(in_c) * nz, [&](std::int64_t b, std::int64_t e) {
                for (std::int64_t t = b; t < e; ++t) {
                    int ic = static_cast<int>(t / nz);
                    int z = static_cast<int>(t % nz);
                    for (int y = 0; y < ny; ++y) {
                        double* grow = gx + ic * chan + z * plane + y * nx;
                        for (int oc = 0; oc < out_c; ++oc) {
                            const double* kbase = kw + ((static_cast<std::int64_t>(oc) * in_c + ic) * 27);
                            for (int dz = -1; dz <= 1; ++dz) {
                                int zz = z - dz;
                                if (zz < 0 || zz >= nz) continue;
                                for (int dy = -1; dy <= 1; ++dy) {
                                    int yy = y - dy;
                                    if (yy < 0 || yy >= ny) continue;
                                    const double* k3 = kbase + ((dz + 1) * 3 + (dy + 1)) * 3;
                                    const double* up_row = up + oc * chan + zz * plane + yy * nx;
                                    // out[p] += k[d]*in[p+d]  =>  gin[q] += k[d]*up[q-d]
                                    conv_row_accumulate(grow, up_row, k3[2], k3[1], k3[0], nx);
                                }
                            }
                        }
                    }
                }
            });
        }

        if (kp->requires_grad) {
            kp->ensure_grad();
            const double* in = xp->value.data();
            double* gk = kp->grad.data();
            // One thread owns all 27 taps of an (oc, ic) pair.
            parallel_for(static_cast<std::int64_t>(out_c) * in_c, [&](std::int64_t b, std::int64_t e) {
                for (std::int64_t t = b; t < e; ++t) {
                    int oc = static_cast<int>(t / in_c);
                    int ic = static_cast<int>(t % in_c);
                    double acc[27] = {};
                    for (int z = 0; z < nz; ++z) {
                        for (int dz = -1; dz <= 1; ++dz) {
                            int zz = z + dz;
                            if (zz < 0 || zz >= nz) continue;
                            for (int y = 0; y < ny; ++y) {
                                for (int dy = -1; dy <= 1; ++dy) {
                                    int yy = y + dy;
                                    if (yy < 0 || yy >= ny) continue;
                                    const double* up_row = up + oc * chan + z * plane + y * nx;
                                    const double* in_row = in + ic * chan + zz * plane + yy * nx;
                                    double s0 = 0, s1 = 0, s2 = 0;
                                    for (int xx = 1; xx < nx - 1; ++xx) {
                                        double u = up_row[xx];
                                        s0 += u * in_row[xx - 1];
                                        s1 += u * in_row[xx];
                                        s2 += u * in_row[xx + 1];
                                    }
                                    // x boundaries (zero padding)
                                    s1 += up_row[0] * in_row[0];
                                    if (nx > 1) {
                                        s2 += up_row[0] * in_row[1];
                                        s0 += up_row[nx - 1] * in_row[nx - 2];
                                        s1 += up_row[nx - 1] * in_row[nx - 1];
                                    }
                                    int base = ((dz + 1) * 3 + (dy + 1)) * 3;
                                    acc[base + 0] += s0;
                                    acc[base + 1] += s1;
                                    acc[base + 2] += s2;
                                }
                            }
                        }
                    }
                    double* dst = gk + (static_cast<std::int64_t>(oc) * in_c + ic) * 27;
                    for (int i = 0; i < 27; ++i) dst[i] += acc[i];
                }
            });
        }
    };
    return out;
}

// ---------------------------------------------------------------------------

NodePtr leaky_relu(const NodePtr& x, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) throw ValidationError("leaky_relu: slope must be in (0,1)");
    auto out = make_node(x->shape, "leaky_relu");
    out->parents = {x};
    out->requires_grad = x->requires_grad;
    const std::int64_t n = x->shape.numel();
    const double* in = x->value.data();
    double* ov = out->value.data();
    parallel_for(n, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i) ov[i] = in[i] >= 0 ? in[i] : slope * in[i];
    });
    check_finite(*out);

    std::weak_ptr<Node> wx = x;
    out->backprop = [wx, slope](Node& self) {
        auto xp = wx.lock();
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        const double* in = xp->value.data();
        const double* up = self.grad.data();
        double* gx = xp->grad.data();
        const std::int64_t n = self.shape.numel();
        parallel_for(n, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) gx[i] += up[i] * (in[i] >= 0 ? 1.0 : slope);
        });
    };
    return out;
}

NodePtr maxpool3d(const NodePtr& x) {
    const Shape& xs = x->shape;
    if (xs.x % 2 || xs.y % 2 || xs.z % 2)
        throw ShapeError("maxpool3d: spatial dims must be even");
    Shape os = xs;
    os.x /= 2;
    os.y /= 2;
    os.z /= 2;
    auto out = make_node(os, "maxpool3d");
    out->parents = {x};
    out->requires_grad = x->requires_grad;

    const std::int64_t in_plane = static_cast<std::int64_t>(xs.x) * xs.y;
    const std::int64_t in_chan = in_plane * xs.z;
    const std::int64_t out_n = out->value.size();
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out_n);
    const double* in = x->value.data();
    double* ov = out->value.data();
    std::int64_t* am = argmax->data();

    parallel_for(out_n, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t idx = b; idx < e; ++idx) {
            std::int64_t r = idx;
            int ox = static_cast<int>(r % os.x); r /= os.x;
            int oy = static_cast<int>(r % os.y); r /= os.y;
            int oz = static_cast<int>(r % os.z); r /= os.z;
            int c = static_cast<int>(r);
            double best = -std::numeric_limits<double>::infinity();
            std::int64_t best_at = -1;
            for (int dz = 0; dz < 2; ++dz)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        std::int64_t p = c * in_chan + (2 * oz + dz) * in_plane +
                                         (2 * oy + dy) * static_cast<std::int64_t>(xs.x) + (2 * ox + dx);
                        if (in[p] > best) {
                            best = in[p];
                            best_at = p;
                        }
                    }
            ov[idx] = best;
            am[idx] = best_at;
        }
    });
    check_finite(*out);

    std::weak_ptr<Node> wx = x;
    out->backprop = [wx, argmax](Node& self) {
        auto xp = wx.lock();
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        const double* up = self.grad.data();
        double* gx = xp->grad.data();
        const auto& am = *argmax;
        // windows are disjoint, so scatter writes never collide
        parallel_for(static_cast<std::int64_t>(am.size()), [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) gx[am[i]] += up[i];
        });
    };
    return out;
}

NodePtr upsample_nn(const NodePtr& x) {
    const Shape& xs = x->shape;
    Shape os = xs;
    os.x *= 2;
    os.y *= 2;
    os.z *= 2;
    auto out = make_node(os, "upsample_nn");
    out->parents = {x};
    out->requires_grad = x->requires_grad;

    const double* in = x->value.data();
    double* ov = out->value.data();
    parallel_for(out->shape.numel(), [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t idx = b; idx < e; ++idx) {
            std::int64_t r = idx;
            int ox = static_cast<int>(r % os.x); r /= os.x;
            int oy = static_cast<int>(r % os.y); r /= os.y;
            int oz = static_cast<int>(r % os.z); r /= os.z;
            std::int64_t c = r;
            std::int64_t src = ((c * xs.z + oz / 2) * xs.y + oy / 2) * xs.x + ox / 2;
            ov[idx] = in[src];
        }
    });
    check_finite(*out);

    std::weak_ptr<Node> wx = x;
    out->backprop = [wx, os, xs](Node& self) {
        auto xp = wx.lock();
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        const double* up = self.grad.data();
        double* gx = xp->grad.data();
        parallel_for(xs.numel(), [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t idx = b; idx < e; ++idx) {
                std::int64_t r = idx;
                int ix = static_cast<int>(r % xs.x); r /= xs.x;
                int iy = static_cast<int>(r % xs.y); r /= xs.y;
                int iz = static_cast<int>(r % xs.z); r /= xs.z;
                std::int64_t c = r;
                double s = 0;
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            std::int64_t p = ((c * os.z + 2 * iz + dz) * os.y + 2 * iy + dy) * os.x +
                                             2 * ix + dx;
                            s += up[p];
                        }
                gx[idx] += s;
            }
        });
    };
    return out;
}

NodePtr weighted_sum(const NodePtr& x, const std::vector<double>& coeffs) {
    if (coeffs.size() != x->value.size())
        throw ShapeError("weighted_sum: coefficient count does not match tensor");
    auto out = make_node(Shape{1, 1, 1, 1, 1}, "weighted_sum");
    out->parents = {x};
    out->requires_grad = x->requires_grad;
    double s = 0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) s += x->value[i] * coeffs[i];
    out->value[0] = s;
    check_finite(*out);

    auto c = std::make_shared<std::vector<double>>(coeffs);
    out->backprop = [c](Node& self) {
        auto xp = self.parents[0];
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        double up = self.grad[0];
        for (std::size_t i = 0; i < c->size(); ++i) xp->grad[i] += up * (*c)[i];
    };
    return out;
}

NodePtr concat_channels(const NodePtr& a, const NodePtr& b) {
    const Shape& as = a->shape;
    const Shape& bs = b->shape;
    if (as.x != bs.x || as.y != bs.y || as.z != bs.z || as.n != bs.n)
        throw ShapeError("concat_channels: spatial dims differ");
    Shape os = as;
    os.c = as.c + bs.c;
    auto out = make_node(os, "concat");
    out->parents = {a, b};
    out->requires_grad = a->requires_grad || b->requires_grad;

    std::copy(a->value.begin(), a->value.end(), out->value.begin());
    std::copy(b->value.begin(), b->value.end(), out->value.begin() + a->value.size());

    std::weak_ptr<Node> wa = a, wb = b;
    out->backprop = [wa, wb](Node& self) {
        auto ap = wa.lock();
        auto bp = wb.lock();
        std::size_t na = ap->value.size();
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::size_t i = 0; i < na; ++i) ap->grad[i] += self.grad[i];
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::size_t i = 0; i < bp->value.size(); ++i) bp->grad[i] += self.grad[na + i];
        }
    };
    return out;
}

}  // namespace ddreg::ad
