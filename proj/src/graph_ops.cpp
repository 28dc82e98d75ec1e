#include "ddreg/graph_ops.hpp"

#include <cmath>

namespace ddreg::ad {

namespace {

DisplacementField node_to_field(const Node& phi, const Grid& grid) {
    if (phi.shape.c != 3 || phi.shape.spatial() != grid.voxel_count())
        throw ShapeError("node_to_field: node is not a 3-channel field of the grid size");
    DisplacementField f(grid);
    const std::int64_t v = grid.voxel_count();
    for (std::int64_t i = 0; i < v; ++i)
        f.vectors[i] = {phi.value[i], phi.value[v + i], phi.value[2 * v + i]};
    return f;
}

void scatter_field_grad(const DisplacementField& grad_f, Node& phi) {
    phi.ensure_grad();
    const std::int64_t v = grad_f.grid.voxel_count();
    for (std::int64_t i = 0; i < v; ++i) {
        phi.grad[i] += grad_f.vectors[i].x;
        phi.grad[v + i] += grad_f.vectors[i].y;
        phi.grad[2 * v + i] += grad_f.vectors[i].z;
    }
}

}  // namespace

NodePtr warp_volume_node(const Volume& moving, const NodePtr& phi, const Grid& grid) {
    auto field = std::make_shared<DisplacementField>(node_to_field(*phi, grid));
    auto source = std::make_shared<Volume>(moving);

    Shape os{1, 1, grid.shape[0], grid.shape[1], grid.shape[2]};
    auto out = make_node(os, "warp");
    out->parents = {phi};
    out->requires_grad = phi->requires_grad;
    out->value = warp_trilinear(*source, *field).data;
    check_finite(*out);

    out->backprop = [source, field, grid](Node& self) {
        auto phi = self.parents[0];
        if (!phi->requires_grad) return;
        Volume upstream;
        upstream.grid = grid;
        upstream.data = self.grad;
        Volume grad_v;
        DisplacementField grad_f;
        warp_backward(*source, *field, upstream, grad_v, grad_f);
        scatter_field_grad(grad_f, *phi);
    };
    return out;
}

NodePtr warp_onehot_node(const OneHotStack& moving_onehot, const NodePtr& phi) {
    const Grid grid = moving_onehot.grid;
    auto field = std::make_shared<DisplacementField>(node_to_field(*phi, grid));
    auto source = std::make_shared<OneHotStack>(moving_onehot);

    const int c = static_cast<int>(moving_onehot.channels.size());
    Shape os{1, std::max(c, 1), grid.shape[0], grid.shape[1], grid.shape[2]};
    if (c == 0) throw ValidationError("warp_onehot_node: stack has no channels");
    auto out = make_node(os, "warp_onehot");
    out->parents = {phi};
    out->requires_grad = phi->requires_grad;

    const std::int64_t v = grid.voxel_count();
    for (int ch = 0; ch < c; ++ch) {
        Volume chan;
        chan.grid = grid;
        chan.data = source->channels[ch];
        Volume warped = warp_trilinear(chan, *field);
        std::copy(warped.data.begin(), warped.data.end(), out->value.begin() + ch * v);
    }
    check_finite(*out);

    out->backprop = [source, field, grid, c, v](Node& self) {
        auto phi = self.parents[0];
        if (!phi->requires_grad) return;
        for (int ch = 0; ch < c; ++ch) {
            Volume chan;
            chan.grid = grid;
            chan.data = source->channels[ch];
            Volume upstream;
            upstream.grid = grid;
            upstream.data.assign(self.grad.begin() + ch * v, self.grad.begin() + (ch + 1) * v);
            Volume grad_v;
            DisplacementField grad_f;
            warp_backward(chan, *field, upstream, grad_v, grad_f);
            scatter_field_grad(grad_f, *phi);
        }
    };
    return out;
}

namespace {

NodePtr scalar_loss_node(const NodePtr& pred, const Volume& fixed, const char* op,
                         LossResult (*fn)(const Volume&, const Volume&, bool)) {
    Volume pred_vol;
    pred_vol.grid = fixed.grid;
    pred_vol.data = pred->value;
    auto cached = std::make_shared<LossResult>(fn(pred_vol, fixed, pred->requires_grad));

    auto out = make_node(Shape{1, 1, 1, 1, 1}, op);
    out->parents = {pred};
    out->requires_grad = pred->requires_grad;
    out->value[0] = cached->value;
    check_finite(*out);

    out->backprop = [cached](Node& self) {
        auto pred = self.parents[0];
        if (!pred->requires_grad) return;
        pred->ensure_grad();
        double up = self.grad[0];
        for (std::size_t i = 0; i < cached->grad.size(); ++i) pred->grad[i] += up * cached->grad[i];
    };
    return out;
}

OneHotStack stack_from_node(const Node& node, const Grid& grid, const std::vector<std::uint8_t>& labels) {
    OneHotStack s;
    s.grid = grid;
    s.channel_labels = labels;
    const std::int64_t v = grid.voxel_count();
    if (node.shape.c != static_cast<int>(labels.size()) || node.shape.spatial() != v)
        throw ShapeError("stack_from_node: node shape does not match label stack");
    s.channels.resize(labels.size());
    for (std::size_t c = 0; c < labels.size(); ++c)
        s.channels[c].assign(node.value.begin() + c * v, node.value.begin() + (c + 1) * v);
    return s;
}

NodePtr channel_loss_node(const NodePtr& pred_stack, const char* op,
                          const std::function<ChannelLossResult(const OneHotStack&, bool)>& fn,
                          const Grid& grid, const std::vector<std::uint8_t>& labels) {
    OneHotStack pred = stack_from_node(*pred_stack, grid, labels);
    auto cached = std::make_shared<ChannelLossResult>(fn(pred, pred_stack->requires_grad));

    auto out = make_node(Shape{1, 1, 1, 1, 1}, op);
    out->parents = {pred_stack};
    out->requires_grad = pred_stack->requires_grad;
    out->value[0] = cached->value;
    check_finite(*out);

    const std::int64_t v = grid.voxel_count();
    out->backprop = [cached, v](Node& self) {
        auto pred = self.parents[0];
        if (!pred->requires_grad) return;
        pred->ensure_grad();
        double up = self.grad[0];
        for (std::size_t c = 0; c < cached->grad.size(); ++c) {
            const auto& g = cached->grad[c];
            if (g.empty()) continue;
            for (std::int64_t i = 0; i < v; ++i) pred->grad[c * v + i] += up * g[i];
        }
    };
    return out;
}

}  // namespace

NodePtr ncc_loss_node(const NodePtr& pred, const Volume& fixed) {
    return scalar_loss_node(pred, fixed, "loss_ncc", &loss_ncc);
}

NodePtr ssim_loss_node(const NodePtr& pred, const Volume& fixed) {
    return scalar_loss_node(pred, fixed, "loss_ssim", &loss_ssim);
}

NodePtr dice_loss_node(const NodePtr& pred_stack, const OneHotStack& fixed_onehot) {
    auto fixed = std::make_shared<OneHotStack>(fixed_onehot);
    return channel_loss_node(
        pred_stack, "loss_dsc",
        [fixed](const OneHotStack& pred, bool g) { return loss_dice(pred, *fixed, g); },
        fixed_onehot.grid, fixed_onehot.channel_labels);
}

NodePtr hd_loss_node(const NodePtr& pred_stack, const std::vector<Volume>& dt_fixed,
                     const std::vector<std::uint8_t>& dt_labels,
                     const std::vector<std::uint8_t>& channel_labels) {
    if (dt_fixed.empty()) throw ValidationError("hd_loss_node: no distance maps");
    auto dts = std::make_shared<std::vector<Volume>>(dt_fixed);
    auto dtl = std::make_shared<std::vector<std::uint8_t>>(dt_labels);
    return channel_loss_node(
        pred_stack, "loss_hd",
        [dts, dtl](const OneHotStack& pred, bool g) { return loss_hd_approx(pred, *dts, *dtl, g); },
        dt_fixed.front().grid, channel_labels);
}

NodePtr smoothness_node(const NodePtr& phi, const Grid& grid) {
    auto field = std::make_shared<DisplacementField>(node_to_field(*phi, grid));
    auto cached = std::make_shared<FieldLossResult>(reg_smoothness(*field, phi->requires_grad));

    auto out = make_node(Shape{1, 1, 1, 1, 1}, "reg_smoothness");
    out->parents = {phi};
    out->requires_grad = phi->requires_grad;
    out->value[0] = cached->value;
    check_finite(*out);

    out->backprop = [cached, grid](Node& self) {
        auto phi = self.parents[0];
        if (!phi->requires_grad) return;
        phi->ensure_grad();
        double up = self.grad[0];
        const std::int64_t v = grid.voxel_count();
        for (std::int64_t i = 0; i < v; ++i) {
            phi->grad[i] += up * cached->grad[i].x;
            phi->grad[v + i] += up * cached->grad[i].y;
            phi->grad[2 * v + i] += up * cached->grad[i].z;
        }
    };
    return out;
}

NodePtr combine_node(const std::vector<NodePtr>& terms, const NodePtr& logits) {
    const std::size_t n = terms.size();
    if (logits->value.size() != n)
        throw ValidationError("combine_node: logit count does not match term count");
    for (std::size_t i = 0; i < n; ++i) {
        if (terms[i]->value.size() != 1) throw ShapeError("combine_node: terms must be scalar");
        if (!std::isfinite(terms[i]->value[0]))
            throw NumericError(std::string("combine_node: non-finite term '") + terms[i]->op + "'");
    }

    // softmax over logits
    double mx = logits->value[0];
    for (double l : logits->value) mx = std::max(mx, l);
    auto w = std::make_shared<std::vector<double>>(n);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        (*w)[i] = std::exp(logits->value[i] - mx);
        sum += (*w)[i];
    }
    for (auto& x : *w) x /= sum;

    auto out = make_node(Shape{1, 1, 1, 1, 1}, "combine");
    out->parents = terms;
    out->parents.push_back(logits);
    out->requires_grad = logits->requires_grad;
    for (const auto& t : terms) out->requires_grad = out->requires_grad || t->requires_grad;
    double value = 0;
    for (std::size_t i = 0; i < n; ++i) value += (*w)[i] * terms[i]->value[0];
    out->value[0] = value;
    check_finite(*out);

    out->backprop = [w, n, value](Node& self) {
        double up = self.grad[0];
        for (std::size_t i = 0; i < n; ++i) {
            auto& term = self.parents[i];
            if (term->requires_grad) {
                term->ensure_grad();
                term->grad[0] += up * (*w)[i];
            }
        }
        auto& logits = self.parents[n];
        if (logits->requires_grad) {
            logits->ensure_grad();
            for (std::size_t k = 0; k < n; ++k)
                logits->grad[k] += up * (*w)[k] * (self.parents[k]->value[0] - value);
        }
    };
    return out;
}

}  // namespace ddreg::ad
