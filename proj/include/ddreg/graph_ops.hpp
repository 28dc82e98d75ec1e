#pragma once

#include "ddreg/graph.hpp"
#include "ddreg/losses.hpp"
#include "ddreg/warp.hpp"
#include "ddreg/weighting.hpp"

namespace ddreg::ad {

// Bridges between the volume domain and the tape. The moving image, one-hot
// stacks, and distance maps enter as constants; gradients flow only through
// the displacement-map node (1, 3, X, Y, Z, mm).

NodePtr warp_volume_node(const Volume& moving, const NodePtr& phi, const Grid& grid);

// Warps every channel of the (constant) stack; result is (1, C, X, Y, Z).
NodePtr warp_onehot_node(const OneHotStack& moving_onehot, const NodePtr& phi);

NodePtr ncc_loss_node(const NodePtr& pred, const Volume& fixed);
NodePtr ssim_loss_node(const NodePtr& pred, const Volume& fixed);
NodePtr dice_loss_node(const NodePtr& pred_stack, const OneHotStack& fixed_onehot);
NodePtr hd_loss_node(const NodePtr& pred_stack, const std::vector<Volume>& dt_fixed,
                     const std::vector<std::uint8_t>& dt_labels,
                     const std::vector<std::uint8_t>& channel_labels);
NodePtr smoothness_node(const NodePtr& phi, const Grid& grid);

// Softmax-weighted sum of scalar terms; logits is a (1, N+M) leaf.
NodePtr combine_node(const std::vector<NodePtr>& terms, const NodePtr& logits);

}  // namespace ddreg::ad
