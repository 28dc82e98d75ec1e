#pragma once

#include <string>
#include <vector>

#include "ddreg/losses.hpp"

namespace ddreg {

// Learnable loss/regularizer weights on the joint open simplex: one logit
// per term, weights = softmax(logits), so sum(w) = 1 holds for any logit
// values. Frozen logits give the fixed-weight (baseline / segmentation-
// guided) designs; trainable logits give uncertainty weighting.
struct WeightState {
    std::vector<LossKind> loss_kinds;  // N loss terms, order fixed
    int n_regs = 0;                    // M regularizers, appended after losses
    std::vector<double> logits;        // size N + M
    bool trainable = false;

    int term_count() const { return static_cast<int>(loss_kinds.size()) + n_regs; }
    std::vector<double> weights() const;  // softmax(logits)
};

// Solves logits so each regularizer carries reg_weight/n_regs and the loss
// terms split the remainder equally. With n_regs = 0, losses split 1.
WeightState init_weights(const std::vector<LossKind>& losses, int n_regs, double reg_weight);

struct CombineResult {
    double value = 0;
    std::vector<double> dterms;   // dL/d(term i) = w_i
    std::vector<double> dlogits;  // dL/d(logit k) = w_k (term_k - L)
};

// Weighted sum of term values under the state's softmax weights.
CombineResult combine(const std::vector<double>& terms, const WeightState& state, bool with_grad = true);

// Weight evolution over training, exported as
// epoch,w_ncc,w_ssim,w_dsc,w_hd,lambda_reg (absent terms write 0).
struct WeightHistory {
    struct Row {
        int epoch;
        std::vector<double> weights;
    };
    std::vector<Row> rows;

    std::string to_csv(const WeightState& state) const;
};

void record_weights(const WeightState& state, int epoch, WeightHistory& history);

}  // namespace ddreg
