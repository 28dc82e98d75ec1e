#include "ddreg/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ddreg {

std::vector<double> WeightState::weights() const {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> w(logits.size());
    double sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        w[i] = std::exp(logits[i] - mx);
        sum += w[i];
    }
    for (auto& x : w) x /= sum;
    return w;
}

WeightState init_weights(const std::vector<LossKind>& losses, int n_regs, double reg_weight) {
    if (losses.empty()) throw ValidationError("init_weights: need at least one loss term");
    if (n_regs < 0) throw ValidationError("init_weights: n_regs must be >= 0");
    if (n_regs > 0 && !(reg_weight > 0 && reg_weight < 1))
        throw ValidationError("init_weights: reg_weight must be in (0,1)");

    WeightState s;
    s.loss_kinds = losses;
    s.n_regs = n_regs;
    double loss_share = (n_regs > 0) ? (1.0 - reg_weight) / losses.size() : 1.0 / losses.size();
    double reg_share = (n_regs > 0) ? reg_weight / n_regs : 0.0;
    // softmax(log w) = w exactly when sum(w) = 1
    for (std::size_t i = 0; i < losses.size(); ++i) s.logits.push_back(std::log(loss_share));
    for (int j = 0; j < n_regs; ++j) s.logits.push_back(std::log(reg_share));
    return s;
}

CombineResult combine(const std::vector<double>& terms, const WeightState& state, bool with_grad) {
    if (static_cast<int>(terms.size()) != state.term_count())
        throw ValidationError("combine: term count does not match weight state");
    for (std::size_t i = 0; i < terms.size(); ++i)
        if (!std::isfinite(terms[i])) {
            std::string name = i < state.loss_kinds.size()
                                   ? loss_name(state.loss_kinds[i])
                                   : "reg" + std::to_string(i - state.loss_kinds.size());
            throw NumericError("combine: non-finite loss term '" + name + "'");
        }

    CombineResult r;
    std::vector<double> w = state.weights();
    for (std::size_t i = 0; i < terms.size(); ++i) r.value += w[i] * terms[i];
    if (with_grad) {
        r.dterms = w;
        r.dlogits.resize(terms.size());
        for (std::size_t k = 0; k < terms.size(); ++k)
            r.dlogits[k] = w[k] * (terms[k] - r.value);
    }
    return r;
}

void record_weights(const WeightState& state, int epoch, WeightHistory& history) {
    history.rows.push_back({epoch, state.weights()});
}

std::string WeightHistory::to_csv(const WeightState& state) const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,w_ncc,w_ssim,w_dsc,w_hd,lambda_reg\n";
    const LossKind order[4] = {LossKind::NCC, LossKind::SSIM, LossKind::DSC, LossKind::HD};
    for (const auto& row : rows) {
        out << row.epoch;
        for (LossKind k : order) {
            double w = 0;
            for (std::size_t i = 0; i < state.loss_kinds.size(); ++i)
                if (state.loss_kinds[i] == k) w = row.weights[i];
            out << "," << w;
        }
        double reg = 0;
        for (int j = 0; j < state.n_regs; ++j) reg += row.weights[state.loss_kinds.size() + j];
        out << "," << reg << "\n";
    }
    return out.str();
}

}  // namespace ddreg
