#pragma once

#include <string>
#include <vector>

namespace ddreg {

// Central finite-difference verification of every differentiable op and of
// the whole training graph through a depth-2 net. Error metric per element:
// |analytic - fd| / max(1, |analytic| + |fd|).
struct GradCheck {
    std::string name;
    int seeds = 0;
    double max_err = 0;
    double tolerance = 0;
    bool pass = false;
};

// When thorough is true the suite also re-runs the end-to-end check on a
// depth-2 (4,8)-filter net at 16^3 input, perturbing every parameter.
std::vector<GradCheck> run_gradcheck_suite(bool thorough = true);

bool gradcheck_all_passed(const std::vector<GradCheck>& checks);
std::string format_gradcheck(const std::vector<GradCheck>& checks);

}  // namespace ddreg
