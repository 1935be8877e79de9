#pragma once

// Finite-difference gradient verification, independent of the reverse-mode
// path it checks. Central differences are evaluated at two step sizes and
// Richardson-combined; coordinates where the two estimates disagree are
// sitting next to a kink (min ties, max(.,0), interpolation cell edges) and
// are skipped rather than compared.

#include "psir/autodiff.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace psir::test {

struct GradCheckReport {
    std::size_t checked = 0;
    std::size_t skipped = 0;
    double max_rel_err = 0.0;
    bool ok(double tol) const { return checked > 0 && max_rel_err < tol; }
};

// Builds the loss from parameter tensors on a fresh tape.
using LossBuilder = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

inline double forward_value(const LossBuilder& build, const std::vector<Tensor>& params) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    leaves.reserve(params.size());
    for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
    return build(tape, leaves).item();
}

inline GradCheckReport check_gradients(const LossBuilder& build, std::vector<Tensor> params,
                                       double h = 1e-4, double kink_tol = 5e-4) {
    // analytic gradients
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
    ad::Var loss = build(tape, leaves);
    tape.backward(loss);

    // Central differences of f cancel to roughly eps*|f|/h; differences below
    // a safety multiple of that floor carry no information about the gradient.
    const double noise_floor = 1e-9 * std::max(1.0, std::fabs(loss.item()));

    GradCheckReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (std::int64_t j = 0; j < params[pi].size(); ++j) {
            const double x0 = params[pi][j];
            auto eval_at = [&](double x) {
                params[pi][j] = x;
                double v = forward_value(build, params);
                params[pi][j] = x0;
                return v;
            };
            const double f1p = eval_at(x0 + h), f1m = eval_at(x0 - h);
            const double f2p = eval_at(x0 + h / 2), f2m = eval_at(x0 - h / 2);
            const double fd1 = (f1p - f1m) / (2 * h);
            const double fd2 = (f2p - f2m) / h;
            const double scale = std::max({std::fabs(fd1), std::fabs(fd2), 1.0});
            if (std::fabs(fd1 - fd2) > kink_tol * scale + noise_floor) {
                ++rep.skipped;
                continue;
            }
            const double fd = (4.0 * fd2 - fd1) / 3.0;  // Richardson, O(h^4)
            const double an = leaves[pi].grad()[j];
            ++rep.checked;
            if (std::fabs(an - fd) <= noise_floor) continue;
            const double rel = std::fabs(an - fd) / std::max(std::fabs(an), std::fabs(fd));
            rep.max_rel_err = std::max(rep.max_rel_err, rel);
        }
    }
    return rep;
}

} // namespace psir::test
