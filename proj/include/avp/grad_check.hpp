#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "avp/rng.hpp"
#include "avp/tape.hpp"

namespace avp {

struct GradCheckItem {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckItem> items;

    double max_rel_err() const;
    bool pass(double tolerance) const { return max_rel_err() < tolerance; }
};

// Compares analytic gradients against central finite differences.
//
// `loss` must rebuild the forward pass from the parameters' current values
// and return the scalar loss; it is called repeatedly with perturbed values.
// Analytic gradients are taken once from each Variable's grad after caller
// ran forward+backward (this helper does that itself via `loss_and_grads`).
class GradChecker {
public:
    explicit GradChecker(double step = 1e-5, std::size_t max_coords_per_tensor = 24)
        : step_(step), max_coords_(max_coords_per_tensor) {}

    // `compute` must zero grads, run forward+backward, and return the loss.
    GradCheckItem check(const std::string& name,
                        const std::vector<std::pair<std::string, Variable*>>& params,
                        const std::function<double()>& loss,
                        const std::function<double()>& compute, Rng& coord_rng) const;

private:
    double step_;
    std::size_t max_coords_;
};

// The standard suite: every tape primitive at toy shapes. Used by the CLI
// `grad-check` command and the acceptance tests. Model-level checks live in
// models.hpp (they need the builders).
GradCheckReport primitive_grad_checks(std::uint64_t seed);

} // namespace avp
