#pragma once

#include <cstdint>
#include <vector>

#include "avp/tape.hpp"

namespace avp {

// Per-parameter Adam moments plus the shared step counter.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One bias-corrected update of a single parameter array. `m` and `v` must be
// the slots belonging to this parameter; `t` is the already-incremented step.
void adam_step(std::vector<double>& values, const std::vector<double>& grads,
               std::vector<double>& m, std::vector<double>& v, std::uint64_t t,
               double lr, double beta1, double beta2, double epsilon);

class Adam {
public:
    Adam(std::vector<Variable*> params, double lr);

    void step();
    void zero_grad();
    std::uint64_t steps() const { return state_.t; }
    AdamState& state() { return state_; }

private:
    std::vector<Variable*> params_;
    AdamState state_;
    double lr_;
};

} // namespace avp
