#include "avp/optim.hpp"

#include <cmath>

#include "avp/errors.hpp"

namespace avp {

void adam_step(std::vector<double>& values, const std::vector<double>& grads,
               std::vector<double>& m, std::vector<double>& v, std::uint64_t t,
               double lr, double beta1, double beta2, double epsilon) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        values[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon);
    }
}

Adam::Adam(std::vector<Variable*> params, double lr) : params_(std::move(params)), lr_(lr) {
    if (lr_ <= 0.0) fail("bad-config", "learning rate must be positive");
    state_.m.reserve(params_.size());
    state_.v.reserve(params_.size());
    for (const Variable* p : params_) {
        state_.m.emplace_back(p->value.size(), 0.0);
        state_.v.emplace_back(p->value.size(), 0.0);
    }
}

void Adam::step() {
    ++state_.t;
    for (std::size_t i = 0; i < params_.size(); ++i)
        adam_step(params_[i]->value.values(), params_[i]->grad.values(), state_.m[i],
                  state_.v[i], state_.t, lr_, state_.beta1, state_.beta2, state_.epsilon);
}

void Adam::zero_grad() {
    for (Variable* p : params_) p->zero_grad();
}

} // namespace avp
