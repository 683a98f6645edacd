#include "avp/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace avp {

double GradCheckReport::max_rel_err() const {
    double worst = 0.0;
    for (const auto& item : items) worst = std::max(worst, item.max_rel_err);
    return worst;
}

GradCheckItem GradChecker::check(const std::string& name,
                                 const std::vector<std::pair<std::string, Variable*>>& params,
                                 const std::function<double()>& loss,
                                 const std::function<double()>& compute, Rng& coord_rng) const {
    GradCheckItem item;
    item.name = name;

    compute(); // analytic grads now sit in each Variable
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& [pname, var] : params) analytic.push_back(var->grad.values());

    for (std::size_t p = 0; p < params.size(); ++p) {
        Variable& var = *params[p].second;
        const std::size_t n = var.value.size();
        std::vector<std::size_t> coords;
        if (n <= max_coords_) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            coords = coord_rng.sample_indices(n, max_coords_);
        }
        for (std::size_t c : coords) {
            const double saved = var.value[c];
            var.value[c] = saved + step_;
            const double up = loss();
            var.value[c] = saved - step_;
            const double down = loss();
            var.value[c] = saved;
            const double fd = (up - down) / (2.0 * step_);
            const double a = analytic[p][c];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
            item.max_rel_err = std::max(item.max_rel_err, rel);
            ++item.coords_checked;
        }
    }
    return item;
}

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Keeps values away from the relu kink so central differences stay clean.
Tensor random_tensor_off_zero(const Shape& shape, Rng& rng) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double u = rng.uniform(-1.0, 1.0);
        t[i] = u < 0.0 ? u - 0.1 : u + 0.1;
    }
    return t;
}

// One primitive under test: owned parameters plus a builder from param nodes
// to the output node. Non-scalar outputs are probed with a fixed random
// weighting so every output coordinate contributes to the checked scalar.
struct OpCase {
    std::string name;
    std::vector<std::pair<std::string, Variable>> params;
    std::function<NodeId(Tape&, const std::vector<NodeId>&)> build;
};

GradCheckItem run_case(OpCase& op, const GradChecker& checker, Rng& rng) {
    std::vector<std::pair<std::string, Variable*>> param_ptrs;
    for (auto& [pname, var] : op.params) param_ptrs.emplace_back(pname, &var);

    Tensor probe;
    auto forward = [&](bool with_backward) -> double {
        Tape tape;
        std::vector<NodeId> ids;
        ids.reserve(op.params.size());
        for (auto& [pname, var] : op.params) ids.push_back(tape.param(var));
        NodeId out = op.build(tape, ids);
        NodeId scalar = out;
        if (!tape.value(out).is_scalar()) {
            if (probe.empty()) probe = random_tensor(tape.value(out).shape(), rng);
            scalar = tape.weighted_sum(out, probe);
        }
        const double v = tape.value(scalar).scalar_value();
        if (with_backward) tape.backward(scalar);
        return v;
    };
    auto loss = [&] { return forward(false); };
    auto compute = [&] {
        for (auto& [pname, var] : op.params) var.zero_grad();
        return forward(true);
    };

    Rng coord_rng = rng.stream("coords/" + op.name);
    return checker.check(op.name, param_ptrs, loss, compute, coord_rng);
}

} // namespace

GradCheckReport primitive_grad_checks(std::uint64_t seed) {
    Rng rng(seed);
    GradChecker checker;
    GradCheckReport report;

    std::vector<OpCase> cases;

    {
        OpCase op;
        op.name = "matmul";
        op.params.emplace_back("a", Variable(random_tensor({3, 4}, rng)));
        op.params.emplace_back("b", Variable(random_tensor({4, 5}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.matmul(p[0], p[1]); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "bias_add";
        op.params.emplace_back("x", Variable(random_tensor({2, 5}, rng)));
        op.params.emplace_back("b", Variable(random_tensor({5}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.bias_add(p[0], p[1]); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "embedding_lookup";
        op.params.emplace_back("table", Variable(random_tensor({7, 4}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) {
            return t.embedding_lookup(p[0], {2, 0, 3, 1, 6, 2}, 2, 3);
        };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "conv1d_valid";
        op.params.emplace_back("signal", Variable(random_tensor({2, 9, 3}, rng)));
        op.params.emplace_back("kernels", Variable(random_tensor({3, 3, 4}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.conv1d_valid(p[0], p[1]); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "conv2d_valid";
        op.params.emplace_back("image", Variable(random_tensor({2, 8, 6}, rng)));
        op.params.emplace_back("kernels", Variable(random_tensor({3, 3, 5}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.conv2d_valid(p[0], p[1]); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "maxpool1d";
        op.params.emplace_back("x", Variable(random_tensor({2, 9, 3}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.maxpool1d(p[0], 3, 2); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "global_maxpool";
        op.params.emplace_back("x", Variable(random_tensor({2, 7, 4}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.global_maxpool(p[0]); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "concat";
        op.params.emplace_back("a", Variable(random_tensor({2, 3}, rng)));
        op.params.emplace_back("b", Variable(random_tensor({2, 4}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.concat({p[0], p[1]}, 1); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "relu";
        op.params.emplace_back("x", Variable(random_tensor_off_zero({2, 6}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.relu(p[0]); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "elu";
        op.params.emplace_back("x", Variable(random_tensor_off_zero({2, 6}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.elu(p[0]); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "sigmoid";
        op.params.emplace_back("x", Variable(random_tensor({2, 6}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.sigmoid(p[0]); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "dropout";
        op.params.emplace_back("x", Variable(random_tensor({3, 8}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) {
            Rng mask_rng(991); // same mask on every evaluation
            return t.dropout(p[0], 0.4, mask_rng, true);
        };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "mask_time";
        op.params.emplace_back("x", Variable(random_tensor({2, 5, 3}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) {
            return t.mask_time(p[0], {3, 5});
        };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "slice_cols";
        op.params.emplace_back("x", Variable(random_tensor({3, 6}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.slice_cols(p[0], 1, 4); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "slice_stack_time";
        op.params.emplace_back("x", Variable(random_tensor({2, 5, 3}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) {
            return t.stack_time({t.slice_time(p[0], 2), t.slice_time(p[0], 0)});
        };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "lstm_cell";
        op.params.emplace_back("x", Variable(random_tensor({2, 3}, rng)));
        op.params.emplace_back("h", Variable(random_tensor({2, 4}, rng)));
        op.params.emplace_back("c", Variable(random_tensor({2, 4}, rng)));
        op.params.emplace_back("wx", Variable(random_tensor({3, 16}, rng)));
        op.params.emplace_back("wh", Variable(random_tensor({4, 16}, rng)));
        op.params.emplace_back("b", Variable(random_tensor({16}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) {
            Tape::LstmOut out = t.lstm_cell(p[0], p[1], p[2], p[3], p[4], p[5]);
            return t.concat({out.h, out.c}, 1);
        };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "bidirectional_scan";
        op.params.emplace_back("seq", Variable(random_tensor({2, 7, 3}, rng)));
        op.params.emplace_back("wx_f", Variable(random_tensor({3, 12}, rng)));
        op.params.emplace_back("wh_f", Variable(random_tensor({3, 12}, rng)));
        op.params.emplace_back("b_f", Variable(random_tensor({12}, rng)));
        op.params.emplace_back("wx_b", Variable(random_tensor({3, 12}, rng)));
        op.params.emplace_back("wh_b", Variable(random_tensor({3, 12}, rng)));
        op.params.emplace_back("b_b", Variable(random_tensor({12}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) {
            return t.bidirectional_scan(p[0], p[1], p[2], p[3], p[4], p[5], p[6]);
        };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "sum";
        op.params.emplace_back("x", Variable(random_tensor({3, 4}, rng)));
        op.build = [](Tape& t, const std::vector<NodeId>& p) { return t.sum(p[0]); };
        cases.push_back(std::move(op));
    }
    {
        OpCase op;
        op.name = "bce_with_logits_weighted";
        op.params.emplace_back("logits", Variable(random_tensor({3, 4}, rng, -2.0, 2.0)));
        Tensor targets({3, 4}, {1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 1, 1});
        op.build = [targets](Tape& t, const std::vector<NodeId>& p) {
            return t.bce_with_logits_weighted(p[0], targets, {1.5, 0.7, 2.0, 1.0},
                                              {0.5, 1.2, 0.9, 1.1});
        };
        cases.push_back(std::move(op));
    }

    for (OpCase& op : cases) report.items.push_back(run_case(op, checker, rng));
    return report;
}

} // namespace avp
