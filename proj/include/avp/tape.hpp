#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avp/rng.hpp"
#include "avp/tensor.hpp"

namespace avp {

// Trainable parameter. Lives outside any tape; tapes bind to it per forward
// pass and backward() accumulates into grad.
struct Variable {
    Tensor value;
    Tensor grad;

    Variable() = default;
    explicit Variable(Tensor v) : value(std::move(v)), grad(Tensor(value.shape())) {}
    void zero_grad() { grad.fill(0.0); }
};

using NodeId = std::size_t;

// Records one forward pass of primitive applications; parents always precede
// children, so a single reverse sweep is a valid backpropagation order. A
// tape supports exactly one backward() per recording.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // -- leaves --------------------------------------------------------
    NodeId input(Tensor value);
    NodeId param(Variable& var);

    // -- primitives ----------------------------------------------------
    NodeId matmul(NodeId a, NodeId b);
    NodeId bias_add(NodeId x, NodeId bias);
    NodeId embedding_lookup(NodeId table, const std::vector<std::int32_t>& ids,
                            std::size_t batch, std::size_t length);
    NodeId conv1d_valid(NodeId signal, NodeId kernels);
    NodeId conv2d_valid(NodeId image, NodeId kernels);
    NodeId maxpool1d(NodeId x, std::size_t window, std::size_t stride);
    NodeId global_maxpool(NodeId x);
    NodeId concat(const std::vector<NodeId>& parts, std::size_t axis);
    NodeId relu(NodeId x);
    NodeId elu(NodeId x, double alpha = 1.0);
    NodeId sigmoid(NodeId x);
    NodeId dropout(NodeId x, double rate, Rng& rng, bool training);
    NodeId mask_time(NodeId seq, const std::vector<std::int32_t>& lengths);

    struct LstmOut {
        NodeId h;
        NodeId c;
    };
    // Gate order inside wx/wh/bias is [input | forget | cell | output].
    LstmOut lstm_cell(NodeId x, NodeId h_prev, NodeId c_prev, NodeId wx, NodeId wh, NodeId bias);

    // Unidirectional scan over B x L x I, zero initial state; returns B x L x H.
    NodeId lstm_scan(NodeId seq, NodeId wx, NodeId wh, NodeId bias);
    // Forward and reversed scans concatenated per timestep; returns B x L x 2H.
    NodeId bidirectional_scan(NodeId seq, NodeId wx_f, NodeId wh_f, NodeId b_f,
                              NodeId wx_b, NodeId wh_b, NodeId b_b);

    NodeId slice_cols(NodeId x, std::size_t from, std::size_t to);
    NodeId slice_time(NodeId seq, std::size_t t);
    NodeId stack_time(const std::vector<NodeId>& steps);

    NodeId sum(NodeId x);
    NodeId weighted_sum(NodeId x, Tensor weights);

    // Mean over all B x D cells of w(t) * (softplus(z) - t*z); w(t) is the
    // per-column positive or negative weight depending on the target bit.
    NodeId bce_with_logits_weighted(NodeId logits, const Tensor& targets,
                                    const std::vector<double>& pos_weight,
                                    const std::vector<double>& neg_weight);

    // -- execution -----------------------------------------------------
    void backward(NodeId loss, double seed = 1.0);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    std::size_t node_count() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    void set_label(NodeId id, std::string label) { nodes_[id].label = std::move(label); }
    const std::string& label(NodeId id) const { return nodes_[id].label; }

    // When on, every node's output is scanned and a non-finite value raises
    // Error("non-finite", ...) naming the primitive.
    void set_check_finite(bool on) { check_finite_ = on; }

private:
    struct Node {
        Tensor value;
        std::vector<NodeId> parents;
        std::function<void(Tape&, NodeId)> backprop;
        Variable* bound = nullptr;
        bool needs_grad = false;
        std::string label;
    };

    NodeId add_node(const char* op, Tensor value, std::vector<NodeId> parents,
                    std::function<void(Tape&, NodeId)> backprop);
    Tensor& grad_buffer(NodeId id);
    bool has_grad(NodeId id) const { return id < grads_.size() && !grads_[id].empty(); }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool consumed_ = false;
    bool check_finite_ = false;
};

namespace num {
// Numerically stable pieces shared with the evaluation path.
double sigmoid(double z);
double softplus(double z);
// Sum over all cells of w * (softplus(z) - t*z); weights indexed by column.
double weighted_bce_sum(const Tensor& logits, const Tensor& targets,
                        const std::vector<double>& pos_weight,
                        const std::vector<double>& neg_weight);
} // namespace num

} // namespace avp
