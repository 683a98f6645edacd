#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avp/dataset.hpp"
#include "avp/models.hpp"

namespace avp {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 128;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    double metrics_threshold = 0.5;
};

struct MetricsSnapshot {
    std::string side; // "train" or "validation"
    std::size_t epoch = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double loss = 0.0;
};

struct AggregateStat {
    double mean = 0.0;
    double half_width = 0.0; // NaN when n < 2
};

struct RunAggregate {
    std::size_t n = 0;
    AggregateStat accuracy, precision, recall, f1, loss;
};

// Mean and 95% normal-approximation half-width (1.96 * s / sqrt(n), sample
// standard deviation). half_width is NaN for fewer than two values.
AggregateStat mean_ci95(const std::vector<double>& values);

// Seeded-shuffle minibatch training with Adam and weighted BCE. Per epoch the
// train-side snapshot accumulates over the epoch's forward passes; the
// validation side is a full evaluate(). Aborts with Error("divergence") on a
// non-finite loss.
std::vector<MetricsSnapshot> train_model(
    Model& model, const std::vector<LabeledExample>& train_set,
    const std::vector<LabeledExample>& eval_set, const ClassWeights& weights,
    const TrainConfig& config,
    const std::function<void(const MetricsSnapshot&)>& on_snapshot = nullptr);

// Micro-averaged metrics over every (example, drug) cell at the decision
// threshold; loss is the unweighted BCE mean.
MetricsSnapshot evaluate_model(Model& model, const std::vector<LabeledExample>& examples,
                               double threshold, std::size_t batch_size, std::size_t epoch = 0);

// N x out_dim sigmoid probabilities.
Tensor predict_probabilities(Model& model, const std::vector<LabeledExample>& examples,
                             std::size_t batch_size);

// Mean and 95% half-width per metric over n >= 2 runs.
RunAggregate aggregate_runs(const std::vector<MetricsSnapshot>& runs);

} // namespace avp
