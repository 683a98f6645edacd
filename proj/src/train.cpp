#include "avp/train.hpp"

#include <cmath>

#include "avp/errors.hpp"
#include "avp/optim.hpp"

namespace avp {

namespace {

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    void add(bool predicted, bool actual) {
        if (predicted && actual) ++tp;
        else if (predicted && !actual) ++fp;
        else if (!predicted && actual) ++fn;
        else ++tn;
    }

    std::size_t total() const { return tp + fp + fn + tn; }

    void fill(MetricsSnapshot& m) const {
        m.accuracy = total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : 0.0;
        m.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        m.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
    }
};

EncodedBatch encode_slice(Model& model, const std::vector<LabeledExample>& examples,
                          const std::vector<std::size_t>& order, std::size_t first,
                          std::size_t count) {
    std::vector<std::string_view> seqs;
    seqs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) seqs.push_back(examples[order[first + i]].residues);
    return model.encode(seqs);
}

Tensor targets_slice(const std::vector<LabeledExample>& examples,
                     const std::vector<std::size_t>& order, std::size_t first, std::size_t count,
                     std::size_t dim) {
    Tensor targets({count, dim});
    for (std::size_t i = 0; i < count; ++i) {
        const auto& labels = *examples[order[first + i]].labels;
        if (labels.size() != dim)
            fail("shape-mismatch", "label vector length " + std::to_string(labels.size()) +
                                       " does not match model output width " + std::to_string(dim));
        for (std::size_t d = 0; d < dim; ++d) targets.at(i, d) = labels[d];
    }
    return targets;
}

std::vector<std::size_t> identity_order(std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    return order;
}

} // namespace

AggregateStat mean_ci95(const std::vector<double>& values) {
    AggregateStat stat;
    const std::size_t n = values.size();
    if (n == 0) {
        stat.half_width = std::numeric_limits<double>::quiet_NaN();
        return stat;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    stat.mean = sum / static_cast<double>(n);
    if (n < 2) {
        stat.half_width = std::numeric_limits<double>::quiet_NaN();
        return stat;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - stat.mean) * (v - stat.mean);
    const double sample_sd = std::sqrt(ss / static_cast<double>(n - 1));
    stat.half_width = 1.96 * sample_sd / std::sqrt(static_cast<double>(n));
    return stat;
}

std::vector<MetricsSnapshot> train_model(
    Model& model, const std::vector<LabeledExample>& train_set,
    const std::vector<LabeledExample>& eval_set, const ClassWeights& weights,
    const TrainConfig& config, const std::function<void(const MetricsSnapshot&)>& on_snapshot) {
    if (train_set.empty()) fail("empty-dataset", "training set is empty");
    if (config.batch_size == 0 || config.epochs == 0)
        fail("bad-config", "epochs and batch size must be positive");
    if (weights.positive.size() != model.out_dim() || weights.negative.size() != model.out_dim())
        fail("shape-mismatch", "class weight length does not match model output width");

    const std::size_t dim = model.out_dim();
    Adam optimizer(model.parameters(), config.lr);
    Rng run_rng(config.seed);

    std::vector<MetricsSnapshot> series;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order = identity_order(train_set.size());
        Rng epoch_rng = run_rng.stream("epoch-" + std::to_string(epoch));
        epoch_rng.shuffle(order);
        Rng dropout_rng = run_rng.stream("dropout-" + std::to_string(epoch));

        Confusion confusion;
        double loss_sum = 0.0; // weighted loss, accumulated per cell
        std::size_t cells = 0;

        for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - first);
            const EncodedBatch batch = encode_slice(model, train_set, order, first, count);
            const Tensor targets = targets_slice(train_set, order, first, count, dim);

            Tape tape;
            const NodeId logits =
                model.forward(tape, batch, /*training=*/true, &dropout_rng);
            const NodeId loss =
                tape.bce_with_logits_weighted(logits, targets, weights.positive, weights.negative);
            const double loss_value = tape.value(loss).scalar_value();
            if (!std::isfinite(loss_value))
                fail("divergence", "training loss became non-finite at epoch " +
                                       std::to_string(epoch) + "; lower the learning rate");

            const Tensor& z = tape.value(logits);
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t d = 0; d < dim; ++d)
                    confusion.add(num::sigmoid(z.at(i, d)) >= config.metrics_threshold,
                                  targets.at(i, d) == 1.0);
            loss_sum += loss_value * static_cast<double>(count * dim);
            cells += count * dim;

            optimizer.zero_grad();
            tape.backward(loss);
            optimizer.step();
        }

        MetricsSnapshot train_snap;
        train_snap.side = "train";
        train_snap.epoch = epoch;
        confusion.fill(train_snap);
        train_snap.loss = cells ? loss_sum / static_cast<double>(cells) : 0.0;
        series.push_back(train_snap);
        if (on_snapshot) on_snapshot(train_snap);

        if (!eval_set.empty()) {
            MetricsSnapshot eval_snap = evaluate_model(model, eval_set, config.metrics_threshold,
                                                       config.batch_size, epoch);
            series.push_back(eval_snap);
            if (on_snapshot) on_snapshot(eval_snap);
        }
    }
    return series;
}

MetricsSnapshot evaluate_model(Model& model, const std::vector<LabeledExample>& examples,
                               double threshold, std::size_t batch_size, std::size_t epoch) {
    if (examples.empty()) fail("empty-dataset", "evaluate needs at least one example");
    if (threshold <= 0.0 || threshold >= 1.0)
        fail("bad-config", "decision threshold must be in (0, 1)");

    const std::size_t dim = model.out_dim();
    const std::vector<double> unit(dim, 1.0);
    const std::vector<std::size_t> order = identity_order(examples.size());

    Confusion confusion;
    double loss_sum = 0.0;
    std::size_t cells = 0;
    for (std::size_t first = 0; first < examples.size(); first += batch_size) {
        const std::size_t count = std::min(batch_size, examples.size() - first);
        const EncodedBatch batch = encode_slice(model, examples, order, first, count);
        const Tensor targets = targets_slice(examples, order, first, count, dim);

        Tape tape;
        const NodeId logits = model.forward(tape, batch);
        const Tensor& z = tape.value(logits);
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t d = 0; d < dim; ++d)
                confusion.add(num::sigmoid(z.at(i, d)) >= threshold, targets.at(i, d) == 1.0);
        loss_sum += num::weighted_bce_sum(z, targets, unit, unit);
        cells += count * dim;
    }

    MetricsSnapshot snap;
    snap.side = "validation";
    snap.epoch = epoch;
    confusion.fill(snap);
    snap.loss = loss_sum / static_cast<double>(cells);
    return snap;
}

Tensor predict_probabilities(Model& model, const std::vector<LabeledExample>& examples,
                             std::size_t batch_size) {
    if (examples.empty()) fail("empty-dataset", "predict needs at least one example");
    const std::size_t dim = model.out_dim();
    const std::vector<std::size_t> order = identity_order(examples.size());

    Tensor probs({examples.size(), dim});
    for (std::size_t first = 0; first < examples.size(); first += batch_size) {
        const std::size_t count = std::min(batch_size, examples.size() - first);
        const EncodedBatch batch = encode_slice(model, examples, order, first, count);
        Tape tape;
        const NodeId logits = model.forward(tape, batch);
        const Tensor& z = tape.value(logits);
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t d = 0; d < dim; ++d)
                probs.at(first + i, d) = num::sigmoid(z.at(i, d));
    }
    return probs;
}

RunAggregate aggregate_runs(const std::vector<MetricsSnapshot>& runs) {
    if (runs.size() < 2) fail("bad-config", "aggregation needs at least two runs");
    auto collect = [&](double MetricsSnapshot::*field) {
        std::vector<double> values;
        values.reserve(runs.size());
        for (const auto& r : runs) values.push_back(r.*field);
        return mean_ci95(values);
    };
    RunAggregate agg;
    agg.n = runs.size();
    agg.accuracy = collect(&MetricsSnapshot::accuracy);
    agg.precision = collect(&MetricsSnapshot::precision);
    agg.recall = collect(&MetricsSnapshot::recall);
    agg.f1 = collect(&MetricsSnapshot::f1);
    agg.loss = collect(&MetricsSnapshot::loss);
    return agg;
}

} // namespace avp
