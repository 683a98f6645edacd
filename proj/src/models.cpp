#include "avp/models.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "avp/errors.hpp"

namespace avp {

namespace {

std::array<int, 256> build_index_table() {
    std::array<int, 256> table;
    table.fill(-1);
    for (std::size_t i = 0; i < Alphabet::symbols.size(); ++i)
        table[static_cast<unsigned char>(Alphabet::symbols[i])] = static_cast<int>(i);
    return table;
}

const std::array<int, 256>& index_table() {
    static const std::array<int, 256> table = build_index_table();
    return table;
}

} // namespace

int Alphabet::index_of(char c) { return index_table()[static_cast<unsigned char>(c)]; }

std::vector<std::int32_t> tokenize_pad(std::string_view residues, std::size_t max_len) {
    std::vector<std::int32_t> ids(max_len, 0);
    const std::size_t n = std::min(residues.size(), max_len);
    for (std::size_t i = 0; i < n; ++i) {
        const int idx = Alphabet::index_of(residues[i]);
        if (idx < 0)
            fail("invalid-residue", "character '" + std::string(1, residues[i]) +
                                        "' at offset " + std::to_string(i) +
                                        " is outside the residue alphabet");
        ids[i] = idx + 1;
    }
    return ids;
}

Tensor one_hot(std::string_view residues, std::size_t max_len) {
    Tensor out({max_len, Alphabet::size});
    const std::size_t n = std::min(residues.size(), max_len);
    for (std::size_t i = 0; i < n; ++i) {
        const int idx = Alphabet::index_of(residues[i]);
        if (idx < 0)
            fail("invalid-residue", "character '" + std::string(1, residues[i]) +
                                        "' at offset " + std::to_string(i) +
                                        " is outside the residue alphabet");
        out.at(i, static_cast<std::size_t>(idx)) = 1.0;
    }
    return out;
}

void to_json(nlohmann::json& j, const LstmConfig& c) {
    j = nlohmann::json{{"max_len", c.max_len},         {"embed_dim", c.embed_dim},
                       {"conv_filters", c.conv_filters}, {"conv_kernel", c.conv_kernel},
                       {"pool_window", c.pool_window},   {"pool_stride", c.pool_stride},
                       {"lstm_hidden", c.lstm_hidden},   {"fc1_dim", c.fc1_dim},
                       {"out_dim", c.out_dim},           {"mask_padding", c.mask_padding},
                       {"dropout_rate", c.dropout_rate}};
}

void from_json(const nlohmann::json& j, LstmConfig& c) {
    c = LstmConfig{};
    if (j.contains("max_len")) j.at("max_len").get_to(c.max_len);
    if (j.contains("embed_dim")) j.at("embed_dim").get_to(c.embed_dim);
    if (j.contains("conv_filters")) j.at("conv_filters").get_to(c.conv_filters);
    if (j.contains("conv_kernel")) j.at("conv_kernel").get_to(c.conv_kernel);
    if (j.contains("pool_window")) j.at("pool_window").get_to(c.pool_window);
    if (j.contains("pool_stride")) j.at("pool_stride").get_to(c.pool_stride);
    if (j.contains("lstm_hidden")) j.at("lstm_hidden").get_to(c.lstm_hidden);
    if (j.contains("fc1_dim")) j.at("fc1_dim").get_to(c.fc1_dim);
    if (j.contains("out_dim")) j.at("out_dim").get_to(c.out_dim);
    if (j.contains("mask_padding")) j.at("mask_padding").get_to(c.mask_padding);
    if (j.contains("dropout_rate")) j.at("dropout_rate").get_to(c.dropout_rate);
}

void to_json(nlohmann::json& j, const CnnConfig& c) {
    j = nlohmann::json{{"max_len", c.max_len},
                       {"in_width", c.in_width},
                       {"filter_heights", c.filter_heights},
                       {"filters_per_bank", c.filters_per_bank},
                       {"out_dim", c.out_dim}};
}

void from_json(const nlohmann::json& j, CnnConfig& c) {
    c = CnnConfig{};
    if (j.contains("max_len")) j.at("max_len").get_to(c.max_len);
    if (j.contains("in_width")) j.at("in_width").get_to(c.in_width);
    if (j.contains("filter_heights")) j.at("filter_heights").get_to(c.filter_heights);
    if (j.contains("filters_per_bank")) j.at("filters_per_bank").get_to(c.filters_per_bank);
    if (j.contains("out_dim")) j.at("out_dim").get_to(c.out_dim);
}

std::vector<Variable*> Model::parameters() {
    std::vector<Variable*> out;
    for (auto& [name, var] : named_parameters()) out.push_back(var);
    return out;
}

std::size_t Model::parameter_count() {
    std::size_t total = 0;
    for (auto& [name, var] : named_parameters()) total += var->value.size();
    return total;
}

namespace {

void init_uniform(Variable& var, double limit, Rng rng) {
    for (std::size_t i = 0; i < var.value.size(); ++i) var.value[i] = rng.uniform(-limit, limit);
}

std::string shape_with_batch(std::initializer_list<std::size_t> dims) {
    std::ostringstream out;
    out << "?";
    for (std::size_t d : dims) out << " x " << d;
    return out.str();
}

// ---------------------------------------------------------------------------

class CnnModel : public Model {
public:
    CnnModel(CnnConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
        if (config_.filter_heights.empty()) fail("bad-config", "cnn needs at least one filter bank");
        for (std::size_t h : config_.filter_heights)
            if (h == 0 || h > config_.max_len)
                fail("bad-config", "cnn filter height " + std::to_string(h) +
                                       " incompatible with max_len " + std::to_string(config_.max_len));
        const std::size_t expected = cnn_parameter_count(config_);
        if (config_.paper_exact && expected != 209022)
            fail("paper-exact-violation",
                 "configured topology has " + std::to_string(expected) +
                     " trainable parameters; the published architecture has 209,022");

        Rng rng(init_seed);
        const std::size_t f = config_.filters_per_bank;
        banks_.resize(config_.filter_heights.size());
        for (std::size_t i = 0; i < banks_.size(); ++i) {
            const std::size_t h = config_.filter_heights[i];
            const double limit = 1.0 / std::sqrt(static_cast<double>(h * config_.in_width));
            banks_[i].kernels = Variable(Tensor({h, config_.in_width, f}));
            banks_[i].bias = Variable(Tensor({f}));
            init_uniform(banks_[i].kernels, limit,
                         rng.stream("init/bank" + std::to_string(h) + ".kernels"));
        }
        const std::size_t concat_dim = f * banks_.size();
        fc_w_ = Variable(Tensor({concat_dim, config_.out_dim}));
        fc_b_ = Variable(Tensor({config_.out_dim}));
        init_uniform(fc_w_, 1.0 / std::sqrt(static_cast<double>(concat_dim)), rng.stream("init/fc.weight"));
    }

    const std::string& kind() const override {
        static const std::string k = "cnn";
        return k;
    }
    std::size_t max_len() const override { return config_.max_len; }
    std::size_t out_dim() const override { return config_.out_dim; }

    EncodedBatch encode(const std::vector<std::string_view>& sequences) const override {
        EncodedBatch batch;
        batch.batch = sequences.size();
        batch.max_len = config_.max_len;
        batch.one_hot = Tensor({batch.batch, config_.max_len, Alphabet::size});
        batch.lengths.resize(batch.batch);
        for (std::size_t i = 0; i < sequences.size(); ++i) {
            const Tensor row = one_hot(sequences[i], config_.max_len);
            std::copy(row.data(), row.data() + row.size(),
                      batch.one_hot.data() + i * row.size());
            batch.lengths[i] =
                static_cast<std::int32_t>(std::min(sequences[i].size(), config_.max_len));
        }
        return batch;
    }

    NodeId forward(Tape& tape, const EncodedBatch& batch, bool training, Rng* dropout_rng) override {
        (void)training;
        (void)dropout_rng;
        if (batch.one_hot.empty() || batch.one_hot.rank() != 3 ||
            batch.one_hot.dim(1) != config_.max_len || batch.one_hot.dim(2) != config_.in_width)
            fail("shape-mismatch", "cnn forward expects a one-hot batch of shape B x " +
                                       std::to_string(config_.max_len) + " x " +
                                       std::to_string(config_.in_width));

        NodeId x = tape.input(batch.one_hot);
        tape.set_label(x, "one_hot");
        std::vector<NodeId> pooled;
        pooled.reserve(banks_.size());
        for (std::size_t i = 0; i < banks_.size(); ++i) {
            const std::string tag = "h" + std::to_string(config_.filter_heights[i]);
            NodeId conv = tape.bias_add(tape.conv2d_valid(x, tape.param(banks_[i].kernels)),
                                        tape.param(banks_[i].bias));
            tape.set_label(conv, "conv2d_" + tag);
            NodeId act = tape.elu(conv);
            tape.set_label(act, "elu_" + tag);
            NodeId pool = tape.global_maxpool(act);
            tape.set_label(pool, "global_maxpool_" + tag);
            pooled.push_back(pool);
        }
        NodeId cat = tape.concat(pooled, 1);
        tape.set_label(cat, "concat");
        NodeId logits = tape.bias_add(tape.matmul(cat, tape.param(fc_w_)), tape.param(fc_b_));
        tape.set_label(logits, "logits");
        return logits;
    }

    std::vector<std::pair<std::string, Variable*>> named_parameters() override {
        std::vector<std::pair<std::string, Variable*>> out;
        for (std::size_t i = 0; i < banks_.size(); ++i) {
            const std::string tag = "bank" + std::to_string(config_.filter_heights[i]);
            out.emplace_back(tag + ".kernels", &banks_[i].kernels);
            out.emplace_back(tag + ".bias", &banks_[i].bias);
        }
        out.emplace_back("fc.weight", &fc_w_);
        out.emplace_back("fc.bias", &fc_b_);
        return out;
    }

    std::vector<LayerInfo> layers() const override {
        std::vector<LayerInfo> out;
        const std::size_t f = config_.filters_per_bank;
        out.push_back({"one_hot", shape_with_batch({config_.max_len, config_.in_width}), 0});
        for (std::size_t h : config_.filter_heights) {
            const std::size_t oh = config_.max_len - h + 1;
            out.push_back({"conv2d_h" + std::to_string(h) + " + elu",
                           shape_with_batch({oh, 1, f}), h * config_.in_width * f + f});
            out.push_back({"global_maxpool_h" + std::to_string(h), shape_with_batch({f}), 0});
        }
        const std::size_t concat_dim = f * config_.filter_heights.size();
        out.push_back({"concat", shape_with_batch({concat_dim}), 0});
        out.push_back({"dense", shape_with_batch({config_.out_dim}),
                       concat_dim * config_.out_dim + config_.out_dim});
        return out;
    }

    nlohmann::json config_json() const override { return nlohmann::json(config_); }

private:
    struct Bank {
        Variable kernels;
        Variable bias;
    };

    CnnConfig config_;
    std::vector<Bank> banks_;
    Variable fc_w_;
    Variable fc_b_;
};

// ---------------------------------------------------------------------------

class LstmModel : public Model {
public:
    LstmModel(LstmConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
        if (config_.conv_kernel == 0 || config_.conv_kernel > config_.max_len)
            fail("bad-config", "lstm conv kernel incompatible with max_len");
        const std::size_t conv_out = config_.max_len - config_.conv_kernel + 1;
        if (conv_out < config_.pool_window)
            fail("bad-config", "pool window larger than conv output");

        Rng rng(init_seed);
        const std::size_t vocab = Alphabet::size + 1;
        embedding_ = Variable(Tensor({vocab, config_.embed_dim}));
        init_uniform(embedding_, 1.0 / std::sqrt(static_cast<double>(config_.embed_dim)),
                     rng.stream("init/embedding"));
        // padding id 0 starts at zero but stays trainable
        for (std::size_t j = 0; j < config_.embed_dim; ++j) embedding_.value[j] = 0.0;

        conv_k_ = Variable(Tensor({config_.conv_kernel, config_.embed_dim, config_.conv_filters}));
        conv_b_ = Variable(Tensor({config_.conv_filters}));
        init_uniform(conv_k_,
                     1.0 / std::sqrt(static_cast<double>(config_.conv_kernel * config_.embed_dim)),
                     rng.stream("init/conv.kernels"));

        const std::size_t h = config_.lstm_hidden;
        auto init_direction = [&](Direction& dir, const std::string& tag) {
            dir.wx = Variable(Tensor({config_.conv_filters, 4 * h}));
            dir.wh = Variable(Tensor({h, 4 * h}));
            dir.bias = Variable(Tensor({4 * h}));
            init_uniform(dir.wx, 1.0 / std::sqrt(static_cast<double>(config_.conv_filters)),
                         rng.stream("init/" + tag + ".wx"));
            init_uniform(dir.wh, 1.0 / std::sqrt(static_cast<double>(h)),
                         rng.stream("init/" + tag + ".wh"));
            for (std::size_t j = h; j < 2 * h; ++j) dir.bias.value[j] = 1.0; // forget gate
        };
        init_direction(fwd_, "lstm.fwd");
        init_direction(bwd_, "lstm.bwd");

        fc1_w_ = Variable(Tensor({2 * h, config_.fc1_dim}));
        fc1_b_ = Variable(Tensor({config_.fc1_dim}));
        init_uniform(fc1_w_, 1.0 / std::sqrt(static_cast<double>(2 * h)), rng.stream("init/fc1.weight"));
        fc2_w_ = Variable(Tensor({config_.fc1_dim, config_.out_dim}));
        fc2_b_ = Variable(Tensor({config_.out_dim}));
        init_uniform(fc2_w_, 1.0 / std::sqrt(static_cast<double>(config_.fc1_dim)),
                     rng.stream("init/fc2.weight"));
    }

    const std::string& kind() const override {
        static const std::string k = "lstm";
        return k;
    }
    std::size_t max_len() const override { return config_.max_len; }
    std::size_t out_dim() const override { return config_.out_dim; }

    EncodedBatch encode(const std::vector<std::string_view>& sequences) const override {
        EncodedBatch batch;
        batch.batch = sequences.size();
        batch.max_len = config_.max_len;
        batch.ids.resize(batch.batch * config_.max_len);
        batch.lengths.resize(batch.batch);
        for (std::size_t i = 0; i < sequences.size(); ++i) {
            const std::vector<std::int32_t> ids = tokenize_pad(sequences[i], config_.max_len);
            std::copy(ids.begin(), ids.end(), batch.ids.begin() + i * config_.max_len);
            batch.lengths[i] =
                static_cast<std::int32_t>(std::min(sequences[i].size(), config_.max_len));
        }
        return batch;
    }

    NodeId forward(Tape& tape, const EncodedBatch& batch, bool training, Rng* dropout_rng) override {
        if (batch.ids.size() != batch.batch * config_.max_len)
            fail("shape-mismatch", "lstm forward expects token ids of shape B x " +
                                       std::to_string(config_.max_len));

        NodeId x = tape.embedding_lookup(tape.param(embedding_), batch.ids, batch.batch,
                                         config_.max_len);
        tape.set_label(x, "embedding");
        if (config_.mask_padding) {
            x = tape.mask_time(x, batch.lengths);
            tape.set_label(x, "mask");
        }
        NodeId conv = tape.bias_add(tape.conv1d_valid(x, tape.param(conv_k_)), tape.param(conv_b_));
        tape.set_label(conv, "conv1d");
        NodeId act = tape.relu(conv);
        tape.set_label(act, "relu1");
        NodeId pooled = tape.maxpool1d(act, config_.pool_window, config_.pool_stride);
        tape.set_label(pooled, "maxpool1");
        NodeId scanned = tape.bidirectional_scan(pooled, tape.param(fwd_.wx), tape.param(fwd_.wh),
                                                 tape.param(fwd_.bias), tape.param(bwd_.wx),
                                                 tape.param(bwd_.wh), tape.param(bwd_.bias));
        tape.set_label(scanned, "bilstm");
        NodeId gmax = tape.global_maxpool(scanned);
        tape.set_label(gmax, "global_maxpool");
        NodeId fc1 = tape.bias_add(tape.matmul(gmax, tape.param(fc1_w_)), tape.param(fc1_b_));
        tape.set_label(fc1, "fc1");
        NodeId act2 = tape.relu(fc1);
        tape.set_label(act2, "relu2");
        if (config_.dropout_rate > 0.0 && training) {
            if (dropout_rng == nullptr) fail("bad-config", "training with dropout needs an rng");
            act2 = tape.dropout(act2, config_.dropout_rate, *dropout_rng, true);
            tape.set_label(act2, "dropout");
        }
        NodeId logits = tape.bias_add(tape.matmul(act2, tape.param(fc2_w_)), tape.param(fc2_b_));
        tape.set_label(logits, "logits");
        return logits;
    }

    std::vector<std::pair<std::string, Variable*>> named_parameters() override {
        return {{"embedding", &embedding_}, {"conv.kernels", &conv_k_}, {"conv.bias", &conv_b_},
                {"lstm.fwd.wx", &fwd_.wx},  {"lstm.fwd.wh", &fwd_.wh},  {"lstm.fwd.bias", &fwd_.bias},
                {"lstm.bwd.wx", &bwd_.wx},  {"lstm.bwd.wh", &bwd_.wh},  {"lstm.bwd.bias", &bwd_.bias},
                {"fc1.weight", &fc1_w_},    {"fc1.bias", &fc1_b_},      {"fc2.weight", &fc2_w_},
                {"fc2.bias", &fc2_b_}};
    }

    std::vector<LayerInfo> layers() const override {
        std::vector<LayerInfo> out;
        const std::size_t vocab = Alphabet::size + 1;
        const std::size_t conv_out = config_.max_len - config_.conv_kernel + 1;
        const std::size_t pooled = (conv_out - config_.pool_window) / config_.pool_stride + 1;
        const std::size_t h = config_.lstm_hidden;
        out.push_back({"embedding", shape_with_batch({config_.max_len, config_.embed_dim}),
                       vocab * config_.embed_dim});
        out.push_back({"conv1d + relu", shape_with_batch({conv_out, config_.conv_filters}),
                       config_.conv_kernel * config_.embed_dim * config_.conv_filters +
                           config_.conv_filters});
        out.push_back({"maxpool1d", shape_with_batch({pooled, config_.conv_filters}), 0});
        out.push_back({"bidirectional_lstm", shape_with_batch({pooled, 2 * h}),
                       2 * (config_.conv_filters * 4 * h + h * 4 * h + 4 * h)});
        out.push_back({"global_maxpool", shape_with_batch({2 * h}), 0});
        out.push_back({"fc1 + relu", shape_with_batch({config_.fc1_dim}),
                       2 * h * config_.fc1_dim + config_.fc1_dim});
        out.push_back({"fc2", shape_with_batch({config_.out_dim}),
                       config_.fc1_dim * config_.out_dim + config_.out_dim});
        return out;
    }

    nlohmann::json config_json() const override { return nlohmann::json(config_); }

private:
    struct Direction {
        Variable wx;
        Variable wh;
        Variable bias;
    };

    LstmConfig config_;
    Variable embedding_;
    Variable conv_k_;
    Variable conv_b_;
    Direction fwd_;
    Direction bwd_;
    Variable fc1_w_;
    Variable fc1_b_;
    Variable fc2_w_;
    Variable fc2_b_;
};

} // namespace

std::size_t cnn_parameter_count(const CnnConfig& config) {
    std::size_t total = 0;
    for (std::size_t h : config.filter_heights)
        total += h * config.in_width * config.filters_per_bank + config.filters_per_bank;
    const std::size_t concat_dim = config.filters_per_bank * config.filter_heights.size();
    total += concat_dim * config.out_dim + config.out_dim;
    return total;
}

std::unique_ptr<Model> build_cnn(const CnnConfig& config, std::uint64_t init_seed) {
    return std::make_unique<CnnModel>(config, init_seed);
}

std::unique_ptr<Model> build_lstm(const LstmConfig& config, std::uint64_t init_seed) {
    return std::make_unique<LstmModel>(config, init_seed);
}

std::unique_ptr<Model> build_model(const std::string& kind, const nlohmann::json& config,
                                   std::uint64_t init_seed) {
    if (kind == "cnn") return build_cnn(config.get<CnnConfig>(), init_seed);
    if (kind == "lstm") return build_lstm(config.get<LstmConfig>(), init_seed);
    fail("bad-config", "unknown model kind '" + kind + "'");
}

GradCheckItem model_grad_check(const std::string& kind, std::uint64_t seed) {
    Rng rng(seed);
    std::unique_ptr<Model> model;
    EncodedBatch batch;
    batch.batch = 2;

    if (kind == "cnn") {
        CnnConfig config;
        config.max_len = 12;
        config.filters_per_bank = 6;
        config.out_dim = 5;
        model = build_cnn(config, seed);
        batch.max_len = config.max_len;
        // dense random input instead of one-hot: unique pooling maxima
        batch.one_hot = Tensor({2, config.max_len, config.in_width});
        Rng in_rng = rng.stream("input");
        for (std::size_t i = 0; i < batch.one_hot.size(); ++i)
            batch.one_hot[i] = in_rng.uniform(-1.0, 1.0);
    } else if (kind == "lstm") {
        LstmConfig config;
        config.max_len = 12;
        config.embed_dim = 5;
        config.conv_filters = 6;
        config.conv_kernel = 3;
        config.pool_window = 2;
        config.pool_stride = 2;
        config.lstm_hidden = 4;
        config.fc1_dim = 8;
        config.out_dim = 5;
        model = build_lstm(config, seed);
        batch.max_len = config.max_len;
        batch.ids.resize(2 * config.max_len);
        batch.lengths = {static_cast<std::int32_t>(config.max_len),
                         static_cast<std::int32_t>(config.max_len)};
        Rng id_rng = rng.stream("ids");
        for (auto& id : batch.ids)
            id = static_cast<std::int32_t>(1 + id_rng.below(Alphabet::size));
    } else {
        fail("bad-config", "unknown model kind '" + kind + "'");
    }

    Tensor targets({2, model->out_dim()});
    Rng t_rng = rng.stream("targets");
    for (std::size_t i = 0; i < targets.size(); ++i)
        targets[i] = t_rng.below(2) ? 1.0 : 0.0;
    const std::vector<double> unit(model->out_dim(), 1.0);

    auto params = model->named_parameters();
    auto run = [&](bool with_backward) {
        Tape tape;
        NodeId logits = model->forward(tape, batch);
        NodeId loss = tape.bce_with_logits_weighted(logits, targets, unit, unit);
        const double v = tape.value(loss).scalar_value();
        if (with_backward) tape.backward(loss);
        return v;
    };
    auto loss = [&] { return run(false); };
    auto compute = [&] {
        for (auto& [name, var] : params) var->zero_grad();
        return run(true);
    };

    GradChecker checker;
    Rng coord_rng = rng.stream("coords");
    return checker.check(kind, params, loss, compute, coord_rng);
}

} // namespace avp
