#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "avp/grad_check.hpp"
#include "avp/tape.hpp"

namespace avp {

// The 28-symbol FASTA residue charset: 20 standard residues, the extended
// codes B J O U X Z, '*' (stop) and '-' (gap). Tokenizer ids are 1-based;
// id 0 is reserved for padding.
class Alphabet {
public:
    static constexpr std::string_view symbols = "ACDEFGHIKLMNPQRSTVWYBJOUXZ*-";
    static constexpr std::size_t size = 28;

    static bool contains(char c) { return index_of(c) >= 0; }
    static int index_of(char c); // 0-based column, -1 when not in the charset
    static char symbol(std::size_t index) { return symbols[index]; }
};

// First max_len characters as 1-based ids, zero-padded on the right.
std::vector<std::int32_t> tokenize_pad(std::string_view residues, std::size_t max_len);

// max_len x 28; row i is the unit vector of residue i, all-zero past the end.
Tensor one_hot(std::string_view residues, std::size_t max_len);

struct LstmConfig {
    std::size_t max_len = 500;
    std::size_t embed_dim = 128;
    std::size_t conv_filters = 128;
    std::size_t conv_kernel = 5;
    std::size_t pool_window = 2;
    std::size_t pool_stride = 2;
    std::size_t lstm_hidden = 256;
    std::size_t fc1_dim = 512;
    std::size_t out_dim = 126;
    bool mask_padding = false;
    double dropout_rate = 0.0;
};

struct CnnConfig {
    std::size_t max_len = 500;
    std::size_t in_width = 28;
    std::vector<std::size_t> filter_heights = {1, 2, 3, 5};
    std::size_t filters_per_bank = 256;
    std::size_t out_dim = 126;
    // Reject any configuration whose trainable parameter count differs from
    // the published 209,022.
    bool paper_exact = false;
};

void to_json(nlohmann::json& j, const LstmConfig& c);
void from_json(const nlohmann::json& j, LstmConfig& c);
void to_json(nlohmann::json& j, const CnnConfig& c);
void from_json(const nlohmann::json& j, CnnConfig& c);

struct EncodedBatch {
    std::size_t batch = 0;
    std::size_t max_len = 0;
    std::vector<std::int32_t> ids;     // batch*max_len token ids (LSTM input)
    std::vector<std::int32_t> lengths; // pre-truncation ids clamped to max_len
    Tensor one_hot;                    // batch x max_len x 28 (CNN input)
};

struct LayerInfo {
    std::string name;
    std::string output_shape; // "?" marks the batch dimension
    std::size_t param_count = 0;
};

class Model {
public:
    virtual ~Model() = default;

    virtual const std::string& kind() const = 0;
    virtual std::size_t max_len() const = 0;
    virtual std::size_t out_dim() const = 0;

    virtual EncodedBatch encode(const std::vector<std::string_view>& sequences) const = 0;

    // Records the forward pass onto `tape`, returns the logits node (B x out_dim).
    // Stage outputs are labelled on the tape for activation dumps.
    virtual NodeId forward(Tape& tape, const EncodedBatch& batch, bool training = false,
                           Rng* dropout_rng = nullptr) = 0;

    virtual std::vector<std::pair<std::string, Variable*>> named_parameters() = 0;
    virtual std::vector<LayerInfo> layers() const = 0;
    virtual nlohmann::json config_json() const = 0;

    std::vector<Variable*> parameters();
    std::size_t parameter_count();
};

std::unique_ptr<Model> build_cnn(const CnnConfig& config, std::uint64_t init_seed);
std::unique_ptr<Model> build_lstm(const LstmConfig& config, std::uint64_t init_seed);
std::unique_ptr<Model> build_model(const std::string& kind, const nlohmann::json& config,
                                   std::uint64_t init_seed);

// 209,022 for the published topology (bank width 256); exposed so callers can
// report the derivation without building a model.
std::size_t cnn_parameter_count(const CnnConfig& config);

// Finite-difference check of a full model at toy shapes (batch 2). Inputs are
// dense random tensors so pooling argmaxes have unique maxima.
GradCheckItem model_grad_check(const std::string& kind, std::uint64_t seed);

} // namespace avp
