#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "avp/models.hpp"
#include "avp/tensor.hpp"

namespace avp {

// On-disk array container: 8-byte magic "AVPBIN01", u64 header length, the
// header as canonical JSON, u32 array count, then per array a length-prefixed
// name, u32 rank, u64 dims and raw little-endian float64 data. Used for both
// parameter checkpoints and activation dumps.
struct NamedArrays {
    nlohmann::json header;
    std::vector<std::pair<std::string, Tensor>> arrays;
};

void write_container(const std::string& path, const NamedArrays& data);
NamedArrays read_container(const std::string& path);

struct Checkpoint {
    std::unique_ptr<Model> model;
    std::uint64_t seed = 0;
    std::vector<std::string> registry;
    nlohmann::json header;
};

void save_checkpoint(const std::string& path, Model& model, std::uint64_t seed,
                     const std::vector<std::string>& registry);
Checkpoint load_checkpoint(const std::string& path);

std::string registry_hash(const std::vector<std::string>& registry);

} // namespace avp
