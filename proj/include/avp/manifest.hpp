#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace avp {

// Every CLI command writes one of these next to its outputs: enough to
// re-derive the artifact (input hashes, effective config hash, seed) plus a
// timestamp, which is the only field allowed to differ between identical
// reruns.
struct Manifest {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> inputs;  // label -> file hash
    std::vector<std::string> outputs;

    nlohmann::json to_json() const; // adds created_at
};

std::string config_hash(const nlohmann::json& effective_config);

void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

// Dependent stages refuse to run when the upstream manifest was produced
// under a different config, unless explicitly overridden.
void check_upstream_config(const std::string& manifest_path, const std::string& expected_hash,
                           bool allow_mismatch);

} // namespace avp
