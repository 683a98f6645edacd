#include "avp/manifest.hpp"

#include <chrono>
#include <fstream>

#include "avp/errors.hpp"
#include "avp/hash.hpp"

namespace avp {

std::string config_hash(const nlohmann::json& effective_config) {
    return hash_bytes(effective_config.dump());
}

nlohmann::json Manifest::to_json() const {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    return {{"command", command},
            {"config_hash", config_hash},
            {"seed", seed},
            {"inputs", inputs},
            {"outputs", outputs},
            {"created_at_unix_ms",
             std::chrono::duration_cast<std::chrono::milliseconds>(now).count()}};
}

void write_manifest(const std::string& path, const Manifest& manifest) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("io", "cannot write " + path);
    out << manifest.to_json().dump(2) << '\n';
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("missing-artifact", "manifest " + path + " not found; run the upstream command");
    nlohmann::json j;
    in >> j;
    Manifest m;
    m.command = j.value("command", "");
    m.config_hash = j.value("config_hash", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.inputs = j.value("inputs", std::map<std::string, std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    return m;
}

void check_upstream_config(const std::string& manifest_path, const std::string& expected_hash,
                           bool allow_mismatch) {
    const Manifest upstream = read_manifest(manifest_path);
    if (upstream.config_hash == expected_hash || allow_mismatch) return;
    fail("config-mismatch", "upstream artifact " + manifest_path +
                                " was produced under config hash " + upstream.config_hash +
                                ", current config hashes to " + expected_hash +
                                " (pass --allow-config-mismatch to override)");
}

} // namespace avp
