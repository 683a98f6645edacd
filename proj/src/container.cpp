#include "avp/container.hpp"

#include <bit>
#include <fstream>

#include "avp/errors.hpp"
#include "avp/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "container format is little-endian; byte swapping is not implemented");

namespace avp {

namespace {

constexpr char kMagic[8] = {'A', 'V', 'P', 'B', 'I', 'N', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) fail("io", "truncated container file");
    return value;
}

} // namespace

void write_container(const std::string& path, const NamedArrays& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("io", "cannot write " + path);

    out.write(kMagic, sizeof(kMagic));
    const std::string header = data.header.dump();
    write_pod<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(data.arrays.size()));
    for (const auto& [name, tensor] : data.arrays) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d = 0; d < tensor.rank(); ++d)
            write_pod<std::uint64_t>(out, tensor.dim(d));
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    }
    if (!out) fail("io", "short write to " + path);
}

NamedArrays read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("io", "cannot open " + path);

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + 8, kMagic))
        fail("bad-artifact", path + " is not an avp array container");

    NamedArrays data;
    const auto header_len = read_pod<std::uint64_t>(in);
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) fail("io", "truncated container header in " + path);
    data.header = nlohmann::json::parse(header);

    const auto count = read_pod<std::uint32_t>(in);
    data.arrays.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        const auto rank = read_pod<std::uint32_t>(in);
        Shape shape(rank);
        for (auto& d : shape) d = read_pod<std::uint64_t>(in);
        Tensor tensor(shape);
        in.read(reinterpret_cast<char*>(tensor.data()),
                static_cast<std::streamsize>(tensor.size() * sizeof(double)));
        if (!in) fail("io", "truncated array data in " + path);
        data.arrays.emplace_back(std::move(name), std::move(tensor));
    }
    return data;
}

std::string registry_hash(const std::vector<std::string>& registry) {
    std::string joined;
    for (const auto& name : registry) {
        joined += name;
        joined += '\n';
    }
    return hash_bytes(joined);
}

void save_checkpoint(const std::string& path, Model& model, std::uint64_t seed,
                     const std::vector<std::string>& registry) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : model.layers())
        layers.push_back({{"layer", layer.name},
                          {"output", layer.output_shape},
                          {"parameters", layer.param_count}});
    NamedArrays data;
    data.header = {{"format", "avp-checkpoint"},
                   {"format_version", 1},
                   {"kind", model.kind()},
                   {"config", model.config_json()},
                   {"layers", layers},
                   {"seed", seed},
                   {"registry", registry},
                   {"registry_hash", registry_hash(registry)}};
    for (auto& [name, var] : model.named_parameters()) data.arrays.emplace_back(name, var->value);
    write_container(path, data);
}

Checkpoint load_checkpoint(const std::string& path) {
    NamedArrays data = read_container(path);
    if (!data.header.contains("format") || data.header["format"] != "avp-checkpoint")
        fail("bad-artifact", path + " is not a checkpoint");

    Checkpoint ckpt;
    ckpt.header = data.header;
    ckpt.seed = data.header.value("seed", std::uint64_t{0});
    ckpt.registry = data.header.value("registry", std::vector<std::string>{});
    ckpt.model = build_model(data.header.at("kind").get<std::string>(),
                             data.header.at("config"), /*init_seed=*/0);

    auto params = ckpt.model->named_parameters();
    std::size_t assigned = 0;
    for (auto& [name, tensor] : data.arrays) {
        for (auto& [pname, var] : params) {
            if (pname != name) continue;
            if (!var->value.same_shape(tensor))
                fail("bad-artifact", "checkpoint array " + name + " has shape " +
                                         shape_to_string(tensor.shape()) + ", model expects " +
                                         shape_to_string(var->value.shape()));
            var->value = tensor;
            ++assigned;
            break;
        }
    }
    if (assigned != params.size())
        fail("bad-artifact", "checkpoint " + path + " assigns " + std::to_string(assigned) +
                                 " of " + std::to_string(params.size()) + " model parameters");
    return ckpt;
}

} // namespace avp
