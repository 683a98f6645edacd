#include "avp/hash.hpp"

#include <fstream>
#include <sstream>

#include "avp/errors.hpp"

namespace avp {

std::string to_hex(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("io", "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return hash_bytes(buf.str());
}

} // namespace avp
