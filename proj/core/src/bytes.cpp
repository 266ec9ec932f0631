#include "posc/bytes.hpp"

#include <stdexcept>

namespace posc {

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_val(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw DecodeError("bad hex digit");
}
}  // namespace

std::string to_hex(const Bytes& b) {
    std::string s;
    s.reserve(b.size() * 2);
    for (auto c : b) {
        s.push_back(kHexDigits[c >> 4]);
        s.push_back(kHexDigits[c & 0xf]);
    }
    return s;
}

Bytes from_hex(std::string_view s) {
    if (s.size() % 2 != 0) throw DecodeError("odd hex length");
    Bytes b;
    b.reserve(s.size() / 2);
    for (std::size_t i = 0; i < s.size(); i += 2)
        b.push_back(static_cast<std::uint8_t>(hex_val(s[i]) * 16 + hex_val(s[i + 1])));
    return b;
}

std::string Digest::hex() const {
    Bytes b;
    b.reserve(16);
    for (int i = 7; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(hi >> (8 * i)));
    for (int i = 7; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(lo >> (8 * i)));
    return to_hex(b);
}

Digest Digest::from_hex(std::string_view s) {
    Bytes b = posc::from_hex(s);
    if (b.size() != 16) throw DecodeError("digest must be 16 bytes");
    Digest d;
    for (int i = 0; i < 8; ++i) d.hi = (d.hi << 8) | b[i];
    for (int i = 0; i < 8; ++i) d.lo = (d.lo << 8) | b[8 + i];
    return d;
}

}  // namespace posc
