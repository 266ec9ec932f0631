#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace posc {

using Bytes = std::vector<std::uint8_t>;

/// 128-bit content digest used for log/transaction/message identity.
/// Two independent FNV-1a streams keep accidental collisions out of reach
/// at simulation scale while staying fully deterministic across runs.
struct Digest {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;

    friend auto operator<=>(const Digest&, const Digest&) = default;

    bool is_zero() const { return hi == 0 && lo == 0; }
    std::string hex() const;
    static Digest from_hex(std::string_view s);
};

struct DigestHash {
    std::size_t operator()(const Digest& d) const noexcept {
        return static_cast<std::size_t>(d.hi ^ (d.lo * 0x9e3779b97f4a7c15ull));
    }
};

/// Streaming FNV-1a over two lanes. feed() order defines the digest, so every
/// encoder must emit fields in a fixed, documented order.
class Hasher {
  public:
    Hasher() = default;

    void feed(const void* data, std::size_t len) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            a_ = (a_ ^ p[i]) * kPrime;
            b_ = (b_ ^ p[i]) * kPrime2;
        }
    }
    void feed(const Bytes& b) { feed(b.data(), b.size()); }
    void feed(std::string_view s) { feed(s.data(), s.size()); }
    void feed_u64(std::uint64_t v) {
        std::uint8_t buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(v >> (8 * i));
        feed(buf, 8);
    }
    void feed(const Digest& d) {
        feed_u64(d.hi);
        feed_u64(d.lo);
    }

    Digest digest() const { return Digest{a_, b_}; }

  private:
    static constexpr std::uint64_t kPrime = 0x100000001b3ull;
    static constexpr std::uint64_t kPrime2 = 0x00000100000001b3ull ^ 0x9e3779b97f4a7c15ull;
    std::uint64_t a_ = 0xcbf29ce484222325ull;
    std::uint64_t b_ = 0x84222325cbf29ce4ull;
};

inline Digest digest_of(const Bytes& b) {
    Hasher h;
    h.feed(b);
    return h.digest();
}

std::string to_hex(const Bytes& b);
Bytes from_hex(std::string_view s);

/// Little-endian binary writer for the canonical wire/storage encodings.
/// Encoding conventions (version 1 everywhere):
///   - fixed-width integers are little-endian;
///   - variable byte strings are u32 length followed by raw bytes;
///   - sequences are u32 count followed by elements.
class Writer {
  public:
    Bytes take() { return std::move(out_); }
    const Bytes& buffer() const { return out_; }

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void raw(const Bytes& b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void var_bytes(const Bytes& b) {
        u32(static_cast<std::uint32_t>(b.size()));
        raw(b);
    }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }
    void digest(const Digest& d) {
        u64(d.hi);
        u64(d.lo);
    }

  private:
    Bytes out_;
};

/// Matching reader; throws DecodeError on truncation so malformed wire input
/// surfaces as a structured failure instead of UB.
struct DecodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}
    explicit Reader(const Bytes& b) : data_(b.data(), b.size()) {}
    // A Reader only views the buffer; constructing from a temporary would
    // dangle immediately.
    explicit Reader(Bytes&&) = delete;

    bool done() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    Bytes var_bytes() {
        auto n = u32();
        need(n);
        Bytes b(data_.begin() + pos_, data_.begin() + pos_ + n);
        pos_ += n;
        return b;
    }
    std::string str() {
        auto n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    Digest digest() {
        Digest d;
        d.hi = u64();
        d.lo = u64();
        return d;
    }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw DecodeError("truncated input");
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

/// Deterministic splitmix64-based RNG. std::mt19937_64 would also be
/// reproducible, but distributions are not portable across standard library
/// implementations; this keeps traces byte-identical everywhere.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    /// Uniform in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound) { return next() % bound; }
    /// Uniform in [lo, hi] inclusive.
    std::uint64_t range(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }
    bool chance_percent(std::uint32_t pct) { return below(100) < pct; }

    /// Independent substream; used so adding one consumer does not shift
    /// every other consumer's draws.
    Rng fork(std::uint64_t salt) const {
        Hasher h;
        h.feed_u64(state_);
        h.feed_u64(salt);
        return Rng(h.digest().hi);
    }

  private:
    std::uint64_t state_;
};

}  // namespace posc
