#pragma once

#include <compare>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "posc/bytes.hpp"

namespace posc {

/// A public identity (PoS-id). Ordering is the canonical byte order of the
/// public key, which map_stake and every other deterministic tie-break rely
/// on. The alias is for humans and traces only.
struct Identifier {
    Bytes pubkey;
    std::string alias;

    friend bool operator==(const Identifier& a, const Identifier& b) { return a.pubkey == b.pubkey; }
    friend bool operator!=(const Identifier& a, const Identifier& b) { return !(a == b); }
    friend bool operator<(const Identifier& a, const Identifier& b) { return a.pubkey < b.pubkey; }

    std::string display() const { return alias.empty() ? to_hex(pubkey).substr(0, 8) : alias; }
};

struct IdentifierHash {
    std::size_t operator()(const Identifier& id) const noexcept {
        Hasher h;
        h.feed(id.pubkey);
        return static_cast<std::size_t>(h.digest().hi);
    }
};

using IdentifierSet = std::set<Identifier>;

enum class SigScheme : std::uint8_t { Simulated = 0 };

/// A signature over a 128-bit message digest. The tag is an HMAC-style value
/// derived from the signer's registry secret, so verification is a pure
/// recomputation given the registry; holders of the raw bytes cannot mint
/// tags for digests the key owner never signed.
struct Signature {
    Identifier signer;
    Digest subject;
    std::uint64_t tag = 0;
    SigScheme scheme = SigScheme::Simulated;

    friend bool operator==(const Signature&, const Signature&) = default;
};

/// Registry-backed simulated PKI. Keys are derived deterministically from the
/// registry seed; sign() additionally records (signer, subject) in an
/// append-only ledger so tests can assert that no verifying signature exists
/// without a matching sign() call.
class KeyRegistry {
  public:
    explicit KeyRegistry(std::uint64_t seed) : seed_(seed) {}

    /// Mints a fresh identifier with a deterministic 16-byte public key.
    Identifier create(const std::string& alias);

    /// Registers a foreign identifier (e.g. decoded from a trace) without a
    /// private key; such identifiers can verify but never sign here.
    void adopt(const Identifier& id);

    bool known(const Identifier& id) const;
    bool owns_key(const Identifier& id) const;

    struct UnknownKey : std::runtime_error {
        UnknownKey() : std::runtime_error("signing key not held by this registry") {}
    };

    Signature sign(const Identifier& id, const Digest& subject);
    bool verify(const Signature& sig) const;
    bool verify(const Signature& sig, const Digest& expected_subject) const;

    /// Strict oracle check: true only if this exact (signer, subject) pair
    /// went through sign(). Used by forgery tests; verify() covers replay.
    bool ledger_contains(const Identifier& id, const Digest& subject) const;

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t secret_for(const Identifier& id) const;
    std::uint64_t tag_for(const Identifier& id, const Digest& subject) const;

    std::uint64_t seed_;
    std::uint64_t next_serial_ = 1;
    mutable std::mutex mu_;
    std::unordered_map<Digest, std::unordered_set<std::uint64_t>, DigestHash> ledger_;
    std::set<Bytes> owned_;
    std::set<Bytes> adopted_;
};

}  // namespace posc
