#include "posc/identity.hpp"

namespace posc {

Identifier KeyRegistry::create(const std::string& alias) {
    std::lock_guard lock(mu_);
    Hasher h;
    h.feed_u64(seed_);
    h.feed_u64(next_serial_++);
    h.feed(alias);
    Digest d = h.digest();
    Bytes pk;
    pk.reserve(16);
    for (int i = 7; i >= 0; --i) pk.push_back(static_cast<std::uint8_t>(d.hi >> (8 * i)));
    for (int i = 7; i >= 0; --i) pk.push_back(static_cast<std::uint8_t>(d.lo >> (8 * i)));
    owned_.insert(pk);
    return Identifier{std::move(pk), alias};
}

void KeyRegistry::adopt(const Identifier& id) {
    std::lock_guard lock(mu_);
    adopted_.insert(id.pubkey);
}

bool KeyRegistry::known(const Identifier& id) const {
    std::lock_guard lock(mu_);
    return owned_.count(id.pubkey) > 0 || adopted_.count(id.pubkey) > 0;
}

bool KeyRegistry::owns_key(const Identifier& id) const {
    std::lock_guard lock(mu_);
    return owned_.count(id.pubkey) > 0;
}

std::uint64_t KeyRegistry::secret_for(const Identifier& id) const {
    Hasher h;
    h.feed_u64(seed_ ^ 0x5ec2e7ull);
    h.feed(id.pubkey);
    return h.digest().lo;
}

std::uint64_t KeyRegistry::tag_for(const Identifier& id, const Digest& subject) const {
    Hasher h;
    h.feed_u64(secret_for(id));
    h.feed(subject);
    return h.digest().hi;
}

Signature KeyRegistry::sign(const Identifier& id, const Digest& subject) {
    {
        std::lock_guard lock(mu_);
        if (owned_.count(id.pubkey) == 0) throw UnknownKey{};
        Hasher h;
        h.feed(id.pubkey);
        ledger_[subject].insert(h.digest().hi);
    }
    return Signature{id, subject, tag_for(id, subject), SigScheme::Simulated};
}

bool KeyRegistry::verify(const Signature& sig) const {
    return sig.tag == tag_for(sig.signer, sig.subject);
}

bool KeyRegistry::verify(const Signature& sig, const Digest& expected_subject) const {
    return sig.subject == expected_subject && verify(sig);
}

bool KeyRegistry::ledger_contains(const Identifier& id, const Digest& subject) const {
    std::lock_guard lock(mu_);
    auto it = ledger_.find(subject);
    if (it == ledger_.end()) return false;
    Hasher h;
    h.feed(id.pubkey);
    return it->second.count(h.digest().hi) > 0;
}

}  // namespace posc
