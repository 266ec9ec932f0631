#include "posc/certificate.hpp"

#include <cassert>

namespace posc::crypto {

using ledger::epoch_genesis_table;
using ledger::epoch_of;
using ledger::ep_prefix;
using ledger::StakeTable;
using ledger::validators_of;

void Certificate::add(const Signature& sig) {
    if (signatures.empty()) subject = sig.subject;
    signatures.emplace(sig.signer, sig);
}

IdentifierSet Certificate::signers() const {
    IdentifierSet out;
    for (const auto& [id, sig] : signatures) out.insert(id);
    return out;
}

void Certificate::encode(Writer& w) const {
    w.digest(subject);
    w.u32(static_cast<std::uint32_t>(signatures.size()));
    for (const auto& [id, sig] : signatures) {
        w.var_bytes(id.pubkey);
        w.str(id.alias);
        w.digest(sig.subject);
        w.u64(sig.tag);
        w.u8(static_cast<std::uint8_t>(sig.scheme));
    }
}

Certificate Certificate::decode(Reader& r) {
    Certificate c;
    c.subject = r.digest();
    auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        Signature sig;
        sig.signer.pubkey = r.var_bytes();
        sig.signer.alias = r.str();
        sig.subject = r.digest();
        sig.tag = r.u64();
        sig.scheme = static_cast<SigScheme>(r.u8());
        c.signatures.emplace(sig.signer, sig);
    }
    return c;
}

Signature sign_log(KeyRegistry& reg, const Identifier& id, const Log& l) {
    return reg.sign(id, l.digest());
}

bool is_certified(const Log& l, const Certificate& c, const KeyRegistry& reg) {
    if (l.length() == 0) return true;  // genesis is certified at every process
    const auto e = epoch_of(l);
    const IdentifierSet validators = validators_of(l);
    const StakeTable& table = epoch_genesis_table(l, e - 1);
    const Digest subject = l.digest();

    Stake stake = 0;
    for (const auto& [id, sig] : c.signatures) {
        if (validators.count(id) == 0) continue;
        if (sig.signer != id) continue;
        if (!reg.verify(sig, subject)) continue;
        auto it = table.find(id);
        if (it != table.end()) stake += it->second;
    }
    return l.model().meets_certification(stake);
}

bool is_fully_certified(const Log& l, const CertificateMap& certs, const KeyRegistry& reg) {
    const auto e = epoch_of(l);
    for (std::uint64_t i = 0; i < e; ++i) {
        auto it = certs.find(i);
        if (it == certs.end()) return false;
        if (!is_certified(ep_prefix(l, i), it->second, reg)) return false;
    }
    if (l.length() == 0) return true;
    auto it = certs.find(e);
    if (it == certs.end()) return false;
    return is_certified(l, it->second, reg);
}

GuiltReport extract_guilt(const Evidence& a, const Evidence& b, const KeyRegistry& reg) {
    if (!is_fully_certified(a.log, a.certs, reg) || !is_fully_certified(b.log, b.certs, reg))
        throw NotFullyCertified{};
    if (ledger::consistent(a.log, b.log)) throw NotInconsistent{};

    // Longest common prefix; the logs diverge at entry m+1.
    const std::uint32_t max_common = std::min(a.log.length(), b.log.length());
    std::uint32_t m = 0;
    while (m < max_common && a.log.tx(m + 1) == b.log.tx(m + 1)) ++m;

    const Log succ_a = a.log.prefix(m + 1);
    const std::uint64_t e_div = epoch_of(succ_a);
    assert(e_div == epoch_of(b.log.prefix(m + 1)));

    const Log star_a = (epoch_of(a.log) == e_div) ? a.log : ep_prefix(a.log, e_div);
    const Log star_b = (epoch_of(b.log) == e_div) ? b.log : ep_prefix(b.log, e_div);
    assert(!ledger::consistent(star_a, star_b));
    assert(validators_of(star_a) == validators_of(star_b));

    const Certificate& cert_a = a.certs.at(e_div);
    const Certificate& cert_b = b.certs.at(e_div);
    const StakeTable& table = epoch_genesis_table(a.log, e_div - 1);
    const IdentifierSet validators = validators_of(star_a);

    GuiltReport report;
    report.divergence_epoch = e_div;
    for (const auto& [id, sig_a] : cert_a.signatures) {
        auto it_b = cert_b.signatures.find(id);
        if (it_b == cert_b.signatures.end()) continue;
        if (validators.count(id) == 0) continue;
        if (!reg.verify(sig_a, star_a.digest())) continue;
        if (!reg.verify(it_b->second, star_b.digest())) continue;
        report.culprits.insert(id);
        report.evidence.emplace(id, GuiltEvidence{sig_a, it_b->second});
        auto st = table.find(id);
        if (st != table.end()) report.stake_weight += st->second;
    }
    return report;
}

}  // namespace posc::crypto
