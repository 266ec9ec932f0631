#pragma once

#include <map>
#include <stdexcept>

#include "posc/identity.hpp"
#include "posc/ledger.hpp"

namespace posc::crypto {

using ledger::Log;
using ledger::Stake;
using ledger::StakeModel;

/// A set of validator signatures over one log's canonical encoding; signers
/// are distinct by construction of the map.
struct Certificate {
    Digest subject;  // log digest
    std::map<Identifier, Signature> signatures;

    void add(const Signature& sig);
    IdentifierSet signers() const;

    void encode(Writer& w) const;
    static Certificate decode(Reader& r);
};

/// Certificates for a log and every completed epoch prefix it spans, keyed
/// by epoch. This is what travels with a log in gossip so recipients can
/// re-verify full certification locally.
using CertificateMap = std::map<std::uint64_t, Certificate>;

Signature sign_log(KeyRegistry& reg, const Identifier& id, const Log& l);

/// True iff the certificate's verifying signers lie in validators_of(l) and
/// their stake under the epoch genesis table reaches (1 - rho) * T. The
/// genesis log is certified vacuously (empty certificate accepted).
bool is_certified(const Log& l, const Certificate& c, const KeyRegistry& reg);

/// True iff l is certified by certs[epoch_of(l)] and every completed prefix
/// ep_prefix(l, e) is certified by certs[e].
bool is_fully_certified(const Log& l, const CertificateMap& certs, const KeyRegistry& reg);

struct GuiltError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotInconsistent : GuiltError {
    NotInconsistent() : GuiltError("logs are consistent; no guilt to extract") {}
};
struct NotFullyCertified : GuiltError {
    NotFullyCertified() : GuiltError("evidence log is not fully certified") {}
};

/// One culprit's evidence: two verifying signatures over two inconsistent
/// logs of the same epoch and validator set.
struct GuiltEvidence {
    Signature first;
    Signature second;
};

struct GuiltReport {
    IdentifierSet culprits;
    std::map<Identifier, GuiltEvidence> evidence;
    Stake stake_weight = 0;       // summed under the divergence epoch's genesis table
    std::uint64_t divergence_epoch = 0;
};

struct Evidence {
    Log log;
    CertificateMap certs;
};

/// Accountability extraction following the construction in the consistency
/// violation argument: take the longest common prefix of the two logs, its
/// one-transaction successors fix the divergence epoch, and the signers of
/// both same-epoch conflicting logs are provably faulty.
GuiltReport extract_guilt(const Evidence& a, const Evidence& b, const KeyRegistry& reg);

}  // namespace posc::crypto
