#pragma once

#include <optional>

#include "posc/certificate.hpp"
#include "posc/ledger.hpp"
#include "posc/perm.hpp"

namespace posc::wire {

using crypto::Certificate;
using crypto::CertificateMap;
using ledger::Log;
using ledger::PermId;
using ledger::StakeModel;
using ledger::Transaction;

/// Envelope kinds on the PoS wire.
///   Inner        - a message of the simulated permissioned instance
///   LogSignature - one validator signature over a candidate log
///   CertifiedLog - a log together with certificates for every epoch it spans
///   FinishTx     - a signed epoch-ending transaction
///   Departure    - a completed epoch's fully certified log (handover gossip)
enum class Kind : std::uint8_t {
    Inner = 0,
    LogSignature = 1,
    CertifiedLog = 2,
    FinishTx = 3,
    Departure = 4,
};

const char* kind_name(Kind k);

/// (sender id, receiver id | GOSSIP, epoch tag, kind, payload). Byte-exact
/// encoding, version 1: the trace format embeds these verbatim.
struct Envelope {
    Identifier sender;
    std::optional<Identifier> receiver;  // nullopt = GOSSIP
    std::uint64_t epoch = 0;
    Kind kind = Kind::Inner;
    Bytes payload;

    bool is_gossip() const { return !receiver.has_value(); }

    void encode(Writer& w) const;
    static Envelope decode(Reader& r);
    Bytes encoded() const;
    std::size_t wire_size() const { return encoded().size(); }
};

struct InnerPayload {
    PermId from = 0;
    PermId to = 0;
    Bytes msg;  // the permissioned protocol's own encoding

    Bytes encoded() const;
    static InnerPayload decode(Reader& r);
};

struct LogSignaturePayload {
    Digest log_digest;
    std::uint32_t log_len = 0;
    std::uint64_t epoch = 0;
    Signature sig;

    Bytes encoded() const;
    static LogSignaturePayload decode(Reader& r);
};

/// Shared by CertifiedLog and Departure envelopes.
struct CertifiedLogPayload {
    Log log;
    CertificateMap certs;

    Bytes encoded() const;
    static CertifiedLogPayload decode(Reader& r, std::shared_ptr<const StakeModel> model);
};

struct FinishTxPayload {
    Transaction tx;

    Bytes encoded() const;
    static FinishTxPayload decode(Reader& r);
};

}  // namespace posc::wire
