#include "posc/wire.hpp"

namespace posc::wire {

namespace {
constexpr std::uint8_t kWireVersion = 1;

void encode_identifier(Writer& w, const Identifier& id) {
    w.var_bytes(id.pubkey);
    w.str(id.alias);
}
Identifier decode_identifier(Reader& r) {
    Identifier id;
    id.pubkey = r.var_bytes();
    id.alias = r.str();
    return id;
}
}  // namespace

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::Inner: return "inner";
        case Kind::LogSignature: return "log-signature";
        case Kind::CertifiedLog: return "certified-log";
        case Kind::FinishTx: return "finish-tx";
        case Kind::Departure: return "departure";
    }
    return "?";
}

void Envelope::encode(Writer& w) const {
    w.u8(kWireVersion);
    encode_identifier(w, sender);
    w.u8(receiver ? 1 : 0);
    if (receiver) encode_identifier(w, *receiver);
    w.u64(epoch);
    w.u8(static_cast<std::uint8_t>(kind));
    w.var_bytes(payload);
}

Envelope Envelope::decode(Reader& r) {
    if (r.u8() != kWireVersion) throw DecodeError("unsupported envelope version");
    Envelope e;
    e.sender = decode_identifier(r);
    if (r.u8() != 0) e.receiver = decode_identifier(r);
    e.epoch = r.u64();
    e.kind = static_cast<Kind>(r.u8());
    e.payload = r.var_bytes();
    return e;
}

Bytes Envelope::encoded() const {
    Writer w;
    encode(w);
    return w.take();
}

Bytes InnerPayload::encoded() const {
    Writer w;
    w.u32(from);
    w.u32(to);
    w.var_bytes(msg);
    return w.take();
}

InnerPayload InnerPayload::decode(Reader& r) {
    InnerPayload p;
    p.from = r.u32();
    p.to = r.u32();
    p.msg = r.var_bytes();
    return p;
}

Bytes LogSignaturePayload::encoded() const {
    Writer w;
    w.digest(log_digest);
    w.u32(log_len);
    w.u64(epoch);
    encode_identifier(w, sig.signer);
    w.digest(sig.subject);
    w.u64(sig.tag);
    w.u8(static_cast<std::uint8_t>(sig.scheme));
    return w.take();
}

LogSignaturePayload LogSignaturePayload::decode(Reader& r) {
    LogSignaturePayload p;
    p.log_digest = r.digest();
    p.log_len = r.u32();
    p.epoch = r.u64();
    p.sig.signer = decode_identifier(r);
    p.sig.subject = r.digest();
    p.sig.tag = r.u64();
    p.sig.scheme = static_cast<SigScheme>(r.u8());
    return p;
}

Bytes CertifiedLogPayload::encoded() const {
    Writer w;
    log.encode(w);
    w.u32(static_cast<std::uint32_t>(certs.size()));
    for (const auto& [e, c] : certs) {
        w.u64(e);
        c.encode(w);
    }
    return w.take();
}

CertifiedLogPayload CertifiedLogPayload::decode(Reader& r,
                                                std::shared_ptr<const StakeModel> model) {
    CertifiedLogPayload p;
    p.log = Log::decode(r, std::move(model));
    auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        auto e = r.u64();
        p.certs.emplace(e, Certificate::decode(r));
    }
    return p;
}

Bytes FinishTxPayload::encoded() const {
    Writer w;
    tx.encode(w);
    return w.take();
}

FinishTxPayload FinishTxPayload::decode(Reader& r) {
    FinishTxPayload p;
    p.tx = Transaction::decode(r);
    return p;
}

}  // namespace posc::wire
