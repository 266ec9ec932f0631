#include "posc/ledger.hpp"

#include <algorithm>
#include <cassert>

namespace posc::ledger {

namespace {
constexpr std::uint8_t kLogEncodingVersion = 1;
// Payload sub-tags: the first payload byte distinguishes opaque application
// data from the structured stake-transfer form the distribution fold reads.
constexpr std::uint8_t kPayloadOpaque = 0;
constexpr std::uint8_t kPayloadTransfer = 1;

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

std::shared_ptr<const StakeModel> StakeModel::make(StakeTable table, Rational rho,
                                                   CompletionThreshold threshold,
                                                   std::uint64_t genesis_salt) {
    auto m = std::make_shared<StakeModel>();
    m->total = 0;
    for (const auto& [id, s] : table) {
        if (s < 0) throw LedgerError("negative stake in genesis table");
        m->total += s;
    }
    if (m->total <= 0) throw LedgerError("total stake must be positive");
    if (rho.den <= 0 || rho.num < 0 || rho.num >= rho.den)
        throw LedgerError("rho must be a rational in [0, 1)");
    m->genesis_table = std::move(table);
    m->rho = rho;
    m->threshold = threshold;
    m->genesis_salt = genesis_salt;
    return m;
}

// --- Transaction -------------------------------------------------------------

Transaction Transaction::payload_tx(Identifier issuer, Bytes data) {
    Transaction tx;
    tx.kind = Kind::Payload;
    tx.issuer = std::move(issuer);
    Writer w;
    w.u8(kPayloadOpaque);
    w.var_bytes(data);
    tx.payload = w.take();
    return tx;
}

Transaction Transaction::transfer_tx(Identifier from, Identifier to, Stake amount) {
    Transaction tx;
    tx.kind = Kind::Payload;
    tx.issuer = from;
    Writer w;
    w.u8(kPayloadTransfer);
    encode_identifier(w, from);
    encode_identifier(w, to);
    w.u64(static_cast<std::uint64_t>(amount));
    tx.payload = w.take();
    return tx;
}

Transaction Transaction::finish_tx(Identifier issuer, std::uint64_t epoch) {
    Transaction tx;
    tx.kind = Kind::Finish;
    tx.issuer = std::move(issuer);
    tx.finish_epoch = epoch;
    return tx;
}

Transaction Transaction::start_tx(const Log& genesis) {
    Transaction tx;
    tx.kind = Kind::Start;
    tx.start_log = std::make_shared<const Log>(genesis);
    return tx;
}

Transaction Transaction::quit_tx() {
    Transaction tx;
    tx.kind = Kind::Quit;
    return tx;
}

std::optional<Transaction::TransferView> Transaction::as_transfer() const {
    if (kind != Kind::Payload || payload.empty() || payload[0] != kPayloadTransfer)
        return std::nullopt;
    Reader r(payload);
    r.u8();
    TransferView v;
    v.from = decode_identifier(r);
    v.to = decode_identifier(r);
    v.amount = static_cast<Stake>(r.u64());
    return v;
}

namespace {
void encode_tx_content(Writer& w, const Transaction& tx) {
    w.u8(static_cast<std::uint8_t>(tx.kind));
    encode_identifier(w, tx.issuer);
    switch (tx.kind) {
        case Transaction::Kind::Payload:
            w.var_bytes(tx.payload);
            break;
        case Transaction::Kind::Finish:
            w.u64(tx.finish_epoch);
            break;
        case Transaction::Kind::Start: {
            if (!tx.start_log || !tx.start_log->valid())
                throw LedgerError("start transaction without an attached log");
            w.var_bytes(tx.start_log->encoded());
            break;
        }
        case Transaction::Kind::Quit:
            break;
    }
}
}  // namespace

Digest Transaction::content_digest() const {
    Writer w;
    encode_tx_content(w, *this);
    return digest_of(w.buffer());
}

Digest Transaction::full_digest() const {
    return digest_of(encoded());
}

void Transaction::sign_with(KeyRegistry& reg) {
    signature = reg.sign(issuer, content_digest());
}

bool Transaction::signature_valid(const KeyRegistry& reg) const {
    if (!signature) return false;
    if (signature->signer != issuer) return false;
    return reg.verify(*signature, content_digest());
}

void Transaction::encode(Writer& w) const {
    encode_tx_content(w, *this);
    w.u8(signature ? 1 : 0);
    if (signature) {
        encode_identifier(w, signature->signer);
        w.digest(signature->subject);
        w.u64(signature->tag);
        w.u8(static_cast<std::uint8_t>(signature->scheme));
    }
}

Bytes Transaction::encoded() const {
    Writer w;
    encode(w);
    return w.take();
}

Transaction Transaction::decode(Reader& r) {
    Transaction tx;
    tx.kind = static_cast<Kind>(r.u8());
    tx.issuer = decode_identifier(r);
    switch (tx.kind) {
        case Kind::Payload:
            tx.payload = r.var_bytes();
            break;
        case Kind::Finish:
            tx.finish_epoch = r.u64();
            break;
        case Kind::Start:
            // Start transactions carry a full log, which needs a stake
            // context to decode; trace readers handle them separately.
            throw DecodeError("start transactions cannot be decoded without a stake context");
        case Kind::Quit:
            break;
        default:
            throw DecodeError("unknown transaction kind");
    }
    if (r.u8() != 0) {
        Signature sig;
        sig.signer = decode_identifier(r);
        sig.subject = r.digest();
        sig.tag = r.u64();
        sig.scheme = static_cast<SigScheme>(r.u8());
        tx.signature = sig;
    }
    return tx;
}

// --- Log rep and the epoch analysis -----------------------------------------

namespace detail {

struct BoundaryInfo {
    std::uint32_t len = 0;
    IdentifierSet finishers;
    Stake finisher_stake = 0;
};

struct EpochStart {
    std::uint32_t genesis_len = 0;
    StakeTable table;          // stake snapshot at the epoch genesis
    IdentifierSet validators;  // positive-stake ids in that snapshot
};

struct Analysis {
    // boundaries[e] describes the completed epoch-e prefix; [0] is genesis.
    std::vector<BoundaryInfo> boundaries;
    // epochs[e-1] describes epoch e's genesis snapshot, for every epoch that
    // has at least commenced within this log.
    std::vector<EpochStart> epochs;
    StakeTable running;  // distribution after all entries
    // All FINISH issuers seen so far, keyed by the epoch number the
    // transaction names. finishers() is defined over the whole log, so a
    // FINISH recorded before its epoch began still counts once the log
    // reaches that epoch.
    std::map<std::uint64_t, IdentifierSet> finish_issuers;
    IdentifierSet cur_finishers;
    Stake cur_finisher_stake = 0;
};

struct LogRep {
    std::shared_ptr<const StakeModel> model;
    Digest genesis_digest;
    std::vector<Transaction> entries;
    std::vector<Digest> entry_digests;  // full digests, for prefix comparison
    Hasher running_hash;                // over the canonical encoding so far
    Digest digest;
    Analysis analysis;

    static IdentifierSet positive_ids(const StakeTable& t) {
        IdentifierSet out;
        for (const auto& [id, s] : t)
            if (s > 0) out.insert(id);
        return out;
    }

    static std::shared_ptr<LogRep> make_genesis(std::shared_ptr<const StakeModel> model) {
        auto rep = std::make_shared<LogRep>();
        Hasher gh;
        gh.feed("posc-genesis-v1");
        gh.feed_u64(model->genesis_salt);
        gh.feed_u64(static_cast<std::uint64_t>(model->total));
        gh.feed_u64(static_cast<std::uint64_t>(model->rho.num));
        gh.feed_u64(static_cast<std::uint64_t>(model->rho.den));
        gh.feed_u64(static_cast<std::uint64_t>(model->threshold));
        for (const auto& [id, s] : model->genesis_table) {
            gh.feed(id.pubkey);
            gh.feed_u64(static_cast<std::uint64_t>(s));
        }
        rep->genesis_digest = gh.digest();

        rep->running_hash.feed_u64(kLogEncodingVersion);
        rep->running_hash.feed(rep->genesis_digest);
        rep->digest = rep->running_hash.digest();

        auto& a = rep->analysis;
        a.boundaries.push_back(BoundaryInfo{0, {}, 0});
        a.running = model->genesis_table;
        a.epochs.push_back(EpochStart{0, model->genesis_table, positive_ids(model->genesis_table)});
        rep->model = std::move(model);
        return rep;
    }

    void fold(const Transaction& tx) {
        auto& a = analysis;
        if (auto tr = tx.as_transfer()) {
            Stake& from = a.running[tr->from];
            Stake moved = std::min(from, std::max<Stake>(tr->amount, 0));
            from -= moved;
            a.running[tr->to] += moved;
        }
        const std::uint64_t cur_epoch = a.epochs.size();
        if (tx.kind == Transaction::Kind::Finish) {
            a.finish_issuers[tx.finish_epoch].insert(tx.issuer);
            if (tx.finish_epoch == cur_epoch) {
                const EpochStart& ep = a.epochs.back();
                if (ep.validators.count(tx.issuer) > 0 &&
                    a.cur_finishers.insert(tx.issuer).second) {
                    auto it = ep.table.find(tx.issuer);
                    a.cur_finisher_stake += (it == ep.table.end()) ? 0 : it->second;
                }
            }
        }
        // Completion is checked after every entry: an epoch boundary reseeds
        // the finisher set from FINISH transactions already in the log, so a
        // fresh epoch can cross the threshold on a non-FINISH entry.
        if (model->meets_completion(a.cur_finisher_stake)) {
            const auto len = static_cast<std::uint32_t>(entries.size());
            a.boundaries.push_back(BoundaryInfo{len, a.cur_finishers, a.cur_finisher_stake});
            a.epochs.push_back(EpochStart{len, a.running, positive_ids(a.running)});
            const std::uint64_t next_epoch = a.epochs.size();
            const EpochStart& ep = a.epochs.back();
            a.cur_finishers.clear();
            a.cur_finisher_stake = 0;
            auto pre = a.finish_issuers.find(next_epoch);
            if (pre != a.finish_issuers.end()) {
                for (const auto& id : pre->second) {
                    if (ep.validators.count(id) == 0) continue;
                    if (!a.cur_finishers.insert(id).second) continue;
                    auto it = ep.table.find(id);
                    a.cur_finisher_stake += (it == ep.table.end()) ? 0 : it->second;
                }
            }
        }
    }

    void append(Transaction tx) {
        Bytes enc = tx.encoded();
        Writer frame;
        frame.var_bytes(enc);
        running_hash.feed(frame.buffer());
        digest = running_hash.digest();
        entry_digests.push_back(digest_of(enc));
        entries.push_back(std::move(tx));
        fold(entries.back());
    }
};

}  // namespace detail

using detail::LogRep;

Log Log::genesis(std::shared_ptr<const StakeModel> model) {
    return Log(LogRep::make_genesis(std::move(model)));
}

const LogRep& Log::rep() const {
    if (!rep_) throw LedgerError("operation on a null log handle");
    return *rep_;
}

std::uint32_t Log::length() const { return static_cast<std::uint32_t>(rep().entries.size()); }

const Transaction& Log::tx(std::uint32_t i) const {
    const auto& r = rep();
    if (i < 1 || i > r.entries.size()) throw LedgerError("log index out of range");
    return r.entries[i - 1];
}

const std::vector<Transaction>& Log::entries() const { return rep().entries; }

Digest Log::genesis_digest() const { return rep().genesis_digest; }
Digest Log::digest() const { return rep().digest; }
const StakeModel& Log::model() const { return *rep().model; }
std::shared_ptr<const StakeModel> Log::model_ptr() const { return rep().model; }

Log Log::extend(std::vector<Transaction> txs) const {
    const auto& base = rep();
    auto next = std::make_shared<LogRep>(base);
    for (auto& tx : txs) next->append(std::move(tx));
    return Log(std::move(next));
}

Log Log::extend(Transaction tx) const {
    std::vector<Transaction> txs;
    txs.push_back(std::move(tx));
    return extend(std::move(txs));
}

Log Log::prefix(std::uint32_t len) const {
    const auto& r = rep();
    if (len > r.entries.size()) throw LedgerError("prefix longer than log");
    if (len == r.entries.size()) return *this;
    auto p = LogRep::make_genesis(r.model);
    for (std::uint32_t i = 0; i < len; ++i) p->append(r.entries[i]);
    return Log(std::move(p));
}

Log Log::predecessor() const {
    const auto len = length();
    return len == 0 ? *this : prefix(len - 1);
}

Stake Log::stake_of(const Identifier& id) const {
    const auto& t = rep().analysis.running;
    auto it = t.find(id);
    return it == t.end() ? 0 : it->second;
}

const StakeTable& Log::distribution() const { return rep().analysis.running; }

void Log::encode(Writer& w) const {
    const auto& r = rep();
    w.u8(kLogEncodingVersion);
    w.digest(r.genesis_digest);
    w.u32(static_cast<std::uint32_t>(r.entries.size()));
    for (const auto& tx : r.entries) w.var_bytes(tx.encoded());
}

Bytes Log::encoded() const {
    Writer w;
    encode(w);
    return w.take();
}

Log Log::decode(Reader& r, std::shared_ptr<const StakeModel> model) {
    if (r.u8() != kLogEncodingVersion) throw DecodeError("unsupported log encoding version");
    Digest gd = r.digest();
    Log g = genesis(std::move(model));
    if (gd != g.genesis_digest()) throw DecodeError("genesis digest mismatch");
    auto count = r.u32();
    std::vector<Transaction> txs;
    txs.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Bytes frame = r.var_bytes();
        Reader tr(frame);
        txs.push_back(Transaction::decode(tr));
    }
    return g.extend(std::move(txs));
}

bool operator==(const Log& a, const Log& b) {
    if (a.rep_ == b.rep_) return true;
    if (!a.rep_ || !b.rep_) return false;
    return a.digest() == b.digest();
}

// --- Log methods from the epoch machinery ------------------------------------

bool extends(const Log& a, const Log& b) {
    const auto& ra = a.rep();
    const auto& rb = b.rep();
    if (ra.genesis_digest != rb.genesis_digest) return false;
    if (ra.entries.size() < rb.entries.size()) return false;
    for (std::size_t i = 0; i < rb.entries.size(); ++i)
        if (ra.entry_digests[i] != rb.entry_digests[i]) return false;
    return true;
}

bool consistent(const Log& a, const Log& b) {
    return a.length() >= b.length() ? extends(a, b) : extends(b, a);
}

std::uint64_t epoch_of(const Log& l) {
    const auto& r = l.rep();
    const auto len = r.entries.size();
    if (len == 0) return 0;
    const auto& bs = r.analysis.boundaries;
    if (bs.back().len == len) return bs.size() - 1;
    return r.analysis.epochs.size();
}

IdentifierSet validators_of(const Log& l) {
    const auto& r = l.rep();
    if (r.entries.empty()) throw UndefinedValidators{};
    return r.analysis.epochs[epoch_of(l) - 1].validators;
}

IdentifierSet current_ids(const Log& l) {
    IdentifierSet out;
    for (const auto& [id, s] : l.rep().analysis.running)
        if (s > 0) out.insert(id);
    return out;
}

Log ep_prefix(const Log& l, std::uint64_t e) {
    const auto& bs = l.rep().analysis.boundaries;
    if (e >= epoch_of(l)) throw UndefinedPrefix{};
    return l.prefix(bs[e].len);
}

IdentifierSet finishers(const Log& l) {
    const auto& r = l.rep();
    if (r.entries.empty()) throw UndefinedFinishers{};
    if (completed(l)) return r.analysis.boundaries.back().finishers;
    return r.analysis.cur_finishers;
}

bool can_complete(const Log& l) {
    const auto& r = l.rep();
    if (r.entries.empty()) throw UndefinedFinishers{};
    if (completed(l)) return true;
    return r.model->meets_completion(r.analysis.cur_finisher_stake);
}

bool completed(const Log& l) {
    const auto& r = l.rep();
    const auto len = r.entries.size();
    if (len == 0) return true;
    return r.analysis.boundaries.back().len == len;
}

std::map<PermId, Identifier> map_stake(const Log& l) {
    if (!completed(l)) throw InvalidEpochGenesis{};
    std::map<PermId, Identifier> out;
    PermId next = 1;
    // Canonical byte order of identifiers, consecutive ranges sized by stake.
    for (const auto& [id, s] : l.rep().analysis.running)
        for (Stake k = 0; k < s; ++k) out.emplace(next++, id);
    assert(static_cast<Stake>(out.size()) == l.model().total);
    return out;
}

const StakeTable& epoch_genesis_table(const Log& l, std::uint64_t e) {
    const auto& eps = l.rep().analysis.epochs;
    if (e >= eps.size()) throw UndefinedPrefix{};
    return eps[e].table;
}

}  // namespace posc::ledger
