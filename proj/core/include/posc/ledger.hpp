#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "posc/bytes.hpp"
#include "posc/identity.hpp"

namespace posc::ledger {

using posc::Bytes;
using posc::Digest;
using posc::Identifier;
using posc::IdentifierSet;
using posc::Signature;

using Stake = std::int64_t;
using StakeTable = std::map<Identifier, Stake>;
using PermId = std::uint32_t;  // permissioned-ids range over [1, T]

struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;
    friend bool operator==(const Rational&, const Rational&) = default;
};

enum class CompletionThreshold : std::uint8_t {
    StrictRho = 0,          // finisher stake strictly greater than rho * T
    QuorumOneMinusRho = 1,  // finisher stake at least (1 - rho) * T
};

/// The execution-wide stake context: genesis distribution, constant total
/// stake, resilience bound and the epoch-completion threshold rule. The
/// distribution of any concrete log is this table folded over the transfer
/// transactions the log contains, so equal logs always yield equal stakes.
struct StakeModel {
    StakeTable genesis_table;
    Stake total = 0;
    Rational rho{1, 3};
    CompletionThreshold threshold = CompletionThreshold::StrictRho;
    std::uint64_t genesis_salt = 0;

    static std::shared_ptr<const StakeModel> make(StakeTable table, Rational rho,
                                                  CompletionThreshold threshold = CompletionThreshold::StrictRho,
                                                  std::uint64_t genesis_salt = 0);

    // Exact rational comparisons; no floating point anywhere near quorums.
    bool meets_completion(Stake finisher_stake) const {
        if (threshold == CompletionThreshold::StrictRho)
            return finisher_stake * rho.den > rho.num * total;
        return meets_certification(finisher_stake);
    }
    bool meets_certification(Stake stake) const {
        return stake * rho.den >= (rho.den - rho.num) * total;
    }
    /// Corrupt stake admissible for an under-threshold adversary: <= rho * T.
    bool within_rho_bound(Stake corrupt_stake) const {
        return corrupt_stake * rho.den <= rho.num * total;
    }
    /// Accountability floor (1 - 2 rho) * T, rounded up to the next integer.
    Stake accountability_floor() const {
        std::int64_t raw_num = (rho.den - 2 * rho.num) * total;
        if (raw_num <= 0) return 0;
        return (raw_num + rho.den - 1) / rho.den;
    }
};

struct LedgerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UndefinedEpoch : LedgerError {
    UndefinedEpoch() : LedgerError("epoch undefined for this log") {}
};
struct UndefinedValidators : LedgerError {
    UndefinedValidators() : LedgerError("validators undefined for this log") {}
};
struct UndefinedPrefix : LedgerError {
    UndefinedPrefix() : LedgerError("no completed prefix for requested epoch") {}
};
struct UndefinedFinishers : LedgerError {
    UndefinedFinishers() : LedgerError("finishers undefined for the genesis log") {}
};
struct InvalidEpochGenesis : LedgerError {
    InvalidEpochGenesis() : LedgerError("map_stake requires a completed log") {}
};

class Log;

/// A transaction. Payload and Finish transactions live inside logs; Start
/// and Quit are the reserved control kinds delivered to simulated
/// permissioned instances and never appear in a log.
struct Transaction {
    enum class Kind : std::uint8_t { Payload = 0, Finish = 1, Start = 2, Quit = 3 };

    Kind kind = Kind::Payload;
    Identifier issuer;
    Bytes payload;                    // opaque unless Kind::Payload
    std::uint64_t finish_epoch = 0;   // meaningful for Kind::Finish
    std::shared_ptr<const Log> start_log;  // attached log, Kind::Start only
    std::optional<Signature> signature;

    static Transaction payload_tx(Identifier issuer, Bytes data);
    /// Payload carrying a stake transfer; the ledger's distribution fold
    /// interprets it. Amount is clamped to the sender's balance.
    static Transaction transfer_tx(Identifier from, Identifier to, Stake amount);
    static Transaction finish_tx(Identifier issuer, std::uint64_t epoch);
    static Transaction start_tx(const Log& genesis);
    static Transaction quit_tx();

    struct TransferView {
        Identifier from;
        Identifier to;
        Stake amount;
    };
    std::optional<TransferView> as_transfer() const;

    /// Digest over content (everything except the signature); the signing
    /// subject and the mempool dedup key.
    Digest content_digest() const;
    /// Digest over the full encoding including the signature; log entries
    /// compare equal iff these match.
    Digest full_digest() const;

    void sign_with(KeyRegistry& reg);
    bool signature_valid(const KeyRegistry& reg) const;

    void encode(Writer& w) const;
    static Transaction decode(Reader& r);
    Bytes encoded() const;

    std::size_t encoded_size() const { return encoded().size(); }

    friend bool operator==(const Transaction& a, const Transaction& b) {
        return a.full_digest() == b.full_digest();
    }
};

namespace detail {
struct LogRep;
}

/// An immutable log: a genesis context plus an ordered list of transactions
/// appended after it. Value-semantic handle; extension produces a new log
/// sharing nothing mutable. The epoch structure (boundaries, validator sets,
/// per-epoch stake snapshots) is computed once per rep at construction, so
/// all derived queries are O(1) afterwards.
class Log {
  public:
    Log() = default;  // null handle; ledger operations reject it

    static Log genesis(std::shared_ptr<const StakeModel> model);

    bool valid() const { return rep_ != nullptr; }
    std::uint32_t length() const;                 // transactions appended after genesis
    const Transaction& tx(std::uint32_t i) const; // 1-based, i in [1, length]
    const std::vector<Transaction>& entries() const;
    Digest genesis_digest() const;
    Digest digest() const;  // digest of the canonical encoding
    const StakeModel& model() const;
    std::shared_ptr<const StakeModel> model_ptr() const;

    Log extend(std::vector<Transaction> txs) const;
    Log extend(Transaction tx) const;
    Log prefix(std::uint32_t len) const;
    Log predecessor() const;  // prefix of length-1; genesis maps to itself

    /// Stake distribution of this log: genesis table folded over transfers.
    Stake stake_of(const Identifier& id) const;
    const StakeTable& distribution() const;

    void encode(Writer& w) const;
    /// Decoding requires the genesis context; the encoded genesis digest is
    /// checked against it.
    static Log decode(Reader& r, std::shared_ptr<const StakeModel> model);
    Bytes encoded() const;

    friend bool operator==(const Log& a, const Log& b);
    friend bool operator!=(const Log& a, const Log& b) { return !(a == b); }

  private:
    friend struct detail::LogRep;
    friend bool extends(const Log&, const Log&);
    friend bool consistent(const Log&, const Log&);
    friend std::uint64_t epoch_of(const Log&);
    friend IdentifierSet validators_of(const Log&);
    friend IdentifierSet current_ids(const Log&);
    friend Log ep_prefix(const Log&, std::uint64_t);
    friend IdentifierSet finishers(const Log&);
    friend bool can_complete(const Log&);
    friend bool completed(const Log&);
    friend std::map<PermId, Identifier> map_stake(const Log&);
    friend const StakeTable& epoch_genesis_table(const Log&, std::uint64_t);

    explicit Log(std::shared_ptr<const detail::LogRep> rep) : rep_(std::move(rep)) {}
    const detail::LogRep& rep() const;

    std::shared_ptr<const detail::LogRep> rep_;
};

// --- The log methods from the epoch machinery -------------------------------
//
// epoch / validators / ep_prefix / completed form one mutual recursion over
// prefixes; all of them are answered from the cached analysis pass.

bool extends(const Log& a, const Log& b);     // a extends b
bool consistent(const Log& a, const Log& b);  // agree on the common prefix
std::uint64_t epoch_of(const Log& l);
IdentifierSet validators_of(const Log& l);     // undefined for the genesis log
IdentifierSet current_ids(const Log& l);       // ids with positive stake under l
Log ep_prefix(const Log& l, std::uint64_t e);  // completed epoch-e prefix, e < epoch_of(l)
IdentifierSet finishers(const Log& l);
bool can_complete(const Log& l);
bool completed(const Log& l);

/// Deterministic permissioned-id assignment for a completed epoch genesis:
/// identifiers in canonical byte order receive consecutive ranges sized by
/// their stake, covering [1, T] exactly.
std::map<PermId, Identifier> map_stake(const Log& l);

/// Stake table of the epoch-e genesis (the table certificates and finisher
/// quorums for epoch e+1 are weighed against). e must be < epoch_of(l) or
/// equal to epoch_of(l) for a completed l.
const StakeTable& epoch_genesis_table(const Log& l, std::uint64_t e);

inline Stake stake_sum(const StakeTable& table, const IdentifierSet& ids) {
    Stake s = 0;
    for (const auto& id : ids) {
        auto it = table.find(id);
        if (it != table.end()) s += it->second;
    }
    return s;
}

}  // namespace posc::ledger
