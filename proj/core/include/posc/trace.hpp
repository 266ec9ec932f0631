#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "posc/ledger.hpp"
#include "posc/perm.hpp"
#include "posc/wire.hpp"

namespace posc::harness {

using ledger::Log;
using ledger::PermId;
using ledger::Rational;
using ledger::StakeModel;
using ledger::Transaction;

enum class Mode : std::uint8_t { QuasiPermissionless = 0, Permissioned = 1 };

enum class BehaviorKind : std::uint8_t {
    Correct = 0,
    Crash = 1,
    Silent = 2,
    Equivocate = 3,
    DoubleSignLogs = 4,
    DelayMax = 5,
    Custom = 6,
};

const char* behavior_name(BehaviorKind k);
BehaviorKind behavior_from_name(const std::string& s);

struct TraceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Everything recorded about one simulated execution. The JSONL rendering is
/// deterministic, so reruns of the same scenario compare byte-identical.
struct Trace {
    // --- scenario header -----------------------------------------------------
    std::string scenario;
    std::uint64_t seed = 0;
    Mode mode = Mode::QuasiPermissionless;
    std::uint64_t gst = 0;
    std::uint64_t delta_known = 1;
    std::uint64_t delta_actual = 1;
    std::uint64_t horizon = 0;
    std::uint64_t ell = 0;       // input protocol liveness parameter
    std::uint64_t ell_star = 0;  // 2*Delta + 2*ell
    std::uint64_t ell_or = 0;    // responsiveness parameter (slots), 0 if n/a
    std::uint64_t epoch_duration = 0;  // ell + Delta
    Rational rho{1, 3};
    ledger::Stake total_stake = 0;
    std::uint64_t registry_seed = 0;
    std::shared_ptr<const StakeModel> model;
    // raw scenario config JSON, for replay
    std::string config_json;

    struct ProcessMeta {
        std::string name;
        bool correct = true;
        BehaviorKind behavior = BehaviorKind::Correct;
        std::vector<Identifier> ids;
        std::uint64_t inactive_until = 0;
    };
    std::vector<ProcessMeta> roster;

    // --- per-slot records ------------------------------------------------------
    struct Frag {
        std::uint32_t process = 0;
        std::uint64_t slot = 0;
        bool waiting = false;
        std::vector<std::uint64_t> envs_in;   // envelope ids delivered
        std::vector<Digest> txs_in;           // env transaction content digests
        std::vector<std::uint64_t> envs_out;  // envelope ids sent
        Digest state_digest;
        Digest log_digest;  // local output log after the step
    };
    std::vector<Frag> frags;  // only active slots appear

    struct PFrag {
        std::uint32_t process = 0;  // owning PoS process (or perm process in permissioned mode)
        std::uint64_t epoch = 0;    // 0 in permissioned mode
        PermId perm = 0;
        std::uint64_t local_slot = 0;
        std::uint64_t world_slot = 0;
        bool waiting = false;
        std::vector<perm::ProtoMsg> msgs_in;
        std::vector<perm::ProtoMsg> msgs_out;
        // Transactions are recorded as (kind, content digest | start log digest)
        struct TxRec {
            Transaction::Kind kind;
            Digest ref;  // content digest; for start: the attached log digest
        };
        std::vector<TxRec> txs_in;
        Digest state_digest;
        Digest log_digest;
    };
    std::vector<PFrag> pfrags;

    struct Delivery {
        std::uint32_t process = 0;
        std::uint64_t scheduled = 0;
        std::optional<std::uint64_t> delivered;  // empty if past horizon
    };
    struct EnvRec {
        std::uint64_t id = 0;
        std::uint32_t sender_process = 0;
        std::uint64_t send_slot = 0;
        wire::Envelope env;
        std::vector<Delivery> deliveries;
    };
    std::vector<EnvRec> envelopes;

    struct Injection {
        Transaction tx;
        std::uint64_t slot = 0;
        std::vector<std::pair<std::uint32_t, std::uint64_t>> receipts;  // (process, slot)
    };
    std::vector<Injection> injections;

    struct Adoption {
        std::uint32_t process = 0;
        std::uint64_t slot = 0;
        Digest log_digest;
    };
    std::vector<Adoption> adoptions;

    struct EpochEntry {
        std::uint32_t process = 0;
        std::uint64_t slot = 0;
        std::uint64_t epoch = 0;
        Digest genesis_digest;
        bool validator = false;
    };
    std::vector<EpochEntry> epoch_entries;

    struct MeterRow {
        std::uint32_t process = 0;
        std::uint64_t slot = 0;
        std::uint64_t tx_bits = 0;
        std::uint64_t in_bits = 0;
        std::uint64_t out_bits = 0;
        std::uint64_t overhead_bits = 0;  // certification-layer traffic
    };
    std::vector<MeterRow> meter;

    // Every log referenced by digest anywhere in the trace.
    std::map<Digest, Log> logs;

    std::uint64_t dropped_envelopes = 0;

    // --- helpers ----------------------------------------------------------------
    const Log& log_by_digest(const Digest& d) const;
    /// log(p, tau): the process's output log at the given slot.
    Log local_log_at(std::uint32_t process, std::uint64_t slot) const;
    bool is_correct(std::uint32_t process) const { return roster.at(process).correct; }
    IdentifierSet corrupt_identifiers() const;

    void write_jsonl(std::ostream& os) const;
    static Trace read_jsonl(std::istream& is);
};

}  // namespace posc::harness
