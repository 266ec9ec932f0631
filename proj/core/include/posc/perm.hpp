#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "posc/ledger.hpp"

namespace posc::perm {

using ledger::Log;
using ledger::PermId;
using ledger::Rational;
using ledger::Transaction;

/// A point-to-point message inside one permissioned protocol instance.
/// Broadcast is n sends; the payload is the concrete protocol's encoding.
struct ProtoMsg {
    PermId sender = 0;
    PermId receiver = 0;
    Bytes payload;

    friend bool operator==(const ProtoMsg&, const ProtoMsg&) = default;

    Digest digest() const {
        Hasher h;
        h.feed_u64(sender);
        h.feed_u64(receiver);
        h.feed(payload);
        return h.digest();
    }
    void encode(Writer& w) const {
        w.u32(sender);
        w.u32(receiver);
        w.var_bytes(payload);
    }
    static ProtoMsg decode(Reader& r) {
        ProtoMsg m;
        m.sender = r.u32();
        m.receiver = r.u32();
        m.payload = r.var_bytes();
        return m;
    }
};

/// A transaction as delivered to one permissioned process: the ledger
/// transaction plus its target process.
struct ProtoTx {
    PermId process = 0;
    Transaction body;

    bool is_start() const { return body.kind == Transaction::Kind::Start; }
    bool is_quit() const { return body.kind == Transaction::Kind::Quit; }

    Digest digest() const {
        Hasher h;
        h.feed_u64(process);
        h.feed(body.full_digest());
        return h.digest();
    }
    friend bool operator==(const ProtoTx& a, const ProtoTx& b) {
        return a.process == b.process && a.body == b.body;
    }
};

/// Protocol-private state; snapshots are immutable and shared.
struct InnerState {
    virtual ~InnerState() = default;
    virtual Digest digest() const = 0;
};

struct ProtocolState {
    PermId process = 0;
    std::optional<Log> log;  // absent exactly in initial states
    bool quit = false;
    std::shared_ptr<const InnerState> inner;

    bool is_initial() const { return !log.has_value() && !quit; }

    Digest digest() const {
        Hasher h;
        h.feed_u64(process);
        h.feed_u64(log ? 1 : 0);
        if (log) h.feed(log->digest());
        h.feed_u64(quit ? 1 : 0);
        if (inner) h.feed(inner->digest());
        return h.digest();
    }
};

using TransitionResult = std::pair<ProtocolState, std::vector<ProtoMsg>>;

/// The closed-box protocol contract. Implementations must be deterministic
/// pure functions of (state, inputs) and honor the transition axioms:
/// waiting freezes the state and sends nothing; initial states ignore
/// everything until a start transaction arrives; quit states (when the
/// protocol is quit-enhanced) are absorbing and silent.
class PermissionedProtocol {
  public:
    virtual ~PermissionedProtocol() = default;

    virtual std::string name() const = 0;
    virtual std::size_t process_count() const = 0;
    virtual Rational resilience() const = 0;
    /// Standard protocols have no quit states or quit transactions in their
    /// alphabets; quit_enhance() adds them without touching the inner logic.
    virtual bool standard() const { return true; }

    virtual ProtocolState initial_state(PermId p) const = 0;
    virtual TransitionResult transition(const ProtocolState& s, bool waiting,
                                        const std::vector<ProtoMsg>& msgs_in,
                                        const std::vector<ProtoTx>& txs_in) const = 0;
};

struct NotStandard : std::runtime_error {
    NotStandard() : std::runtime_error("protocol already exposes quit kinds") {}
};

/// The quit-enhancement: extends a standard protocol's interface with the
/// quitting transaction and state while invoking the wrapped transition as
/// an opaque box on all non-quit inputs.
std::shared_ptr<const PermissionedProtocol> quit_enhance(
    std::shared_ptr<const PermissionedProtocol> p);

// --- Fragments, behaviors, executions ----------------------------------------

struct Fragment {
    ProtocolState state;  // state at the beginning of the timeslot
    std::uint64_t slot = 0;
    bool waiting = false;
    std::vector<ProtoMsg> msgs_in;
    std::vector<ProtoTx> txs_in;
    std::vector<ProtoMsg> msgs_out;
};

struct Behavior {
    PermId process = 0;
    std::vector<Fragment> frags;  // index == slot

    std::size_t k() const { return frags.empty() ? 0 : frags.size() - 1; }
    const Fragment& fragment(std::size_t i) const { return frags.at(i); }
    const ProtocolState& state(std::size_t i) const { return frags.at(i).state; }
    std::optional<Log> log(std::size_t i) const { return frags.at(i).state.log; }
    bool quit(std::size_t i) const { return frags.at(i).state.quit; }
    bool waiting(std::size_t i) const { return frags.at(i).waiting; }
    Behavior prefix(std::size_t i) const {
        Behavior b;
        b.process = process;
        b.frags.assign(frags.begin(), frags.begin() + std::min(i + 1, frags.size()));
        return b;
    }
};

struct ExecutionRecord {
    std::set<PermId> faulty;
    std::uint64_t gst = 0;
    std::uint64_t delta_actual = 1;
    std::uint64_t k = 0;  // recorded slots are 0..k
    std::map<PermId, Behavior> behaviors;
};

struct Violation {
    enum class Clause {
        FaultyBound,
        Composition,
        Validity,
        GstValidity,
        ReceiveValidity,
        SendValidity,
    };
    Clause clause;
    PermId process = 0;
    std::uint64_t slot = 0;
    std::string detail;
};

const char* clause_name(Violation::Clause c);

/// Structural well-formedness of a fragment (a "tau-fragment"): addressing
/// fields match the process and waiting implies empty input/output sets.
bool fragment_well_formed(const Fragment& f, PermId p);

/// Full validity of a fragment against the protocol, including replaying the
/// transition to confirm the recorded sends.
bool validate_fragment(const Fragment& f, const PermissionedProtocol& proto);

/// All fragments valid and consecutive fragments chained by the transition.
bool validate_behavior(const Behavior& b, const PermissionedProtocol& proto);

/// The six execution guarantees; empty result means the record is a valid
/// execution of the protocol.
std::vector<Violation> validate_execution(const ExecutionRecord& e,
                                          const PermissionedProtocol& proto);

}  // namespace posc::perm
