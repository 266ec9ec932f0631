#pragma once

#include <functional>

#include "posc/certificate.hpp"
#include "posc/perm.hpp"
#include "posc/wire.hpp"

namespace posc::compiler {

using crypto::Certificate;
using crypto::CertificateMap;
using ledger::Log;
using ledger::PermId;
using ledger::Transaction;
using perm::PermissionedProtocol;
using perm::ProtoMsg;
using perm::ProtocolState;

struct EpochParams {
    std::uint64_t ell = 0;          // the input protocol's liveness parameter
    std::uint64_t delta_known = 1;  // the known delay bound
    std::uint64_t duration() const { return ell + delta_known; }
};

struct StaleGenesis : std::runtime_error {
    StaleGenesis() : std::runtime_error("epoch genesis does not extend the local log") {}
};
struct NotCompleted : std::runtime_error {
    NotCompleted() : std::runtime_error("epoch genesis must be a completed log") {}
};

/// One permissioned-instance step as recorded by the compiler, for behavior
/// validation and trace output.
struct MachineStep {
    std::uint64_t epoch = 0;
    PermId perm = 0;
    std::uint64_t local_slot = 0;
    std::vector<ProtoMsg> msgs_in;
    std::vector<perm::ProtoTx> txs_in;
    std::vector<ProtoMsg> msgs_out;
    Digest state_digest;  // after the step
    Digest log_digest;    // machine log after the step (zero if absent)
};

struct StepResult {
    std::vector<wire::Envelope> out;
    std::vector<MachineStep> machine_steps;
    bool adopted = false;          // local log changed this slot
    bool entered_epoch = false;    // started a fresh simulation this slot
    std::uint64_t dropped = 0;     // unroutable or stale envelopes
};

/// One process of the compiled PoS protocol: multiplexes the quit-enhanced
/// permissioned instance over the permissioned-ids mapped to its identifiers,
/// issues FINISH transactions on epoch-timer expiry, certifies and adopts
/// produced logs, and hands over across epochs.
class CompilerProcess {
  public:
    using ProtocolFactory = std::function<std::shared_ptr<const PermissionedProtocol>(
        const Log& epoch_genesis, const std::map<PermId, Identifier>& id_map)>;

    CompilerProcess(std::string name, std::vector<Identifier> owned,
                    std::shared_ptr<KeyRegistry> reg, Log genesis, EpochParams epoch,
                    ProtocolFactory factory);

    /// Drives one active, non-waiting timeslot.
    StepResult step(std::uint64_t slot, const std::vector<wire::Envelope>& received,
                    const std::vector<Transaction>& env_txs);

    const Log& local_log() const { return log_; }
    std::uint64_t epoch() const { return e_; }
    bool validator() const { return !machines_.empty(); }
    const std::map<PermId, Identifier>& id_map() const { return id_map_; }
    const CertificateMap& certificates() const { return certs_; }
    const std::string& name() const { return name_; }
    /// Digest of the adoption-relevant state, for trace records.
    Digest state_digest() const;

  private:
    struct Machine {
        ProtocolState state;
        std::uint64_t local_slot = 0;
        bool started = false;
        std::size_t mempool_cursor = 0;
        std::uint32_t last_log_len = 0;
        std::vector<ProtoMsg> pending;  // network deliveries for the next step
        std::vector<ProtoMsg> carry;    // local loopback, delivered one slot later
    };

    void start_simulation(const Log& epoch_genesis, StepResult& out);
    void enqueue_mempool(const Transaction& tx);
    void handle_envelope(const wire::Envelope& env, StepResult& res);
    void adoption_scan(StepResult& res);
    void adopt(const Log& l, const CertificateMap& certs, StepResult& res);
    void on_instance_output(const Log& produced, StepResult& res);
    void gossip(StepResult& res, wire::Kind kind, std::uint64_t epoch, Bytes payload,
                const Identifier& as);
    void send(StepResult& res, wire::Kind kind, std::uint64_t epoch, Bytes payload,
              const Identifier& as, const Identifier& to);
    CertificateMap certs_for(const Log& l) const;

    std::string name_;
    std::vector<Identifier> owned_;
    std::set<Bytes> owned_keys_;
    std::shared_ptr<KeyRegistry> reg_;
    Log log_;
    EpochParams epoch_params_;
    ProtocolFactory factory_;

    bool initialized_ = false;
    std::uint64_t e_ = 0;  // epoch currently simulated
    Log epoch_genesis_;
    std::map<PermId, Identifier> id_map_;
    std::vector<Identifier> owned_validating_;
    std::shared_ptr<const PermissionedProtocol> proto_;
    std::map<PermId, Machine> machines_;

    std::vector<Transaction> mempool_;
    std::set<Digest> mempool_set_;
    std::set<Digest> adopted_contents_;

    enum class Timer { Idle, Armed, Fired };
    Timer timer_ = Timer::Idle;
    std::uint64_t timer_remaining_ = 0;

    // Certification state: signature accumulation per candidate digest,
    // candidate contents, and the certificates backing the local log.
    std::map<Digest, Certificate> sig_store_;
    std::map<Digest, Log> content_store_;
    std::map<Digest, CertificateMap> received_certs_;
    CertificateMap certs_;  // full certification of log_
    std::set<Digest> signed_;
    std::set<Digest> gossiped_content_;

    bool handover_pending_ = false;
};

}  // namespace posc::compiler
