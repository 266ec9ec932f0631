#pragma once

#include <deque>
#include <memory>

#include "posc/adversary.hpp"
#include "posc/compiler.hpp"
#include "posc/refbft.hpp"
#include "posc/trace.hpp"

namespace posc::simnet {

using harness::Mode;
using harness::Trace;
using ledger::Log;
using ledger::StakeModel;
using ledger::Transaction;

enum class DelayPolicy : std::uint8_t { Uniform = 0, MaxDelay = 1, TargetedReorder = 2 };

DelayPolicy delay_policy_from_name(const std::string& s);
const char* delay_policy_name(DelayPolicy p);

struct NetworkParams {
    std::uint64_t gst = 0;
    std::uint64_t delta_known = 1;   // Delta
    std::uint64_t delta_actual = 1;  // delta, 1 <= delta <= Delta
    std::uint64_t horizon = 100;
    DelayPolicy pre_gst = DelayPolicy::TargetedReorder;
    DelayPolicy post_gst = DelayPolicy::Uniform;

    bool valid() const {
        return delta_actual >= 1 && delta_actual <= delta_known && horizon >= 1;
    }
};

struct ProcessSpec {
    std::string name;
    std::vector<Identifier> ids;
    adversary::BehaviorSpec behavior;
    std::uint64_t inactive_until = 0;  // scripted join slot; the QP activity
                                       // clause overrides it when stake demands
};

struct EnvInjection {
    std::uint64_t slot = 0;
    Transaction tx;
};

struct WorldConfig {
    std::string scenario_name = "scenario";
    std::uint64_t seed = 0;
    Mode mode = Mode::QuasiPermissionless;
    NetworkParams net;
    std::uint32_t pre_gst_wait_percent = 0;
    std::shared_ptr<KeyRegistry> registry;
    std::shared_ptr<const StakeModel> model;
    std::vector<ProcessSpec> processes;
    std::vector<EnvInjection> env;
    refbft::RefBftConfig ref;      // inner protocol parameters
    std::uint64_t ell = 0;         // liveness parameter handed to the compiler
    std::uint64_t ell_or = 0;      // responsiveness parameter (slots), 0 = n/a
    // Permissioned mode:
    bool wrap_quit = true;  // run quit(ref-bft) instead of bare ref-bft
    std::vector<std::pair<std::uint64_t, std::uint32_t>> quit_injections;  // (slot, process)
    std::string config_json;
};

/// The deterministic discrete-timeslot kernel. One world is single-owner and
/// stepped sequentially; distinct worlds are fully independent.
class World {
  public:
    explicit World(WorldConfig cfg);
    ~World();

    void run();  // advance to the horizon
    void advance_slot();
    std::uint64_t slot() const { return slot_; }

    Trace take_trace();
    const Trace& trace() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::uint64_t slot_ = 0;
};

/// Post-hoc check over a trace: every gossip reaches every eventually-active
/// recipient by max(send, GST) + delta regardless of the sender's later
/// activity. Returns human-readable violation descriptions.
std::vector<std::string> departure_durability(const Trace& trace);

/// Post-hoc check of the QP activity clause: whenever a correct process holds
/// positive stake under some correct process's output log, it is active.
std::vector<std::string> check_qp_activity(const Trace& trace);

}  // namespace posc::simnet
