#pragma once

#include <string>

#include "posc/trace.hpp"

namespace posc::adversary {

using harness::BehaviorKind;

/// Per-process corruption entry. The repertoire targets each preserved
/// property's worst case: equivocation for consistency, maximal delay for
/// liveness, double-signing for accountability.
struct BehaviorSpec {
    BehaviorKind kind = BehaviorKind::Correct;
    std::uint64_t crash_at = 0;     // Crash: silent from this slot on
    std::uint64_t attack_slot = 0;  // DoubleSignLogs: fork fabrication slot
    std::string script;             // Custom: named scripted behavior
};

struct CorruptionPlan {
    std::map<std::uint32_t, BehaviorSpec> corrupt;  // keyed by roster index
    bool over_threshold_expected = false;

    bool is_corrupt(std::uint32_t process) const { return corrupt.count(process) > 0; }
};

/// True iff under every prefix of every correct process's output log the
/// stake held by corrupt identifiers stays within rho * T.
bool check_rho_bound(const harness::Trace& trace);

}  // namespace posc::adversary
