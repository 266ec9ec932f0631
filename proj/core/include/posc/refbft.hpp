#pragma once

#include <map>
#include <set>

#include "posc/perm.hpp"

namespace posc::refbft {

using ledger::PermId;
using ledger::Rational;
using ledger::Transaction;
using perm::ProtoMsg;
using perm::ProtoTx;

struct RefBftConfig {
    std::uint32_t n = 4;
    Rational rho{1, 3};             // f = floor(rho * n)
    std::uint32_t view_duration = 20;  // local timeslots per round
    std::uint32_t batch_size = 64;
    bool fast_commit = false;          // commit on the QC instead of at round end
    bool check_tx_signatures = true;   // the lax variant admits unsigned payloads

    std::uint32_t f() const {
        return static_cast<std::uint32_t>((static_cast<std::int64_t>(n) * rho.num) / rho.den);
    }
    std::uint32_t quorum() const { return n - f(); }
    bool valid() const {
        return n >= 1 && n >= 3 * f() + 1 && view_duration >= 1 && batch_size >= 1;
    }
};

/// The advertised liveness parameter: enough post-GST time for the round
/// with the transaction to drain through at most f faulty leaders plus one
/// full correct-leader round.
std::uint64_t ref_liveness_bound(const RefBftConfig& cfg);

/// The advertised optimistic-responsiveness parameter in units of the actual
/// delay: proposal, two vote phases, commit dissemination and one height of
/// pipeline slack.
constexpr std::uint64_t kResponsivenessDeltaFactor = 6;

// Wire messages. Votes are individually signed so relayed quorums (polka
// justifications, commit QCs) stay verifiable.
struct Vote {
    std::uint8_t phase = 1;  // 1 = prepare, 2 = precommit
    std::uint64_t height = 0;
    std::uint32_t round = 0;
    Digest value;
    PermId voter = 0;
    Signature sig;

    Digest subject() const {
        Hasher h;
        h.feed("refbft-vote");
        h.feed_u64(phase);
        h.feed_u64(height);
        h.feed_u64(round);
        h.feed(value);
        return h.digest();
    }
};

struct Proposal {
    std::uint64_t height = 0;
    std::uint32_t round = 0;
    std::uint32_t base_len = 0;
    Digest parent;  // digest of the log the batch extends
    std::vector<Transaction> batch;
    std::vector<Vote> justification;  // polka backing a locked re-proposal
    PermId proposer = 0;
};

struct Commit {
    std::uint64_t height = 0;
    std::uint32_t round = 0;
    std::uint32_t base_len = 0;
    Digest parent;
    std::vector<Transaction> batch;
    std::vector<Vote> qc;  // phase-2 quorum
    PermId committer = 0;
};

struct RoundSync {
    std::uint64_t height = 0;
    std::uint32_t round = 0;
    PermId sender = 0;
};

struct RefMsg {
    enum class Type : std::uint8_t { Proposal = 0, Vote = 1, Commit = 2, RoundSync = 3 };
    Type type = Type::Vote;
    Proposal proposal;
    Vote vote;
    Commit commit;
    RoundSync sync;

    Bytes encoded() const;
    static RefMsg decode(Reader& r);
};

Digest value_digest(std::uint64_t height, const Digest& parent,
                    const std::vector<Transaction>& batch);

class RefBftProtocol final : public perm::PermissionedProtocol {
  public:
    /// signers[x] is the identity whose key authenticates votes of
    /// permissioned-id x (1-based); all entries must be registered in reg.
    RefBftProtocol(RefBftConfig cfg, std::shared_ptr<KeyRegistry> reg,
                   std::vector<Identifier> signers);

    std::string name() const override { return "ref-bft"; }
    std::size_t process_count() const override { return cfg_.n; }
    Rational resilience() const override { return cfg_.rho; }

    perm::ProtocolState initial_state(PermId p) const override;
    perm::TransitionResult transition(const perm::ProtocolState& s, bool waiting,
                                      const std::vector<ProtoMsg>& msgs_in,
                                      const std::vector<ProtoTx>& txs_in) const override;

    const RefBftConfig& config() const { return cfg_; }
    PermId leader(std::uint64_t height, std::uint32_t round) const {
        return static_cast<PermId>((height + round) % cfg_.n) + 1;
    }
    const Identifier& signer_of(PermId p) const { return signers_.at(p); }

  private:
    struct Core;
    RefBftConfig cfg_;
    std::shared_ptr<KeyRegistry> reg_;
    std::map<PermId, Identifier> signers_;
};

}  // namespace posc::refbft
