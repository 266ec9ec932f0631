#include "posc/refbft.hpp"

#include <algorithm>

namespace posc::refbft {

using ledger::Log;
using perm::ProtocolState;
using perm::TransitionResult;

std::uint64_t ref_liveness_bound(const RefBftConfig& cfg) {
    return static_cast<std::uint64_t>(cfg.f() + 2) * cfg.view_duration;
}

Digest value_digest(std::uint64_t height, const Digest& parent,
                    const std::vector<Transaction>& batch) {
    Hasher h;
    h.feed("refbft-value");
    h.feed_u64(height);
    h.feed(parent);
    for (const auto& tx : batch) h.feed(tx.full_digest());
    return h.digest();
}

// --- message codec -----------------------------------------------------------

namespace {

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

void encode_vote(Writer& w, const Vote& v) {
    w.u8(v.phase);
    w.u64(v.height);
    w.u32(v.round);
    w.digest(v.value);
    w.u32(v.voter);
    encode_identifier(w, v.sig.signer);
    w.digest(v.sig.subject);
    w.u64(v.sig.tag);
    w.u8(static_cast<std::uint8_t>(v.sig.scheme));
}

Vote decode_vote(Reader& r) {
    Vote v;
    v.phase = r.u8();
    v.height = r.u64();
    v.round = r.u32();
    v.value = r.digest();
    v.voter = r.u32();
    v.sig.signer = decode_identifier(r);
    v.sig.subject = r.digest();
    v.sig.tag = r.u64();
    v.sig.scheme = static_cast<SigScheme>(r.u8());
    return v;
}

void encode_batch(Writer& w, const std::vector<Transaction>& batch) {
    w.u32(static_cast<std::uint32_t>(batch.size()));
    for (const auto& tx : batch) w.var_bytes(tx.encoded());
}

std::vector<Transaction> decode_batch(Reader& r) {
    auto n = r.u32();
    std::vector<Transaction> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Bytes frame = r.var_bytes();
        Reader tr(frame);
        out.push_back(Transaction::decode(tr));
    }
    return out;
}

void encode_votes(Writer& w, const std::vector<Vote>& vs) {
    w.u32(static_cast<std::uint32_t>(vs.size()));
    for (const auto& v : vs) encode_vote(w, v);
}

std::vector<Vote> decode_votes(Reader& r) {
    auto n = r.u32();
    std::vector<Vote> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(decode_vote(r));
    return out;
}

}  // namespace

Bytes RefMsg::encoded() const {
    Writer w;
    w.u8(static_cast<std::uint8_t>(type));
    switch (type) {
        case Type::Proposal:
            w.u64(proposal.height);
            w.u32(proposal.round);
            w.u32(proposal.base_len);
            w.digest(proposal.parent);
            encode_batch(w, proposal.batch);
            encode_votes(w, proposal.justification);
            w.u32(proposal.proposer);
            break;
        case Type::Vote:
            encode_vote(w, vote);
            break;
        case Type::Commit:
            w.u64(commit.height);
            w.u32(commit.round);
            w.u32(commit.base_len);
            w.digest(commit.parent);
            encode_batch(w, commit.batch);
            encode_votes(w, commit.qc);
            w.u32(commit.committer);
            break;
        case Type::RoundSync:
            w.u64(sync.height);
            w.u32(sync.round);
            w.u32(sync.sender);
            break;
    }
    return w.take();
}

RefMsg RefMsg::decode(Reader& r) {
    RefMsg m;
    m.type = static_cast<Type>(r.u8());
    switch (m.type) {
        case Type::Proposal:
            m.proposal.height = r.u64();
            m.proposal.round = r.u32();
            m.proposal.base_len = r.u32();
            m.proposal.parent = r.digest();
            m.proposal.batch = decode_batch(r);
            m.proposal.justification = decode_votes(r);
            m.proposal.proposer = r.u32();
            break;
        case Type::Vote:
            m.vote = decode_vote(r);
            break;
        case Type::Commit:
            m.commit.height = r.u64();
            m.commit.round = r.u32();
            m.commit.base_len = r.u32();
            m.commit.parent = r.digest();
            m.commit.batch = decode_batch(r);
            m.commit.qc = decode_votes(r);
            m.commit.committer = r.u32();
            break;
        case Type::RoundSync:
            m.sync.height = r.u64();
            m.sync.round = r.u32();
            m.sync.sender = r.u32();
            break;
        default:
            throw DecodeError("unknown refbft message type");
    }
    return m;
}

// --- protocol state ----------------------------------------------------------

struct RefBftProtocol::Core final : perm::InnerState {
    struct Value {
        std::vector<Transaction> batch;
        Digest parent;
        std::uint32_t base_len = 0;
    };
    struct Lock {
        Digest value;
        std::uint32_t round = 0;
    };
    struct PendingCommit {
        std::uint32_t round = 0;
        Digest value;
        std::vector<Vote> qc;
    };

    std::uint64_t height = 0;
    std::uint32_t round = 0;
    std::uint32_t slots_in_round = 0;
    bool proposed = false;
    std::optional<Lock> lock;
    std::optional<PendingCommit> pending_commit;

    std::vector<Transaction> pending;  // arrival order
    std::set<Digest> pending_set;      // content digests
    std::set<Digest> log_contents;     // content digests of log entries

    // Current-height bookkeeping, cleared on commit.
    // votes[phase-1][round][value][voter]
    std::map<std::uint32_t, std::map<Digest, std::map<PermId, Vote>>> votes1, votes2;
    std::set<std::uint32_t> voted1, voted2;
    std::map<std::uint32_t, Proposal> proposals;  // first stored proposal per round
    std::map<Digest, Value> known_values;
    std::map<PermId, std::uint32_t> peer_rounds;
    std::map<std::uint32_t, Commit> commit_buffer;  // keyed by base_len

    Digest digest() const override {
        Hasher h;
        h.feed("refbft-core");
        h.feed_u64(height);
        h.feed_u64(round);
        h.feed_u64(slots_in_round);
        h.feed_u64(proposed ? 1 : 0);
        h.feed_u64(lock ? 1 : 0);
        if (lock) {
            h.feed(lock->value);
            h.feed_u64(lock->round);
        }
        h.feed_u64(pending_commit ? 1 : 0);
        if (pending_commit) {
            h.feed(pending_commit->value);
            h.feed_u64(pending_commit->round);
        }
        for (const auto& tx : pending) h.feed(tx.full_digest());
        auto feed_votes = [&](const auto& vs) {
            for (const auto& [r, by_value] : vs)
                for (const auto& [val, by_voter] : by_value)
                    for (const auto& [voter, vote] : by_voter) {
                        h.feed_u64(r);
                        h.feed(val);
                        h.feed_u64(voter);
                        h.feed_u64(vote.phase);
                    }
        };
        feed_votes(votes1);
        feed_votes(votes2);
        for (auto r : voted1) h.feed_u64(r);
        for (auto r : voted2) h.feed_u64(r);
        for (const auto& [r, p] : proposals) {
            h.feed_u64(r);
            h.feed(value_digest(p.height, p.parent, p.batch));
        }
        for (const auto& [pid, r] : peer_rounds) {
            h.feed_u64(pid);
            h.feed_u64(r);
        }
        for (const auto& [base, c] : commit_buffer) {
            h.feed_u64(base);
            h.feed(value_digest(c.height, c.parent, c.batch));
        }
        return h.digest();
    }
};

RefBftProtocol::RefBftProtocol(RefBftConfig cfg, std::shared_ptr<KeyRegistry> reg,
                               std::vector<Identifier> signers)
    : cfg_(cfg), reg_(std::move(reg)) {
    if (!cfg_.valid()) throw std::invalid_argument("invalid ref-bft config");
    if (signers.size() != cfg_.n)
        throw std::invalid_argument("need one signer identity per permissioned-id");
    for (std::uint32_t i = 0; i < cfg_.n; ++i) signers_.emplace(i + 1, signers[i]);
}

ProtocolState RefBftProtocol::initial_state(PermId p) const {
    ProtocolState s;
    s.process = p;
    return s;
}

namespace {

struct StepCtx {
    // transient working set for one transition
    const RefBftConfig& cfg;
    KeyRegistry& reg;
    const std::map<PermId, Identifier>& signers;
    PermId self;
    std::vector<ProtoMsg> out;
    std::set<std::pair<std::uint32_t, Digest>> dirty;  // freshly touched tallies

    void send_to_all(const Bytes& payload) {
        for (PermId q = 1; q <= cfg.n; ++q) {
            if (q == self) continue;
            out.push_back(ProtoMsg{self, q, payload});
        }
    }
};

}  // namespace

TransitionResult RefBftProtocol::transition(const ProtocolState& s, bool waiting,
                                            const std::vector<ProtoMsg>& msgs_in,
                                            const std::vector<ProtoTx>& txs_in) const {
    if (waiting) return {s, {}};
    if (s.quit) return {s, {}};

    // Initial state: wait for the start transaction carrying the genesis log.
    if (s.is_initial()) {
        const ProtoTx* start = nullptr;
        for (const auto& t : txs_in)
            if (t.is_start()) start = &t;
        if (!start) return {s, {}};
        ProtocolState next = s;
        next.log = *start->body.start_log;
        auto core = std::make_shared<Core>();
        for (const auto& tx : next.log->entries()) core->log_contents.insert(tx.content_digest());
        next.inner = core;
        return {next, {}};
    }

    auto core = std::make_shared<Core>(static_cast<const Core&>(*s.inner));
    Log log = *s.log;
    StepCtx ctx{cfg_, *reg_, signers_, s.process, {}, {}};

    const auto q = cfg_.quorum();
    const auto f = cfg_.f();

    auto verify_vote = [&](const Vote& v) {
        if (v.voter < 1 || v.voter > cfg_.n) return false;
        auto it = signers_.find(v.voter);
        if (it == signers_.end() || it->second != v.sig.signer) return false;
        return reg_->verify(v.sig, v.subject());
    };

    auto ingest_vote = [&](const Vote& v) {
        if (v.height != core->height) return;
        if (!verify_vote(v)) return;
        auto& tally = (v.phase == 1) ? core->votes1 : core->votes2;
        auto& slot = tally[v.round][v.value];
        if (slot.emplace(v.voter, v).second) ctx.dirty.insert({v.round, v.value});
    };

    auto batch_ok = [&](const std::vector<Transaction>& batch) {
        if (batch.empty() || batch.size() > cfg_.batch_size) return false;
        std::set<Digest> seen;
        for (const auto& tx : batch) {
            if (tx.kind != Transaction::Kind::Payload && tx.kind != Transaction::Kind::Finish)
                return false;  // reserved kinds never enter a log
            if (cfg_.check_tx_signatures && !tx.signature_valid(*reg_)) return false;
            Digest d = tx.content_digest();
            if (core->log_contents.count(d) || !seen.insert(d).second) return false;
        }
        return true;
    };

    auto qc_ok = [&](const Commit& c) {
        Digest val = value_digest(c.height, c.parent, c.batch);
        std::set<PermId> voters;
        for (const auto& v : c.qc) {
            if (v.phase != 2 || v.height != c.height || v.round != c.round || v.value != val)
                continue;
            if (!verify_vote(v)) continue;
            voters.insert(v.voter);
        }
        return voters.size() >= q;
    };

    auto broadcast_commit = [&](std::uint32_t round, const Digest& value,
                                const std::vector<Vote>& qc_votes,
                                const Core::Value& val, std::uint64_t height) {
        RefMsg m;
        m.type = RefMsg::Type::Commit;
        m.commit = Commit{height, round, val.base_len, val.parent, val.batch, qc_votes, s.process};
        ctx.send_to_all(m.encoded());
    };

    auto apply_batch = [&](const std::vector<Transaction>& batch) {
        log = log.extend(batch);
        for (const auto& tx : batch) {
            Digest d = tx.content_digest();
            core->log_contents.insert(d);
            if (core->pending_set.erase(d) > 0) {
                auto it = std::find_if(core->pending.begin(), core->pending.end(),
                                       [&](const Transaction& t) { return t.content_digest() == d; });
                if (it != core->pending.end()) core->pending.erase(it);
            }
        }
        core->height += 1;
        core->round = 0;
        core->slots_in_round = 0;
        core->proposed = false;
        core->lock.reset();
        core->pending_commit.reset();
        core->votes1.clear();
        core->votes2.clear();
        core->voted1.clear();
        core->voted2.clear();
        core->proposals.clear();
        core->known_values.clear();
        core->peer_rounds.clear();
        ctx.dirty.clear();
    };

    // --- ingest --------------------------------------------------------------

    for (const auto& t : txs_in) {
        const Transaction& tx = t.body;
        if (tx.kind != Transaction::Kind::Payload && tx.kind != Transaction::Kind::Finish)
            continue;  // start handled above; quit belongs to the enhanced layer
        Digest d = tx.content_digest();
        if (core->log_contents.count(d) || !core->pending_set.insert(d).second) continue;
        core->pending.push_back(tx);
    }

    for (const auto& m : msgs_in) {
        RefMsg msg;
        try {
            Reader r(m.payload);
            msg = RefMsg::decode(r);
        } catch (const DecodeError&) {
            continue;
        }
        switch (msg.type) {
            case RefMsg::Type::Vote:
                ingest_vote(msg.vote);
                break;
            case RefMsg::Type::Proposal: {
                Proposal& p = msg.proposal;
                if (p.proposer != m.sender) break;  // proposer must speak for itself
                if (p.height != core->height) break;
                if (p.proposer != leader(p.height, p.round)) break;
                if (!batch_ok(p.batch)) break;
                for (const auto& v : p.justification) ingest_vote(v);
                Digest val = value_digest(p.height, p.parent, p.batch);
                core->known_values.emplace(val, Core::Value{p.batch, p.parent, p.base_len});
                core->proposals.emplace(p.round, p);  // first proposal per round wins
                break;
            }
            case RefMsg::Type::Commit: {
                Commit& c = msg.commit;
                if (c.base_len < log.length()) break;
                if (!qc_ok(c)) break;
                core->commit_buffer.emplace(c.base_len, c);
                break;
            }
            case RefMsg::Type::RoundSync: {
                if (msg.sync.sender != m.sender) break;
                if (msg.sync.height != core->height) break;
                auto& r = core->peer_rounds[msg.sync.sender];
                r = std::max(r, msg.sync.round);
                break;
            }
        }
    }

    // --- apply buffered commits (catch-up path) -------------------------------

    for (;;) {
        auto it = core->commit_buffer.find(log.length());
        if (it == core->commit_buffer.end()) break;
        const Commit& c = it->second;
        if (c.parent != log.digest() || c.height != core->height || !qc_ok(c) ||
            !batch_ok(c.batch)) {
            core->commit_buffer.erase(it);
            continue;
        }
        std::vector<Transaction> batch = c.batch;
        core->commit_buffer.erase(it);
        apply_batch(batch);
    }
    // prune commits made stale by the applies above
    std::erase_if(core->commit_buffer,
                  [&](const auto& kv) { return kv.first < log.length(); });

    // --- round synchronization -------------------------------------------------

    {
        // Jump to the largest round claimed by at least f+1 peers.
        std::vector<std::uint32_t> claims;
        for (const auto& [pid, r] : core->peer_rounds) claims.push_back(r);
        std::sort(claims.begin(), claims.end(), std::greater<>());
        if (claims.size() >= f + 1) {
            std::uint32_t candidate = claims[f];
            if (candidate > core->round) {
                core->round = candidate;
                core->slots_in_round = 0;
                core->proposed = false;
                RefMsg m;
                m.type = RefMsg::Type::RoundSync;
                m.sync = RoundSync{core->height, core->round, s.process};
                ctx.send_to_all(m.encoded());
            }
        }
    }

    // --- round timer -----------------------------------------------------------

    core->slots_in_round += 1;
    if (core->slots_in_round >= cfg_.view_duration) {
        if (core->pending_commit) {
            // Default mode: the held QC is applied when the view runs out.
            auto pc = *core->pending_commit;
            auto val = core->known_values.at(pc.value);
            std::uint64_t h = core->height;
            std::vector<Transaction> batch = val.batch;
            broadcast_commit(pc.round, pc.value, pc.qc, val, h);
            apply_batch(batch);
        } else {
            core->round += 1;
            core->slots_in_round = 0;
            core->proposed = false;
            RefMsg m;
            m.type = RefMsg::Type::RoundSync;
            m.sync = RoundSync{core->height, core->round, s.process};
            ctx.send_to_all(m.encoded());
        }
    }

    // --- leader duty -------------------------------------------------------------

    if (leader(core->height, core->round) == s.process && !core->proposed) {
        std::optional<Proposal> prop;
        if (core->lock && core->known_values.count(core->lock->value)) {
            const auto& val = core->known_values.at(core->lock->value);
            Proposal p;
            p.height = core->height;
            p.round = core->round;
            p.base_len = val.base_len;
            p.parent = val.parent;
            p.batch = val.batch;
            // Attach the polka that justifies carrying the lock forward.
            auto r_it = core->votes1.find(core->lock->round);
            if (r_it != core->votes1.end()) {
                auto v_it = r_it->second.find(core->lock->value);
                if (v_it != r_it->second.end())
                    for (const auto& [voter, vote] : v_it->second) p.justification.push_back(vote);
            }
            p.proposer = s.process;
            prop = p;
        } else if (!core->lock && !core->pending.empty()) {
            Proposal p;
            p.height = core->height;
            p.round = core->round;
            p.base_len = log.length();
            p.parent = log.digest();
            for (const auto& tx : core->pending) {
                if (p.batch.size() >= cfg_.batch_size) break;
                p.batch.push_back(tx);
            }
            p.proposer = s.process;
            prop = p;
        }
        if (prop) {
            core->proposed = true;
            Digest val = value_digest(prop->height, prop->parent, prop->batch);
            core->known_values.emplace(val, Core::Value{prop->batch, prop->parent, prop->base_len});
            core->proposals.emplace(prop->round, *prop);
            RefMsg m;
            m.type = RefMsg::Type::Proposal;
            m.proposal = *prop;
            ctx.send_to_all(m.encoded());
        }
    }

    // --- phase-1 vote ------------------------------------------------------------

    if (!core->voted1.count(core->round)) {
        auto p_it = core->proposals.find(core->round);
        if (p_it != core->proposals.end()) {
            const Proposal& p = p_it->second;
            if (p.parent == log.digest() && batch_ok(p.batch)) {
                Digest val = value_digest(p.height, p.parent, p.batch);
                bool lock_ok = true;
                if (core->lock && core->lock->value != val) {
                    // A conflicting proposal needs a polka from a later round.
                    lock_ok = false;
                    for (const auto& [r, by_value] : core->votes1) {
                        if (r <= core->lock->round) continue;
                        auto v_it = by_value.find(val);
                        if (v_it != by_value.end() && v_it->second.size() >= q) lock_ok = true;
                    }
                }
                if (lock_ok) {
                    core->voted1.insert(core->round);
                    Vote v;
                    v.phase = 1;
                    v.height = core->height;
                    v.round = core->round;
                    v.value = val;
                    v.voter = s.process;
                    v.sig = reg_->sign(signers_.at(s.process), v.subject());
                    core->votes1[v.round][v.value].emplace(v.voter, v);
                    ctx.dirty.insert({v.round, v.value});
                    RefMsg m;
                    m.type = RefMsg::Type::Vote;
                    m.vote = v;
                    ctx.send_to_all(m.encoded());
                }
            }
        }
    }

    // --- polka: lock and phase-2 vote ---------------------------------------------

    for (const auto& [r, val] : std::set(ctx.dirty)) {
        auto r1 = core->votes1.find(r);
        if (r1 == core->votes1.end()) continue;
        auto v1 = r1->second.find(val);
        if (v1 == r1->second.end() || v1->second.size() < q) continue;
        // Polka at round r for val: adopt as lock if newer.
        if (!core->lock || r >= core->lock->round) core->lock = Core::Lock{val, r};
        if (r == core->round && !core->voted2.count(r)) {
            core->voted2.insert(r);
            Vote v;
            v.phase = 2;
            v.height = core->height;
            v.round = r;
            v.value = val;
            v.voter = s.process;
            v.sig = reg_->sign(signers_.at(s.process), v.subject());
            core->votes2[v.round][v.value].emplace(v.voter, v);
            ctx.dirty.insert({v.round, v.value});
            RefMsg m;
            m.type = RefMsg::Type::Vote;
            m.vote = v;
            ctx.send_to_all(m.encoded());
        }
    }

    // --- QC: decide ----------------------------------------------------------------

    std::optional<Core::PendingCommit> fresh_qc;
    for (const auto& [r, val] : ctx.dirty) {
        auto r2 = core->votes2.find(r);
        if (r2 == core->votes2.end()) continue;
        auto v2 = r2->second.find(val);
        if (v2 == r2->second.end() || v2->second.size() < q) continue;
        if (!core->known_values.count(val)) continue;  // need the batch to apply
        std::vector<Vote> qc_votes;
        for (const auto& [voter, vote] : v2->second) qc_votes.push_back(vote);
        fresh_qc = Core::PendingCommit{r, val, std::move(qc_votes)};
        break;
    }
    if (fresh_qc) {
        const auto& val = core->known_values.at(fresh_qc->value);
        if (val.base_len == log.length() && val.parent == log.digest()) {
            if (cfg_.fast_commit) {
                std::uint64_t h = core->height;
                std::vector<Transaction> batch = val.batch;
                broadcast_commit(fresh_qc->round, fresh_qc->value, fresh_qc->qc, val, h);
                apply_batch(batch);
            } else if (!core->pending_commit) {
                core->pending_commit = *fresh_qc;
            }
        }
    }

    ProtocolState next;
    next.process = s.process;
    next.log = log;
    next.quit = false;
    next.inner = core;
    return {next, std::move(ctx.out)};
}

}  // namespace posc::refbft
