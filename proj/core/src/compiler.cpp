#include "posc/compiler.hpp"

#include <algorithm>
#include <cassert>

namespace posc::compiler {

using crypto::is_fully_certified;
using ledger::completed;
using ledger::current_ids;
using ledger::epoch_of;
using ledger::ep_prefix;
using ledger::extends;
using ledger::map_stake;

CompilerProcess::CompilerProcess(std::string name, std::vector<Identifier> owned,
                                 std::shared_ptr<KeyRegistry> reg, Log genesis,
                                 EpochParams epoch, ProtocolFactory factory)
    : name_(std::move(name)),
      owned_(std::move(owned)),
      reg_(std::move(reg)),
      log_(std::move(genesis)),
      epoch_params_(epoch),
      factory_(std::move(factory)) {
    for (const auto& id : owned_) owned_keys_.insert(id.pubkey);
    certs_[0] = Certificate{};  // the genesis log is certified vacuously
}

Digest CompilerProcess::state_digest() const {
    Hasher h;
    h.feed("compiler-proc");
    h.feed(log_.digest());
    h.feed_u64(e_);
    h.feed_u64(static_cast<std::uint64_t>(timer_));
    h.feed_u64(timer_remaining_);
    h.feed_u64(mempool_.size());
    for (const auto& [perm, m] : machines_) {
        h.feed_u64(perm);
        h.feed(m.state.digest());
    }
    return h.digest();
}

void CompilerProcess::enqueue_mempool(const Transaction& tx) {
    if (tx.kind == Transaction::Kind::Start || tx.kind == Transaction::Kind::Quit)
        return;  // reserved kinds never travel as payloads
    Digest d = tx.content_digest();
    if (adopted_contents_.count(d)) return;
    if (!mempool_set_.insert(d).second) return;
    mempool_.push_back(tx);
}

void CompilerProcess::gossip(StepResult& res, wire::Kind kind, std::uint64_t epoch, Bytes payload,
                             const Identifier& as) {
    wire::Envelope env;
    env.sender = as;
    env.epoch = epoch;
    env.kind = kind;
    env.payload = std::move(payload);
    res.out.push_back(std::move(env));
}

void CompilerProcess::send(StepResult& res, wire::Kind kind, std::uint64_t epoch, Bytes payload,
                           const Identifier& as, const Identifier& to) {
    wire::Envelope env;
    env.sender = as;
    env.receiver = to;
    env.epoch = epoch;
    env.kind = kind;
    env.payload = std::move(payload);
    res.out.push_back(std::move(env));
}

void CompilerProcess::start_simulation(const Log& epoch_genesis, StepResult& res) {
    if (!completed(epoch_genesis)) throw NotCompleted{};
    if (!extends(log_, epoch_genesis)) throw StaleGenesis{};

    id_map_ = map_stake(epoch_genesis);
    e_ = epoch_of(epoch_genesis) + 1;
    machines_.clear();
    epoch_genesis_ = epoch_genesis;
    owned_validating_.clear();

    std::set<PermId> mine;
    for (const auto& [perm, id] : id_map_)
        if (owned_keys_.count(id.pubkey)) mine.insert(perm);

    if (!mine.empty()) {
        proto_ = factory_(epoch_genesis, id_map_);
        for (PermId perm : mine) {
            Machine m;
            m.state = proto_->initial_state(perm);
            machines_.emplace(perm, std::move(m));
        }
        IdentifierSet seen;
        for (const auto& [perm, id] : id_map_)
            if (owned_keys_.count(id.pubkey) && seen.insert(id).second)
                owned_validating_.push_back(id);
        timer_ = Timer::Armed;
        timer_remaining_ = epoch_params_.duration();
    } else {
        proto_ = nullptr;
        timer_ = Timer::Idle;
        timer_remaining_ = 0;
    }
    res.entered_epoch = true;
}

CertificateMap CompilerProcess::certs_for(const Log& l) const {
    (void)l;
    return certs_;
}

void CompilerProcess::handle_envelope(const wire::Envelope& env, StepResult& res) {
    switch (env.kind) {
        case wire::Kind::Inner: {
            wire::InnerPayload p;
            try {
                Reader r(env.payload);
                p = wire::InnerPayload::decode(r);
            } catch (const DecodeError&) {
                ++res.dropped;
                return;
            }
            if (env.epoch != e_ || id_map_.empty()) {
                ++res.dropped;
                return;
            }
            auto to_it = id_map_.find(p.to);
            auto from_it = id_map_.find(p.from);
            if (to_it == id_map_.end() || from_it == id_map_.end() ||
                !owned_keys_.count(to_it->second.pubkey) || from_it->second != env.sender) {
                ++res.dropped;
                return;
            }
            auto m_it = machines_.find(p.to);
            if (m_it == machines_.end()) {
                ++res.dropped;
                return;
            }
            m_it->second.pending.push_back(ProtoMsg{p.from, p.to, p.msg});
            return;
        }
        case wire::Kind::LogSignature: {
            wire::LogSignaturePayload p;
            try {
                Reader r(env.payload);
                p = wire::LogSignaturePayload::decode(r);
            } catch (const DecodeError&) {
                ++res.dropped;
                return;
            }
            if (!reg_->verify(p.sig, p.log_digest)) {
                ++res.dropped;
                return;
            }
            sig_store_[p.log_digest].add(p.sig);
            return;
        }
        case wire::Kind::FinishTx: {
            wire::FinishTxPayload p;
            try {
                Reader r(env.payload);
                p = wire::FinishTxPayload::decode(r);
            } catch (const DecodeError&) {
                ++res.dropped;
                return;
            }
            if (p.tx.kind != Transaction::Kind::Finish || !p.tx.signature_valid(*reg_) ||
                p.tx.finish_epoch != e_) {
                ++res.dropped;
                return;
            }
            enqueue_mempool(p.tx);
            return;
        }
        case wire::Kind::CertifiedLog:
        case wire::Kind::Departure: {
            wire::CertifiedLogPayload p;
            try {
                Reader r(env.payload);
                p = wire::CertifiedLogPayload::decode(r, log_.model_ptr());
            } catch (const DecodeError&) {
                ++res.dropped;
                return;
            }
            if (!is_fully_certified(p.log, p.certs, *reg_)) {
                ++res.dropped;
                return;
            }
            Digest d = p.log.digest();
            content_store_.emplace(d, p.log);
            received_certs_[d] = std::move(p.certs);
            return;
        }
    }
    ++res.dropped;
}

void CompilerProcess::adopt(const Log& l, const CertificateMap& certs, StepResult& res) {
    const std::uint64_t target = epoch_of(l);
    // Record the new log and the certificates backing it.
    for (std::uint32_t i = log_.length() + 1; i <= l.length(); ++i)
        adopted_contents_.insert(l.tx(i).content_digest());
    log_ = l;
    CertificateMap next;
    for (std::uint64_t e = 0; e < target; ++e) next[e] = certs.at(e);
    next[target] = certs.at(target);
    certs_ = std::move(next);

    // Drop mempool entries that just landed in the log.
    std::erase_if(mempool_, [&](const Transaction& tx) {
        Digest d = tx.content_digest();
        if (!adopted_contents_.count(d)) return false;
        mempool_set_.erase(d);
        return true;
    });

    res.adopted = true;

    // Validators re-disseminate adopted logs so every process, including
    // pure listeners, tracks the output log. A completed log is the epoch
    // handover gossip.
    Digest d = l.digest();
    bool is_departure = completed(l);
    if (!owned_validating_.empty() && gossiped_content_.insert(d).second) {
        wire::CertifiedLogPayload payload{log_, certs_};
        gossip(res, is_departure ? wire::Kind::Departure : wire::Kind::CertifiedLog, e_,
               payload.encoded(), owned_validating_.front());
    }

    const std::uint64_t target_epoch = target + (completed(l) ? 1 : 0);
    if (target_epoch > e_) handover_pending_ = true;

    // Prune certification state made stale by the adoption.
    std::erase_if(content_store_,
                  [&](const auto& kv) { return kv.second.length() <= log_.length(); });
    std::erase_if(received_certs_,
                  [&](const auto& kv) { return !content_store_.count(kv.first); });
}

void CompilerProcess::adoption_scan(StepResult& res) {
    for (;;) {
        const Log* best = nullptr;
        const CertificateMap* best_certs = nullptr;
        Digest best_digest;
        CertificateMap assembled;

        for (const auto& [d, content] : content_store_) {
            if (content.length() <= log_.length()) continue;
            if (!extends(content, log_)) continue;
            const CertificateMap* certs = nullptr;
            auto rc = received_certs_.find(d);
            if (rc != received_certs_.end()) {
                certs = &rc->second;
            } else {
                // Assemble from our own chain plus gathered signatures.
                auto sig_it = sig_store_.find(d);
                if (sig_it == sig_store_.end()) continue;
                const std::uint64_t ce = epoch_of(content);
                CertificateMap m;
                bool ok = true;
                for (std::uint64_t e = 0; e < ce; ++e) {
                    auto have = certs_.find(e);
                    if (have == certs_.end()) {
                        ok = false;
                        break;
                    }
                    m[e] = have->second;
                }
                if (!ok) continue;
                m[ce] = sig_it->second;
                if (!is_fully_certified(content, m, *reg_)) continue;
                assembled = std::move(m);
                certs = &assembled;
            }
            if (certs != &assembled && !is_fully_certified(content, *certs, *reg_)) continue;
            if (!best || content.length() > best->length() ||
                (content.length() == best->length() && d < best_digest)) {
                best = &content;
                best_certs = certs;
                best_digest = d;
            }
        }
        if (!best) return;
        Log chosen = *best;
        CertificateMap chosen_certs = *best_certs;
        adopt(chosen, chosen_certs, res);
    }
}

void CompilerProcess::on_instance_output(const Log& produced, StepResult& res) {
    Log candidate = produced;
    if (epoch_of(candidate) > e_) candidate = ep_prefix(candidate, e_);
    if (candidate.length() <= epoch_genesis_.length()) return;
    Digest d = candidate.digest();
    if (!signed_.insert(d).second) return;
    content_store_.emplace(d, candidate);
    for (const auto& id : owned_validating_) {
        Signature sig = crypto::sign_log(*reg_, id, candidate);
        sig_store_[d].add(sig);
        wire::LogSignaturePayload p{d, candidate.length(), e_, sig};
        gossip(res, wire::Kind::LogSignature, e_, p.encoded(), id);
    }
}

StepResult CompilerProcess::step(std::uint64_t slot, const std::vector<wire::Envelope>& received,
                                 const std::vector<Transaction>& env_txs) {
    StepResult res;
    if (!initialized_) {
        initialized_ = true;
        start_simulation(log_, res);
    }

    for (const auto& tx : env_txs) enqueue_mempool(tx);
    for (const auto& env : received) handle_envelope(env, res);

    adoption_scan(res);

    const bool closing = handover_pending_;

    // Epoch timer: one tick per local non-waiting slot; on expiry gossip a
    // signed FINISH per owned validating identifier.
    if (!closing && timer_ == Timer::Armed) {
        if (--timer_remaining_ == 0) {
            timer_ = Timer::Fired;
            for (const auto& id : owned_validating_) {
                Transaction fin = Transaction::finish_tx(id, e_);
                fin.sign_with(*reg_);
                wire::FinishTxPayload p{fin};
                gossip(res, wire::Kind::FinishTx, e_, p.encoded(), id);
                enqueue_mempool(fin);
            }
        }
    }

    // Step the simulated machines. Inputs: this slot's routed messages plus
    // last slot's local loopback, the mempool feed, and start/quit control.
    for (auto& [perm, m] : machines_) {
        if (!m.started && closing) continue;  // never started; dropped below
        std::vector<ProtoMsg> msgs_in;
        std::vector<perm::ProtoTx> txs_in;
        if (!m.started) {
            m.started = true;
            txs_in.push_back(perm::ProtoTx{perm, Transaction::start_tx(epoch_genesis_)});
        } else {
            msgs_in = std::move(m.carry);
            m.carry.clear();
            msgs_in.insert(msgs_in.end(), m.pending.begin(), m.pending.end());
            m.pending.clear();
            for (; m.mempool_cursor < mempool_.size(); ++m.mempool_cursor)
                txs_in.push_back(perm::ProtoTx{perm, mempool_[m.mempool_cursor]});
            if (closing) txs_in.push_back(perm::ProtoTx{perm, Transaction::quit_tx()});
        }
        auto [next, sent] = proto_->transition(m.state, false, msgs_in, txs_in);

        MachineStep rec;
        rec.epoch = e_;
        rec.perm = perm;
        rec.local_slot = m.local_slot;
        rec.msgs_in = msgs_in;
        rec.txs_in = txs_in;
        rec.msgs_out = sent;
        rec.state_digest = next.digest();
        rec.log_digest = next.log ? next.log->digest() : Digest{};
        res.machine_steps.push_back(std::move(rec));

        m.state = next;
        m.local_slot += 1;

        for (const auto& msg : sent) {
            auto to_it = id_map_.find(msg.receiver);
            if (to_it == id_map_.end()) continue;
            if (owned_keys_.count(to_it->second.pubkey)) {
                auto peer = machines_.find(msg.receiver);
                if (peer != machines_.end()) peer->second.carry.push_back(msg);
            } else {
                wire::InnerPayload p{msg.sender, msg.receiver, msg.payload};
                send(res, wire::Kind::Inner, e_, p.encoded(), id_map_.at(msg.sender),
                     to_it->second);
            }
        }

        if (m.state.log && m.state.log->length() > m.last_log_len) {
            m.last_log_len = m.state.log->length();
            on_instance_output(*m.state.log, res);
        }
    }

    if (closing) {
        handover_pending_ = false;
        machines_.clear();
        id_map_.clear();
        proto_ = nullptr;
        timer_ = Timer::Idle;
        Log genesis = completed(log_) ? log_ : ep_prefix(log_, epoch_of(log_) - 1);
        start_simulation(genesis, res);
    }

    (void)slot;
    return res;
}

}  // namespace posc::compiler
