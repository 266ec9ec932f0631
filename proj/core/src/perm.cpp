#include "posc/perm.hpp"

#include <algorithm>

namespace posc::perm {

namespace {

class QuitEnhanced final : public PermissionedProtocol {
  public:
    explicit QuitEnhanced(std::shared_ptr<const PermissionedProtocol> inner)
        : inner_(std::move(inner)) {}

    std::string name() const override { return "quit(" + inner_->name() + ")"; }
    std::size_t process_count() const override { return inner_->process_count(); }
    Rational resilience() const override { return inner_->resilience(); }
    bool standard() const override { return false; }

    ProtocolState initial_state(PermId p) const override { return inner_->initial_state(p); }

    TransitionResult transition(const ProtocolState& s, bool waiting,
                                const std::vector<ProtoMsg>& msgs_in,
                                const std::vector<ProtoTx>& txs_in) const override {
        if (s.quit) return {s, {}};  // quit states are absorbing and silent
        if (waiting) return {s, {}};
        bool quit_requested = std::any_of(txs_in.begin(), txs_in.end(),
                                          [](const ProtoTx& t) { return t.is_quit(); });
        if (quit_requested) {
            ProtocolState q;
            q.process = s.process;
            q.log = s.log;  // the log register is preserved, everything else frozen
            q.quit = true;
            return {q, {}};
        }
        return inner_->transition(s, waiting, msgs_in, txs_in);
    }

  private:
    std::shared_ptr<const PermissionedProtocol> inner_;
};

bool equal_as_multiset(std::vector<Digest> a, std::vector<Digest> b) {
    if (a.size() != b.size()) return false;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

std::vector<Digest> digests_of(const std::vector<ProtoMsg>& msgs) {
    std::vector<Digest> out;
    out.reserve(msgs.size());
    for (const auto& m : msgs) out.push_back(m.digest());
    return out;
}

}  // namespace

std::shared_ptr<const PermissionedProtocol> quit_enhance(
    std::shared_ptr<const PermissionedProtocol> p) {
    if (!p->standard()) throw NotStandard{};
    return std::make_shared<QuitEnhanced>(std::move(p));
}

const char* clause_name(Violation::Clause c) {
    switch (c) {
        case Violation::Clause::FaultyBound: return "faulty-bound";
        case Violation::Clause::Composition: return "composition";
        case Violation::Clause::Validity: return "validity";
        case Violation::Clause::GstValidity: return "gst-validity";
        case Violation::Clause::ReceiveValidity: return "receive-validity";
        case Violation::Clause::SendValidity: return "send-validity";
    }
    return "?";
}

bool fragment_well_formed(const Fragment& f, PermId p) {
    if (f.state.process != p) return false;
    for (const auto& m : f.msgs_in)
        if (m.receiver != p) return false;
    for (const auto& t : f.txs_in)
        if (t.process != p) return false;
    for (const auto& m : f.msgs_out)
        if (m.sender != p) return false;
    if (f.waiting && !(f.msgs_in.empty() && f.txs_in.empty() && f.msgs_out.empty())) return false;
    return true;
}

bool validate_fragment(const Fragment& f, const PermissionedProtocol& proto) {
    const PermId p = f.state.process;
    if (!fragment_well_formed(f, p)) return false;
    if (f.slot == 0 && f.state.digest() != proto.initial_state(p).digest()) return false;
    bool has_start = std::any_of(f.txs_in.begin(), f.txs_in.end(),
                                 [](const ProtoTx& t) { return t.is_start(); });
    bool has_quit = std::any_of(f.txs_in.begin(), f.txs_in.end(),
                                [](const ProtoTx& t) { return t.is_quit(); });
    if (has_start && has_quit) return false;
    if (f.state.is_initial()) {
        if (f.waiting) return false;
        // An initial state receives nothing, or exactly one start transaction.
        if (!f.msgs_in.empty()) return false;
        if (!f.txs_in.empty() && !(f.txs_in.size() == 1 && f.txs_in[0].is_start())) return false;
        if (f.txs_in.empty() && !f.msgs_out.empty()) return false;
    }
    auto [next, sent] = proto.transition(f.state, f.waiting, f.msgs_in, f.txs_in);
    (void)next;
    return equal_as_multiset(digests_of(sent), digests_of(f.msgs_out));
}

bool validate_behavior(const Behavior& b, const PermissionedProtocol& proto) {
    std::size_t starts = 0, quits = 0;
    for (std::size_t i = 0; i < b.frags.size(); ++i) {
        const Fragment& f = b.frags[i];
        if (f.slot != i) return false;
        if (f.state.process != b.process) return false;
        for (const auto& t : f.txs_in) {
            starts += t.is_start() ? 1 : 0;
            quits += t.is_quit() ? 1 : 0;
        }
        if (!validate_fragment(f, proto)) return false;
    }
    if (starts > 1 || quits > 1) return false;
    for (std::size_t i = 0; i + 1 < b.frags.size(); ++i) {
        const Fragment& f = b.frags[i];
        auto [next, sent] = proto.transition(f.state, f.waiting, f.msgs_in, f.txs_in);
        (void)sent;
        if (next.digest() != b.frags[i + 1].state.digest()) return false;
    }
    return true;
}

std::vector<Violation> validate_execution(const ExecutionRecord& e,
                                          const PermissionedProtocol& proto) {
    std::vector<Violation> out;
    const auto n = proto.process_count();
    const Rational rho = proto.resilience();

    if (static_cast<std::int64_t>(e.faulty.size()) * rho.den >
        rho.num * static_cast<std::int64_t>(n))
        out.push_back({Violation::Clause::FaultyBound, 0, 0, "faulty set exceeds rho * n"});

    // Composition: every behavior is structurally a behavior of its process,
    // with at most one start and one quit received.
    for (const auto& [p, b] : e.behaviors) {
        std::size_t starts = 0, quits = 0;
        for (std::size_t i = 0; i < b.frags.size(); ++i) {
            const Fragment& f = b.frags[i];
            if (f.slot != i || !fragment_well_formed(f, p)) {
                out.push_back({Violation::Clause::Composition, p, i, "malformed fragment"});
                break;
            }
            for (const auto& t : f.txs_in) {
                starts += t.is_start() ? 1 : 0;
                quits += t.is_quit() ? 1 : 0;
            }
        }
        if (starts > 1 || quits > 1)
            out.push_back(
                {Violation::Clause::Composition, p, 0, "more than one start or quit received"});
    }

    // Validity: correct processes' behaviors replay under the protocol.
    for (const auto& [p, b] : e.behaviors) {
        if (e.faulty.count(p)) continue;
        if (!validate_behavior(b, proto))
            out.push_back({Violation::Clause::Validity, p, 0, "behavior fails replay"});
    }

    // GST-validity: no correct process waits at or after GST.
    for (const auto& [p, b] : e.behaviors) {
        if (e.faulty.count(p)) continue;
        for (std::size_t i = 0; i < b.frags.size(); ++i)
            if (i >= e.gst && b.frags[i].waiting)
                out.push_back({Violation::Clause::GstValidity, p, i, "waiting after GST"});
    }

    // Receive-validity: every received message was sent strictly earlier.
    for (const auto& [p, b] : e.behaviors) {
        for (std::size_t i = 0; i < b.frags.size(); ++i) {
            for (const auto& m : b.frags[i].msgs_in) {
                bool found = false;
                auto it = e.behaviors.find(m.sender);
                if (it != e.behaviors.end()) {
                    const auto& sb = it->second;
                    for (std::size_t j = 0; j < i && j < sb.frags.size() && !found; ++j)
                        for (const auto& sm : sb.frags[j].msgs_out)
                            if (sm == m) {
                                found = true;
                                break;
                            }
                }
                if (!found)
                    out.push_back({Violation::Clause::ReceiveValidity, p, i,
                                   "message received but never sent"});
            }
        }
    }

    // Send-validity: messages sent are received within the delay bound once
    // the horizon permits.
    for (const auto& [p, b] : e.behaviors) {
        for (std::size_t i = 0; i < b.frags.size(); ++i) {
            for (const auto& m : b.frags[i].msgs_out) {
                const std::uint64_t deadline = std::max<std::uint64_t>(i, e.gst) + e.delta_actual;
                if (e.k < deadline) continue;
                bool found = false;
                auto it = e.behaviors.find(m.receiver);
                if (it != e.behaviors.end()) {
                    const auto& rb = it->second;
                    for (std::size_t j = 0; j <= deadline && j < rb.frags.size() && !found; ++j)
                        for (const auto& rm : rb.frags[j].msgs_in)
                            if (rm == m) {
                                found = true;
                                break;
                            }
                }
                if (!found)
                    out.push_back({Violation::Clause::SendValidity, p, i,
                                   "message not delivered within the bound"});
            }
        }
    }

    return out;
}

}  // namespace posc::perm
