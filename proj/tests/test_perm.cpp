#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "minidrive.hpp"
#include "posc/perm.hpp"
#include "posc/refbft.hpp"

using namespace posc;
using namespace posc::perm;
using posc::ledger::Log;
using posc::ledger::PermId;
using posc::ledger::Rational;
using posc::ledger::StakeModel;
using posc::ledger::StakeTable;
using posc::ledger::Transaction;

namespace {

struct Fixture {
    std::shared_ptr<KeyRegistry> reg = std::make_shared<KeyRegistry>(17);
    std::vector<Identifier> ids;
    Log genesis;
    std::shared_ptr<const PermissionedProtocol> raw;

    explicit Fixture(std::uint32_t n = 4, bool fast = false) {
        StakeTable table;
        for (std::uint32_t i = 0; i < n; ++i) {
            ids.push_back(reg->create("v" + std::to_string(i)));
            table[ids.back()] = 1;
        }
        genesis = Log::genesis(StakeModel::make(table, {1, 3}));
        refbft::RefBftConfig cfg;
        cfg.n = n;
        cfg.view_duration = 8;
        cfg.fast_commit = fast;
        raw = std::make_shared<refbft::RefBftProtocol>(cfg, reg, ids);
    }

    Transaction payload(int i, int issuer = 0) {
        Transaction tx = Transaction::payload_tx(ids[issuer], {static_cast<uint8_t>(i)});
        tx.sign_with(*reg);
        return tx;
    }
};

/// Decorator counting inner transition invocations and checking the wrapper
/// passes states through untouched.
class Probe : public PermissionedProtocol {
  public:
    explicit Probe(std::shared_ptr<const PermissionedProtocol> inner) : inner_(std::move(inner)) {}
    std::string name() const override { return inner_->name(); }
    std::size_t process_count() const override { return inner_->process_count(); }
    Rational resilience() const override { return inner_->resilience(); }
    bool standard() const override { return inner_->standard(); }
    ProtocolState initial_state(PermId p) const override { return inner_->initial_state(p); }
    TransitionResult transition(const ProtocolState& s, bool waiting,
                                const std::vector<ProtoMsg>& m,
                                const std::vector<ProtoTx>& t) const override {
        ++calls;
        last_state_digest = s.digest();
        return inner_->transition(s, waiting, m, t);
    }
    mutable int calls = 0;
    mutable Digest last_state_digest;

  private:
    std::shared_ptr<const PermissionedProtocol> inner_;
};

}  // namespace

TEST_CASE("quit axioms: absorbing, silent, log preserved") {
    Fixture f;
    auto enhanced = quit_enhance(f.raw);
    testutil::MiniNet net(enhanced, 4);
    for (PermId p = 1; p <= 4; ++p) net.feed(p, 0, Transaction::start_tx(f.genesis));
    net.feed_all(1, f.payload(1));
    net.run(12);  // enough for a commit

    Log before = *net.state(1).log;
    CHECK(before.length() > 0);

    // Deliver quit to process 1; later slots must be frozen and silent.
    testutil::MiniNet net2(enhanced, 4);
    for (PermId p = 1; p <= 4; ++p) net2.feed(p, 0, Transaction::start_tx(f.genesis));
    net2.feed_all(1, f.payload(1));
    net2.feed(1, 12, Transaction::quit_tx());
    net2.feed_all(14, f.payload(2));
    net2.run(30);

    const auto& b = net2.behavior(1);
    CHECK(net2.state(1).quit);
    Log frozen = *b.state(13).log;
    for (std::size_t i = 13; i < b.frags.size(); ++i) {
        CHECK(b.frags[i].msgs_out.empty());
        CHECK(b.state(i).quit);
        CHECK(*b.state(i).log == frozen);
    }
    // Other processes keep committing without process 1.
    CHECK(net2.state(2).log->length() > frozen.length());
}

TEST_CASE("quit-free runs of the enhanced protocol match the raw protocol") {
    Fixture f;
    auto probe = std::make_shared<Probe>(f.raw);
    auto enhanced = quit_enhance(probe);

    testutil::MiniNet raw_net(f.raw, 4);
    testutil::MiniNet enh_net(enhanced, 4);
    for (auto* net : {&raw_net, &enh_net}) {
        for (PermId p = 1; p <= 4; ++p) net->feed(p, 0, Transaction::start_tx(f.genesis));
        for (int i = 0; i < 8; ++i) net->feed_all(2 + 3 * i, f.payload(i, i % 4));
        net->wait_at(2, 5);
        net->wait_at(3, 6);
        net->run(50);
    }
    for (PermId p = 1; p <= 4; ++p) {
        const auto& br = raw_net.behavior(p);
        const auto& be = enh_net.behavior(p);
        REQUIRE(br.frags.size() == be.frags.size());
        for (std::size_t i = 0; i < br.frags.size(); ++i) {
            CHECK(br.state(i).digest() == be.state(i).digest());
            REQUIRE(br.frags[i].msgs_out.size() == be.frags[i].msgs_out.size());
            for (std::size_t j = 0; j < br.frags[i].msgs_out.size(); ++j)
                CHECK(br.frags[i].msgs_out[j] == be.frags[i].msgs_out[j]);
        }
    }
    // The wrapper delegated every non-quit step to the inner box.
    CHECK(probe->calls > 0);
}

TEST_CASE("quit_enhance rejects non-standard protocols") {
    Fixture f;
    auto once = quit_enhance(f.raw);
    CHECK_THROWS_AS(quit_enhance(once), NotStandard);
}

TEST_CASE("closed box: the wrapper never steps the inner protocol on quit paths") {
    Fixture f;
    auto probe = std::make_shared<Probe>(f.raw);
    auto enhanced = quit_enhance(probe);

    ProtocolState s = enhanced->initial_state(1);
    auto [started, m0] =
        enhanced->transition(s, false, {}, {ProtoTx{1, Transaction::start_tx(f.genesis)}});
    int calls_after_start = probe->calls;

    auto [quitted, m1] = enhanced->transition(started, false, {}, {ProtoTx{1, Transaction::quit_tx()}});
    CHECK(quitted.quit);
    CHECK(m1.empty());
    CHECK(probe->calls == calls_after_start);  // quit handled outside the box

    auto [after, m2] = enhanced->transition(quitted, false, {}, {ProtoTx{1, f.payload(9)}});
    CHECK(after.digest() == quitted.digest());
    CHECK(m2.empty());
    CHECK(probe->calls == calls_after_start);  // absorbing state never reaches the box
}

TEST_CASE("fragment validity") {
    Fixture f;
    auto enhanced = quit_enhance(f.raw);
    testutil::MiniNet net(enhanced, 4);
    for (PermId p = 1; p <= 4; ++p) net.feed(p, 0, Transaction::start_tx(f.genesis));
    net.feed_all(1, f.payload(1));
    net.run(12);

    // Every recorded fragment of a live correct run validates.
    for (PermId p = 1; p <= 4; ++p)
        for (const auto& frag : net.behavior(p).frags) CHECK(validate_fragment(frag, *enhanced));

    // A slot-0 fragment with a non-initial state is invalid.
    Fragment bad0 = net.behavior(1).frags[5];
    bad0.slot = 0;
    CHECK(!validate_fragment(bad0, *enhanced));

    // A waiting fragment with sends is invalid.
    Fragment w;
    w.state = enhanced->initial_state(2);
    w.state.log = f.genesis;
    w.slot = 3;
    w.waiting = true;
    w.msgs_out.push_back(ProtoMsg{2, 1, {1, 2, 3}});
    CHECK(!validate_fragment(w, *enhanced));

    // Start and quit in the same fragment is rejected.
    Fragment sq;
    sq.state = enhanced->initial_state(2);
    sq.slot = 1;
    sq.txs_in = {ProtoTx{2, Transaction::start_tx(f.genesis)}, ProtoTx{2, Transaction::quit_tx()}};
    CHECK(!validate_fragment(sq, *enhanced));
}

TEST_CASE("behavior validity and splicing detection") {
    Fixture f;
    auto enhanced = quit_enhance(f.raw);
    testutil::MiniNet a(enhanced, 4), b(enhanced, 4);
    for (auto* net : {&a, &b}) {
        for (PermId p = 1; p <= 4; ++p) net->feed(p, 0, Transaction::start_tx(f.genesis));
        net->run(0);
    }
    a.feed_all(1, f.payload(1));
    b.feed_all(1, f.payload(2));
    a.run(20);
    b.run(20);

    for (PermId p = 1; p <= 4; ++p) CHECK(validate_behavior(a.behavior(p), *enhanced));

    // Empty behavior with just the initial state is valid.
    Behavior empty;
    empty.process = 1;
    Fragment f0;
    f0.state = enhanced->initial_state(1);
    f0.slot = 0;
    empty.frags.push_back(f0);
    CHECK(validate_behavior(empty, *enhanced));

    // Splice two unrelated behaviors at slot 5: the chain breaks.
    Behavior spliced = a.behavior(1);
    const Behavior& donor = b.behavior(1);
    for (std::size_t i = 5; i < spliced.frags.size(); ++i) spliced.frags[i] = donor.frags[i];
    CHECK(!validate_behavior(spliced, *enhanced));
}

TEST_CASE("execution validation: six guarantees") {
    Fixture f;
    auto enhanced = quit_enhance(f.raw);
    testutil::MiniNet net(enhanced, 4);
    for (PermId p = 1; p <= 4; ++p) net.feed(p, 0, Transaction::start_tx(f.genesis));
    net.feed_all(1, f.payload(1));
    net.run(15);

    ExecutionRecord rec;
    rec.gst = 0;
    rec.delta_actual = 1;
    rec.k = net.slot() - 1;
    for (PermId p = 1; p <= 4; ++p) rec.behaviors[p] = net.behavior(p);

    CHECK(validate_execution(rec, *enhanced).empty());

    // A message received but never sent breaches receive-validity.
    ExecutionRecord bad = rec;
    ProtoMsg ghost{2, 1, {0xde, 0xad}};
    bad.behaviors[1].frags[4].msgs_in.push_back(ghost);
    auto v1 = validate_execution(bad, *enhanced);
    bool saw_recv = false;
    for (const auto& v : v1) saw_recv |= v.clause == Violation::Clause::ReceiveValidity;
    CHECK(saw_recv);

    // An oversized faulty set breaches the resilience bound.
    ExecutionRecord overloaded = rec;
    overloaded.faulty = {1, 2};  // rho * n = 4/3, so 2 > floor allowed
    auto v2 = validate_execution(overloaded, *enhanced);
    bool saw_bound = false;
    for (const auto& v : v2) saw_bound |= v.clause == Violation::Clause::FaultyBound;
    CHECK(saw_bound);

    // Declaring a mid-run waiting slot after GST breaches gst-validity.
    ExecutionRecord drift = rec;
    drift.gst = 0;
    Fragment& fr = drift.behaviors[3].frags[6];
    fr.waiting = true;
    fr.msgs_in.clear();
    fr.txs_in.clear();
    fr.msgs_out.clear();
    auto v3 = validate_execution(drift, *enhanced);
    bool saw_gst = false;
    for (const auto& v : v3) saw_gst |= v.clause == Violation::Clause::GstValidity;
    CHECK(saw_gst);
}
