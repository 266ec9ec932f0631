#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "minidrive.hpp"
#include "posc/refbft.hpp"

using namespace posc;
using namespace posc::refbft;
using posc::ledger::consistent;
using posc::ledger::Log;
using posc::ledger::PermId;
using posc::ledger::StakeModel;
using posc::ledger::StakeTable;
using posc::ledger::Transaction;

namespace {
struct Fixture {
    std::shared_ptr<KeyRegistry> reg = std::make_shared<KeyRegistry>(99);
    std::vector<Identifier> ids;
    Log genesis;
    RefBftConfig cfg;
    std::shared_ptr<const RefBftProtocol> proto;

    explicit Fixture(std::uint32_t n = 4, bool fast = false, bool check_sigs = true) {
        StakeTable table;
        for (std::uint32_t i = 0; i < n; ++i) {
            ids.push_back(reg->create("v" + std::to_string(i)));
            table[ids.back()] = 1;
        }
        genesis = Log::genesis(StakeModel::make(table, {1, 3}));
        cfg.n = n;
        cfg.view_duration = 8;
        cfg.fast_commit = fast;
        cfg.check_tx_signatures = check_sigs;
        proto = std::make_shared<RefBftProtocol>(cfg, reg, ids);
    }

    Transaction payload(int i, int issuer = 0) {
        Transaction tx = Transaction::payload_tx(ids[issuer], {static_cast<uint8_t>(i)});
        tx.sign_with(*reg);
        return tx;
    }

    testutil::MiniNet started_net() {
        testutil::MiniNet net(proto, cfg.n);
        for (PermId p = 1; p <= cfg.n; ++p) net.feed(p, 0, Transaction::start_tx(genesis));
        return net;
    }
};
}  // namespace

TEST_CASE("all-correct: a transaction commits within one view") {
    Fixture f(4);
    auto net = f.started_net();
    net.feed_all(1, f.payload(1));
    net.run(1 + f.cfg.view_duration);
    for (PermId p = 1; p <= 4; ++p) {
        REQUIRE(net.state(p).log.has_value());
        CHECK(net.state(p).log->length() == 1);
    }
}

TEST_CASE("waiting freezes the state and sends nothing") {
    Fixture f(4);
    auto net = f.started_net();
    net.feed_all(1, f.payload(1));
    net.run(3);
    auto before = net.state(2).digest();
    net.wait_at(2, 3);
    net.step();
    CHECK(net.state(2).digest() == before);
    CHECK(net.behavior(2).frags.back().msgs_out.empty());
}

TEST_CASE("progress with f silent processes once a correct leader arrives") {
    Fixture f(4);
    auto net = f.started_net();
    net.silence_from(1, 1);  // leader of (height 0, round 0) is permissioned-id 1
    net.feed_all(2, f.payload(7));
    net.run(4 * f.cfg.view_duration);
    for (PermId p = 2; p <= 4; ++p) CHECK(net.state(p).log->length() == 1);
}

TEST_CASE("logs stay consistent across processes and slots") {
    Fixture f(4);
    auto net = f.started_net();
    for (int i = 0; i < 6; ++i) net.feed_all(1 + 2 * i, f.payload(i, i % 4));
    net.run(70);
    for (PermId p = 1; p <= 4; ++p)
        for (PermId r = 1; r <= 4; ++r)
            CHECK(consistent(*net.state(p).log, *net.state(r).log));
    CHECK(net.state(1).log->length() >= 6);
}

TEST_CASE("identical runs produce identical final states") {
    auto run_once = [] {
        Fixture f(4);
        auto net = f.started_net();
        for (int i = 0; i < 5; ++i) net.feed_all(1 + i, f.payload(i, i % 4));
        net.run(40);
        std::vector<std::string> digests;
        for (PermId p = 1; p <= 4; ++p) digests.push_back(net.state(p).digest().hex());
        return digests;
    };
    CHECK(run_once() == run_once());
}

TEST_CASE("unsigned transactions are rejected unless the lax variant is used") {
    Fixture strict(4, false, true);
    auto net = strict.started_net();
    Transaction unsigned_tx =
        Transaction::payload_tx(strict.ids[0], {0x66});  // never signed
    net.feed_all(1, unsigned_tx);
    net.run(3 * strict.cfg.view_duration);
    for (PermId p = 1; p <= 4; ++p) CHECK(net.state(p).log->length() == 0);

    Fixture lax(4, false, false);
    auto net2 = lax.started_net();
    Transaction unsigned_tx2 = Transaction::payload_tx(lax.ids[0], {0x66});
    net2.feed_all(1, unsigned_tx2);
    net2.run(3 * lax.cfg.view_duration);
    for (PermId p = 1; p <= 4; ++p) CHECK(net2.state(p).log->length() == 1);
}

TEST_CASE("fast commit finalizes without waiting out the view") {
    Fixture f(4, true);
    auto net = f.started_net();
    net.feed_all(1, f.payload(1));
    net.run(6);  // proposal, two vote rounds, local QC assembly
    for (PermId p = 1; p <= 4; ++p) CHECK(net.state(p).log->length() == 1);

    // Default mode holds the decision until the view ends.
    Fixture slow(4, false);
    auto net2 = slow.started_net();
    net2.feed_all(1, slow.payload(1));
    net2.run(6);
    for (PermId p = 1; p <= 4; ++p) CHECK(net2.state(p).log->length() == 0);
}

TEST_CASE("liveness bound formula") {
    RefBftConfig cfg;
    cfg.n = 4;
    cfg.rho = {1, 3};
    cfg.view_duration = 20;  // 4 * delta with delta = 5
    CHECK(cfg.f() == 1);
    CHECK(ref_liveness_bound(cfg) == 60);

    RefBftConfig zero;
    zero.n = 4;
    zero.rho = {0, 1};
    zero.view_duration = 12;
    CHECK(zero.f() == 0);
    CHECK(ref_liveness_bound(zero) == 2 * zero.view_duration);
}

TEST_CASE("message codec round trip") {
    Fixture f(4);
    Vote v;
    v.phase = 2;
    v.height = 3;
    v.round = 1;
    v.value = Digest{1, 2};
    v.voter = 2;
    v.sig = f.reg->sign(f.ids[1], v.subject());

    RefMsg m;
    m.type = RefMsg::Type::Vote;
    m.vote = v;
    Bytes enc = m.encoded();
    Reader r(enc);
    RefMsg back = RefMsg::decode(r);
    CHECK(back.vote.subject() == v.subject());
    CHECK(back.vote.sig.tag == v.sig.tag);

    RefMsg prop;
    prop.type = RefMsg::Type::Proposal;
    prop.proposal.height = 1;
    prop.proposal.round = 0;
    prop.proposal.base_len = 2;
    prop.proposal.parent = Digest{7, 8};
    prop.proposal.batch = {f.payload(1), f.payload(2, 1)};
    prop.proposal.proposer = 2;
    Bytes enc2 = prop.encoded();
    Reader r2(enc2);
    RefMsg back2 = RefMsg::decode(r2);
    CHECK(back2.proposal.batch.size() == 2);
    CHECK(back2.proposal.batch[0] == prop.proposal.batch[0]);
    CHECK(value_digest(1, prop.proposal.parent, back2.proposal.batch) ==
          value_digest(1, prop.proposal.parent, prop.proposal.batch));
}
