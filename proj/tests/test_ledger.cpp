#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle_ledger.hpp"
#include "posc/ledger.hpp"

using namespace posc;
using namespace posc::ledger;

namespace {

// Identifiers aliased A, B, C in canonical byte order, so tests can reason
// about map_stake ranges.
struct Ids {
    KeyRegistry reg{42};
    Identifier a, b, c;
    Ids() {
        std::vector<Identifier> ids = {reg.create("i0"), reg.create("i1"), reg.create("i2")};
        std::sort(ids.begin(), ids.end());
        a = ids[0];
        a.alias = "A";
        b = ids[1];
        b.alias = "B";
        c = ids[2];
        c.alias = "C";
    }
};

Log unit_genesis(const Ids& ids, Rational rho = {1, 3},
                 CompletionThreshold th = CompletionThreshold::StrictRho) {
    StakeTable t{{ids.a, 1}, {ids.b, 1}, {ids.c, 1}};
    return Log::genesis(StakeModel::make(t, rho, th));
}

}  // namespace

TEST_CASE("extends and consistent basics") {
    Ids ids;
    Log g = unit_genesis(ids);
    Transaction t1 = Transaction::payload_tx(ids.a, {'x'});
    Transaction t2 = Transaction::payload_tx(ids.b, {'y'});

    CHECK(extends(g, g));
    CHECK(consistent(g, g));

    Log l1 = g.extend({t1, t2});
    Log l2 = g.extend({t1});
    CHECK(extends(l1, l2));
    CHECK(!extends(l2, l1));
    CHECK(consistent(l1, l2));

    Log l3 = g.extend({t2});
    CHECK(!extends(l2, l3));
    CHECK(!extends(l3, l2));
    CHECK(!consistent(l2, l3));

    Log l4 = g.extend({t1, t2});
    Log l5 = g.extend({t1, Transaction::payload_tx(ids.c, {'z'})});
    CHECK(!consistent(l4, l5));
}

TEST_CASE("consistent iff extends either way, brute force length <= 4") {
    Ids ids;
    Log g = unit_genesis(ids);
    std::vector<Transaction> alphabet = {
        Transaction::payload_tx(ids.a, {'x'}),
        Transaction::finish_tx(ids.a, 1),
        Transaction::finish_tx(ids.b, 1),
    };

    std::vector<Log> logs = {g};
    std::vector<Log> frontier = {g};
    for (int len = 1; len <= 4; ++len) {
        std::vector<Log> next;
        for (const auto& l : frontier)
            for (const auto& t : alphabet) {
                next.push_back(l.extend(t));
                logs.push_back(next.back());
            }
        frontier = std::move(next);
    }

    for (const auto& x : logs)
        for (const auto& y : logs) {
            bool want = oracle::oracle_consistent(x, y);
            CHECK(consistent(x, y) == want);
            CHECK(want == (extends(x, y) || extends(y, x)));
            CHECK(extends(x, y) == oracle::oracle_extends(x, y));
        }
}

TEST_CASE("epoch of genesis is 0 and completion bumps it") {
    Ids ids;
    Log g = unit_genesis(ids);
    CHECK(epoch_of(g) == 0);
    CHECK(completed(g));

    // T=3, rho=1/3, stake 1 each: two FINISH(1) entries cross stake 2 > 1.
    Log l = g.extend({Transaction::finish_tx(ids.a, 1), Transaction::finish_tx(ids.b, 1),
                      Transaction::payload_tx(ids.c, {'p'})});
    CHECK(epoch_of(l) == 2);
    CHECK(epoch_of(l) == oracle::oracle_epoch(l));

    Log two = l.prefix(2);
    CHECK(completed(two));
    CHECK(epoch_of(two) == 1);
    Log three = l.prefix(3);
    CHECK(epoch_of(three) == 2);
    CHECK(!completed(three));

    // The log right after a completed epoch-0 log (the genesis) is epoch 1.
    CHECK(epoch_of(g.extend(Transaction::payload_tx(ids.a, {'q'}))) == 1);
}

TEST_CASE("validators follow completed prefixes") {
    Ids ids;
    Log g = unit_genesis(ids);
    CHECK_THROWS_AS(validators_of(g), UndefinedValidators);

    Log first = g.extend(Transaction::payload_tx(ids.a, {'x'}));
    CHECK(validators_of(first) == current_ids(g));
    CHECK(validators_of(first) == oracle::oracle_validators(first));

    // After a completed epoch whose end state has stake {A:0, B:2, C:2},
    // the next entry's validators are {B, C}.
    StakeTable t{{ids.a, 1}, {ids.b, 2}, {ids.c, 1}};
    Log g2 = Log::genesis(StakeModel::make(t, {1, 4}));
    Log l = g2.extend({Transaction::transfer_tx(ids.a, ids.c, 1),
                       Transaction::finish_tx(ids.b, 1),  // B alone holds 2 > rho*T = 1
                       Transaction::payload_tx(ids.b, {'y'})});
    Log star = l.prefix(2);
    CHECK(completed(star));
    CHECK(star.stake_of(ids.a) == 0);
    CHECK(star.stake_of(ids.b) == 2);
    CHECK(star.stake_of(ids.c) == 2);
    IdentifierSet expect{ids.b, ids.c};
    CHECK(validators_of(l) == expect);
    CHECK(validators_of(l) == oracle::oracle_validators(l));
}

TEST_CASE("all logs within one epoch share one validator set") {
    Ids ids;
    Log g = unit_genesis(ids);
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        Rng r = rng.fork(trial);
        Log l = g;
        std::vector<Identifier> all = {ids.a, ids.b, ids.c};
        for (int i = 0; i < 12; ++i) {
            if (r.chance_percent(40))
                l = l.extend(Transaction::finish_tx(all[r.below(3)],
                                                    epoch_of(l) == 0 ? 1 : epoch_of(l)));
            else
                l = l.extend(Transaction::payload_tx(all[r.below(3)], {static_cast<uint8_t>(i)}));
        }
        // Per-prefix validator sets match the oracle; same-epoch prefixes agree.
        std::map<std::uint64_t, IdentifierSet> seen;
        for (std::uint32_t len = 1; len <= l.length(); ++len) {
            Log p = l.prefix(len);
            auto vs = validators_of(p);
            CHECK(vs == oracle::oracle_validators(p));
            auto [it, fresh] = seen.emplace(epoch_of(p), vs);
            if (!fresh) CHECK(it->second == vs);
        }
    }
}

TEST_CASE("current_ids excludes zero stake and is bounded by T") {
    Ids ids;
    StakeTable t{{ids.a, 3}, {ids.b, 0}};
    Log g = Log::genesis(StakeModel::make(t, {1, 3}));
    CHECK(current_ids(g) == IdentifierSet{ids.a});

    Log u = unit_genesis(ids);
    CHECK(current_ids(u) == IdentifierSet{ids.a, ids.b, ids.c});

    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Rng r = rng.fork(trial);
        Stake total = 1 + static_cast<Stake>(r.below(6));
        StakeTable table;
        Stake left = total;
        std::vector<Identifier> all = {ids.a, ids.b, ids.c};
        for (auto& id : all) {
            Stake s = static_cast<Stake>(r.below(static_cast<std::uint64_t>(left + 1)));
            table[id] = s;
            left -= s;
        }
        table[ids.a] += left;
        Log gg = Log::genesis(StakeModel::make(table, {1, 3}));
        CHECK(static_cast<Stake>(current_ids(gg).size()) <= gg.model().total);
    }
}

TEST_CASE("ep_prefix returns completed prefixes and is idempotent") {
    Ids ids;
    Log g = unit_genesis(ids);
    // Build three epochs: each epoch ends after two FINISH entries.
    Log l = g;
    for (std::uint64_t e = 1; e <= 3; ++e) {
        l = l.extend(Transaction::payload_tx(ids.c, {static_cast<uint8_t>(e)}));
        l = l.extend(Transaction::finish_tx(ids.a, e));
        l = l.extend(Transaction::finish_tx(ids.b, e));
    }
    l = l.extend(Transaction::payload_tx(ids.a, {'t'}));
    CHECK(epoch_of(l) == 4);

    CHECK(ep_prefix(l, 0) == g);
    for (std::uint64_t e = 0; e < 4; ++e) {
        Log p = ep_prefix(l, e);
        CHECK(completed(p));
        CHECK(epoch_of(p) == e);
        CHECK(p == *oracle::oracle_ep_prefix(l, e));
    }
    CHECK(ep_prefix(ep_prefix(l, 3), 1) == ep_prefix(l, 1));
    CHECK(ep_prefix(ep_prefix(l, 2), 1) == ep_prefix(l, 1));
    CHECK_THROWS_AS(ep_prefix(l, 4), UndefinedPrefix);
}

TEST_CASE("finishers: dedup, validator intersection, wrong epoch ignored") {
    Ids ids;
    Log g = unit_genesis(ids);
    CHECK_THROWS_AS(finishers(g), UndefinedFinishers);

    Log no_finish = g.extend(Transaction::payload_tx(ids.a, {'x'}));
    CHECK(finishers(no_finish).empty());

    // Two FINISH(1) entries from the same id count once.
    Log dup = g.extend({Transaction::finish_tx(ids.a, 1), Transaction::finish_tx(ids.a, 1)});
    CHECK(finishers(dup) == IdentifierSet{ids.a});
    CHECK(finishers(dup) == oracle::oracle_finishers(dup));

    // A FINISH from an id with no stake is retained but never counted.
    StakeTable t{{ids.a, 2}, {ids.b, 1}};
    Log g2 = Log::genesis(StakeModel::make(t, {1, 3}));
    Log alien = g2.extend(Transaction::finish_tx(ids.c, 1));
    CHECK(finishers(alien).empty());

    // FINISH tagged with the wrong epoch number is ignored.
    Log wrong = g.extend(Transaction::finish_tx(ids.a, 7));
    CHECK(finishers(wrong).empty());
    CHECK(!can_complete(wrong));
}

TEST_CASE("can_complete sums finisher stake against the threshold") {
    Ids ids;
    Log g = unit_genesis(ids);  // T=3, rho=1/3: need > 1

    Log one = g.extend(Transaction::finish_tx(ids.a, 1));
    CHECK(!can_complete(one));
    CHECK(oracle::oracle_can_complete(one) == can_complete(one));

    Log two = one.extend(Transaction::finish_tx(ids.b, 1));
    CHECK(can_complete(two));
    CHECK(completed(two));
    CHECK(oracle::oracle_can_complete(two));

    // Under the quorum threshold, 2 of 3 suffices as well: 2 >= (1-1/3)*3.
    Log gq = unit_genesis(ids, {1, 3}, CompletionThreshold::QuorumOneMinusRho);
    Log q2 = gq.extend({Transaction::finish_tx(ids.a, 1), Transaction::finish_tx(ids.b, 1)});
    CHECK(completed(q2));
    Log q1 = gq.extend(Transaction::finish_tx(ids.a, 1));
    CHECK(!can_complete(q1));
}

TEST_CASE("completed: at most one completed prefix per epoch") {
    Ids ids;
    Log g = unit_genesis(ids);
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        Rng r = rng.fork(trial);
        Log l = g;
        std::vector<Identifier> all = {ids.a, ids.b, ids.c};
        for (int i = 0; i < 10; ++i) {
            std::uint64_t guess = 1 + r.below(3);
            if (r.chance_percent(50))
                l = l.extend(Transaction::finish_tx(all[r.below(3)], guess));
            else
                l = l.extend(Transaction::payload_tx(all[r.below(3)], {static_cast<uint8_t>(i)}));
        }
        std::map<std::uint64_t, int> completed_per_epoch;
        for (std::uint32_t len = 0; len <= l.length(); ++len) {
            Log p = l.prefix(len);
            bool c = completed(p);
            CHECK(c == oracle::oracle_completed(p));
            if (c && len > 0) completed_per_epoch[epoch_of(p)]++;
        }
        for (const auto& [e, count] : completed_per_epoch) CHECK(count == 1);

        // A log strictly extending a completed same-epoch prefix cannot be
        // completed at that epoch again.
    }
}

TEST_CASE("map_stake assigns consecutive ranges in canonical order") {
    Ids ids;
    StakeTable t{{ids.a, 3}, {ids.b, 1}};
    Log g = Log::genesis(StakeModel::make(t, {1, 4}));
    auto m = map_stake(g);
    REQUIRE(m.size() == 4);
    CHECK(m.at(1) == ids.a);
    CHECK(m.at(2) == ids.a);
    CHECK(m.at(3) == ids.a);
    CHECK(m.at(4) == ids.b);

    StakeTable solo{{ids.b, 5}};
    Log gs = Log::genesis(StakeModel::make(solo, {1, 3}));
    for (const auto& [pid, id] : map_stake(gs)) CHECK(id == ids.b);

    // Preimage sizes equal stakes.
    StakeTable t2{{ids.a, 2}, {ids.b, 0}, {ids.c, 3}};
    Log g2 = Log::genesis(StakeModel::make(t2, {1, 3}));
    std::map<Identifier, int> count;
    for (const auto& [pid, id] : map_stake(g2)) count[id]++;
    CHECK(count[ids.a] == 2);
    CHECK(count.count(ids.b) == 0);
    CHECK(count[ids.c] == 3);

    Log notdone = g2.extend(Transaction::payload_tx(ids.a, {'x'}));
    CHECK_THROWS_AS(map_stake(notdone), InvalidEpochGenesis);
}

TEST_CASE("stake conservation under random transfers") {
    Ids ids;
    Log g = unit_genesis(ids);
    Rng rng(3);
    std::vector<Identifier> all = {ids.a, ids.b, ids.c};
    for (int trial = 0; trial < 25; ++trial) {
        Rng r = rng.fork(trial);
        Log l = g;
        for (int i = 0; i < 15; ++i) {
            auto& from = all[r.below(3)];
            auto& to = all[r.below(3)];
            l = l.extend(Transaction::transfer_tx(from, to, static_cast<Stake>(r.below(4))));
            Stake sum = 0;
            for (const auto& [id, s] : l.distribution()) {
                CHECK(s >= 0);
                sum += s;
            }
            CHECK(sum == l.model().total);
            CHECK(l.distribution() == oracle::oracle_table_of(l));
        }
    }
}

TEST_CASE("map_stake determinism: equal logs yield identical maps") {
    Ids ids;
    Log g = unit_genesis(ids);
    Log a = g.extend({Transaction::finish_tx(ids.a, 1), Transaction::finish_tx(ids.b, 1)});
    Log b = g.extend({Transaction::finish_tx(ids.a, 1), Transaction::finish_tx(ids.b, 1)});
    CHECK(a == b);
    CHECK(map_stake(a) == map_stake(b));
}

TEST_CASE("canonical encoding round trips and is byte exact") {
    Ids ids;
    Log g = unit_genesis(ids);
    Transaction tx = Transaction::payload_tx(ids.a, {'h', 'i'});
    tx.sign_with(ids.reg);
    Log l = g.extend({tx, Transaction::finish_tx(ids.b, 1)});

    Bytes enc = l.encoded();
    Reader r(enc);
    Log back = Log::decode(r, l.model_ptr());
    CHECK(back == l);
    CHECK(back.encoded() == enc);
    CHECK(back.digest() == l.digest());

    // Equal transactions encode byte-identically.
    Transaction t1 = Transaction::finish_tx(ids.b, 1);
    Transaction t2 = Transaction::finish_tx(ids.b, 1);
    CHECK(t1.encoded() == t2.encoded());

    // Transaction round trip preserves the transfer view.
    Transaction tr = Transaction::transfer_tx(ids.a, ids.b, 2);
    Bytes tr_enc = tr.encoded();
    Reader r2(tr_enc);
    Transaction tr2 = Transaction::decode(r2);
    auto v = tr2.as_transfer();
    REQUIRE(v.has_value());
    CHECK(v->from == ids.a);
    CHECK(v->to == ids.b);
    CHECK(v->amount == 2);
}

TEST_CASE("decoding against the wrong stake context fails") {
    Ids ids;
    Log g = unit_genesis(ids);
    Bytes enc = g.extend(Transaction::payload_tx(ids.a, {'x'})).encoded();
    StakeTable other{{ids.a, 2}, {ids.b, 1}};
    auto wrong = StakeModel::make(other, {1, 3});
    Reader r(enc);
    CHECK_THROWS_AS(Log::decode(r, wrong), DecodeError);
}
