#include <doctest.h>

#include <random>
#include <set>

#include "hyperscat/partitions.hpp"

using namespace hyperscat::partitions;

TEST_CASE("partition canonical form and display") {
    Partition p(3, {{3}, {2, 1}});
    CHECK(p.str() == "12|3");
    CHECK(p.num_blocks() == 2);
    CHECK(p.block_of(1) == 0);
    CHECK(p.block_of(3) == 1);
    CHECK(p == Partition(3, {{1, 2}, {3}}));

    CHECK_THROWS_AS(Partition(3, {{1, 2}, {2, 3}}), std::invalid_argument);
    CHECK_THROWS_AS(Partition(3, {{1, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(Partition(3, {{1, 2}, {3}, {}}), std::invalid_argument);
}

TEST_CASE("partition counts match Stirling numbers of the second kind") {
    // S(3,2) = 3, S(4,2) = 7, S(4,3) = 6, S(5,3) = 25, S(6,3) = 90
    CHECK(enumerate_partitions(3, 2).size() == 3);
    CHECK(enumerate_partitions(4, 2).size() == 7);
    CHECK(enumerate_partitions(4, 3).size() == 6);
    CHECK(enumerate_partitions(5, 3).size() == 25);
    CHECK(enumerate_partitions(6, 3).size() == 90);

    CHECK(enumerate_partitions(4, 4).size() == 1);
    CHECK(enumerate_partitions(4, 4)[0] == singletons(4));
    CHECK(enumerate_partitions(5, 1).size() == 1);
    CHECK(enumerate_partitions(5, 1)[0] == one_block(5));

    // No duplicates.
    auto ps = enumerate_partitions(5, 3);
    std::set<Partition> uniq(ps.begin(), ps.end());
    CHECK(uniq.size() == ps.size());
}

TEST_CASE("refinement relation basics") {
    Partition fine(4, {{1, 2}, {3}, {4}});
    Partition coarse(4, {{1, 2}, {3, 4}});
    Partition other(4, {{1, 3}, {2}, {4}});
    CHECK(refines(fine, coarse));
    CHECK(!refines(coarse, fine));
    CHECK(!refines(other, coarse));
    CHECK(refines(singletons(4), coarse));
    CHECK(refines(coarse, one_block(4)));
}

TEST_CASE("refinement is a partial order on random partitions") {
    std::mt19937 rng(12345);
    const int n = 6;
    std::vector<Partition> pool;
    for (int k = 1; k <= n; ++k)
        for (const auto& p : enumerate_partitions(n, k)) pool.push_back(p);
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    for (int trial = 0; trial < 400; ++trial) {
        const auto& a = pool[pick(rng)];
        const auto& b = pool[pick(rng)];
        const auto& c = pool[pick(rng)];
        CHECK(refines(a, a));                                             // reflexive
        if (refines(a, b) && refines(b, a)) CHECK(a == b);                // antisymmetric
        if (refines(a, b) && refines(b, c)) CHECK(refines(a, c));         // transitive
    }
}

TEST_CASE("maximal chain counts match the closed-form product") {
    // 2^{1-N} N! (N-1)! for N = 2..6: 1, 3, 18, 180, 2700
    CHECK(chain_count_formula(2) == 1);
    CHECK(chain_count_formula(3) == 3);
    CHECK(chain_count_formula(4) == 18);
    CHECK(chain_count_formula(5) == 180);
    CHECK(chain_count_formula(6) == 2700);

    for (int n = 2; n <= 6; ++n) {
        auto chains = enumerate_chains(n);
        CHECK(static_cast<std::int64_t>(chains.size()) == chain_count_formula(n));
        // All chains distinct.
        std::set<std::string> uniq;
        for (const auto& c : chains) uniq.insert(c.str());
        CHECK(uniq.size() == chains.size());
    }
}

TEST_CASE("chain structure: ranks and stepwise refinement") {
    for (const auto& c : enumerate_chains(4)) {
        CHECK(c.links().size() == 2);
        CHECK(c.level(3).num_blocks() == 3);
        CHECK(c.level(2).num_blocks() == 2);
        CHECK(refines(c.level(3), c.level(2)));
        CHECK(refines(singletons(4), c.level(3)));
    }
    // N=2: empty chain, only the implicit endpoints.
    auto c2 = enumerate_chains(2);
    REQUIRE(c2.size() == 1);
    CHECK(c2[0].links().empty());
}

TEST_CASE("cluster expansion term counts") {
    // N=3, one-block partition: connected parts of itself plus the three
    // pair partitions -> 4 terms.
    auto e3 = connected_part_expansion(one_block(3));
    CHECK(e3.terms().size() == 4);
    for (const auto& [label, coeff] : e3.terms()) {
        CHECK(label.kind == OpLabel::Kind::connected);
        CHECK(coeff == 1);
    }

    // N=4, one-block partition: 7 two-block + 6 three-block + itself = 14.
    auto e4 = connected_part_expansion(one_block(4));
    CHECK(e4.terms().size() == 14);

    CHECK_THROWS_AS(connected_part_expansion(singletons(3)), std::invalid_argument);
}

TEST_CASE("connected-part recursion telescopes to the full operator") {
    for (int n = 3; n <= 5; ++n) {
        for (int l = 1; l <= n - 1; ++l) {
            for (const auto& a : enumerate_partitions(n, l)) {
                FormalSum total;
                const auto expansion = connected_part_expansion(a);
                for (const auto& [label, coeff] : expansion.terms()) {
                    auto full = expand_connected_to_full(label.part);
                    for (const auto& [flabel, fcoeff] : full.terms())
                        total.add(flabel, coeff * fcoeff);
                }
                // Everything cancels except one copy of the full operator at a.
                REQUIRE(total.terms().size() == 1);
                const auto& [only, coeff] = *total.terms().begin();
                CHECK(only.kind == OpLabel::Kind::full);
                CHECK(only.part == a);
                CHECK(coeff == 1);
            }
        }
    }
}
