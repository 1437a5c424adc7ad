#include <algorithm>
#include <array>
#include <set>
#include <vector>

#include "doctest.h"
#include "normtown/rng.hpp"

using normtown::Rng;

TEST_CASE("same seed replays the same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    CHECK(same == 0);
}

TEST_CASE("next_double stays in [0,1)") {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        double x = rng.next_double();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("next_below covers every residue of a small bound") {
    Rng rng(3);
    std::set<uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        uint64_t v = rng.next_below(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("uniform_int hits both inclusive ends") {
    Rng rng(11);
    bool lo_hit = false, hi_hit = false;
    for (int i = 0; i < 2000; ++i) {
        int64_t v = rng.uniform_int(-3, 4);
        CHECK(v >= -3);
        CHECK(v <= 4);
        lo_hit |= v == -3;
        hi_hit |= v == 4;
    }
    CHECK(lo_hit);
    CHECK(hi_hit);
}

TEST_CASE("bernoulli extremes are constant") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) CHECK_FALSE(rng.bernoulli(0.0));
    for (int i = 0; i < 100; ++i) CHECK(rng.bernoulli(1.0));
}

TEST_CASE("weighted_index_at picks the bucket holding the point") {
    // The census nationality column in file order; shares sum to 89.9.
    std::vector<double> w{24.8, 22.5, 8.8, 8.2, 6.9, 6.7, 3.6, 2.8, 2.5, 1.7, 1.4};
    CHECK(Rng::weighted_index_at(w, 0.10) == 0);      // inside the first share
    CHECK(Rng::weighted_index_at(w, 24.79) == 0);     // just before the boundary
    CHECK(Rng::weighted_index_at(w, 24.8) == 1);      // boundary belongs to the next bucket
    CHECK(Rng::weighted_index_at(w, 24.8 + 22.5) == 2);
    CHECK(Rng::weighted_index_at(w, 89.89) == 10);    // inside the last share
    CHECK(Rng::weighted_index_at(w, 1e9) == 10);      // clamped to the last bucket
}

TEST_CASE("weighted_index respects zero weights") {
    Rng rng(9);
    std::vector<double> w{0.0, 5.0, 0.0};
    for (int i = 0; i < 200; ++i) CHECK(rng.weighted_index(w) == 1);
}

TEST_CASE("weighted_index frequencies track the weights") {
    Rng rng(13);
    std::vector<double> w{1.0, 3.0};
    int second = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i)
        if (rng.weighted_index(w) == 1) ++second;
    double share = static_cast<double>(second) / n;
    CHECK(share == doctest::Approx(0.75).epsilon(0.03));
}

TEST_CASE("shuffle permutes without loss and replays by seed") {
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    auto w = v;
    Rng a(21);
    a.shuffle(v);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == w);

    auto v2 = w;
    Rng b(21);
    b.shuffle(v2);
    CHECK(v == v2);
}

TEST_CASE("split streams ignore parent consumption") {
    Rng parent(99);
    Rng child_before = parent.split("pass");
    parent.next_u64();
    parent.next_u64();
    Rng child_after = parent.split("pass");
    for (int i = 0; i < 16; ++i) CHECK(child_before.next_u64() == child_after.next_u64());
}

TEST_CASE("split labels that differ in one character produce distinct streams") {
    Rng parent(99);
    Rng a = parent.split("pass_a");
    Rng b = parent.split("pass_b");
    int same = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    CHECK(same == 0);
}
