#include <doctest.h>

#include <cmath>
#include <set>

#include "fairload/rng.hpp"

using fairload::rng::Stream;

TEST_CASE("philox streams are deterministic and independent of siblings") {
    Stream a{42};
    Stream b{42};
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    // draws of child 3 do not depend on whether children 0..2 were used
    Stream c3 = Stream{7}.child(3);
    Stream r{7};
    r.child(0).next_u64();
    r.child(1).next_u64();
    Stream c3_again = r.child(3);
    CHECK(c3.next_u64() == c3_again.next_u64());
}

TEST_CASE("distinct keys give distinct output") {
    std::set<uint64_t> seen;
    for (uint64_t k = 0; k < 64; ++k) seen.insert(Stream{k}.next_u64());
    CHECK(seen.size() == 64);
}

TEST_CASE("uniform and normal moments") {
    Stream s{123};
    const int n = 200000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.005);
    CHECK(std::abs(sum2 / n - 1.0 / 3.0) < 0.005);

    double zsum = 0, zsum2 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = s.normal();
        zsum += z;
        zsum2 += z * z;
    }
    CHECK(std::abs(zsum / n) < 0.01);
    CHECK(std::abs(zsum2 / n - 1.0) < 0.02);
}

TEST_CASE("below() stays in range and shuffle is a permutation") {
    Stream s{9};
    for (int i = 0; i < 1000; ++i) CHECK(s.below(7) < 7);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    s.shuffle(v);
    std::set<int> uniq(v.begin(), v.end());
    CHECK(uniq.size() == 10);
}
