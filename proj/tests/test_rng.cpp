#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <vector>

#include "fedsim/rng.hpp"

using namespace fedsim;

TEST_CASE("identical keys replay identical sequences") {
    const StreamKey key{0xDEADBEEFCAFEull, 3, 7, StreamPurpose::batch};
    auto a = stream(key);
    auto b = stream(key);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u32() == b.next_u32());
}

TEST_CASE("interleaving other streams does not perturb a stream") {
    const StreamKey key{42, 1, 2, StreamPurpose::quantizer};
    auto reference = stream(key);
    std::vector<std::uint32_t> expected;
    for (int i = 0; i < 64; ++i) expected.push_back(reference.next_u32());

    auto replay = stream(key);
    auto noise = stream({42, 1, 3, StreamPurpose::quantizer});
    for (int i = 0; i < 64; ++i) {
        (void)noise.next_u64();
        CHECK(replay.next_u32() == expected[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("keys differing in one field give disjoint-looking streams") {
    const std::size_t draws = 10000;
    auto collect = [&](const StreamKey& key) {
        auto s = stream(key);
        std::vector<std::uint32_t> out(draws);
        for (auto& x : out) x = s.next_u32();
        return out;
    };
    const StreamKey base{99, 5, 11, StreamPurpose::batch};
    const auto ref = collect(base);

    auto count_collisions = [&](const StreamKey& key) {
        const auto other = collect(key);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < draws; ++i)
            if (other[i] == ref[i]) ++hits;
        return hits;
    };
    StreamKey k1 = base;
    k1.client = 12;
    StreamKey k2 = base;
    k2.purpose = StreamPurpose::quantizer;
    StreamKey k3 = base;
    k3.round = 6;
    StreamKey k4 = base;
    k4.master_seed = 100;
    // positionwise u32 collisions among 10^4 draws: expected ~2e-6
    CHECK(count_collisions(k1) <= 2);
    CHECK(count_collisions(k2) <= 2);
    CHECK(count_collisions(k3) <= 2);
    CHECK(count_collisions(k4) <= 2);
}

TEST_CASE("uniform lies in [0,1) with sane mean") {
    auto s = stream({7, 0, 0, StreamPurpose::init});
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal has sane first two moments") {
    auto s = stream({8, 0, 0, StreamPurpose::init});
    double sum = 0.0, sumsq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        sum += x;
        sumsq += x * x;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("uniform_int respects its bound and is roughly uniform") {
    auto s = stream({9, 0, 0, StreamPurpose::init});
    CHECK_THROWS_AS(s.uniform_int(0), std::invalid_argument);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const auto v = s.uniform_int(7);
        REQUIRE(v < 7);
        ++counts[static_cast<std::size_t>(v)];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("sample_without_replacement basics") {
    auto s = stream({10, 0, 0, StreamPurpose::sampling});
    CHECK_THROWS_AS(s.sample_without_replacement(3, 4), std::invalid_argument);

    auto all = s.sample_without_replacement(5, 5);
    CHECK(all == std::vector<std::uint32_t>{0, 1, 2, 3, 4});

    for (int trial = 0; trial < 200; ++trial) {
        auto subset = s.sample_without_replacement(20, 7);
        REQUIRE(subset.size() == 7);
        std::set<std::uint32_t> uniq(subset.begin(), subset.end());
        CHECK(uniq.size() == 7);
        CHECK(*uniq.rbegin() < 20);
        CHECK(std::is_sorted(subset.begin(), subset.end()));
    }

    auto a = stream({10, 4, 0, StreamPurpose::sampling});
    auto b = stream({10, 4, 0, StreamPurpose::sampling});
    CHECK(a.sample_without_replacement(50, 25) == b.sample_without_replacement(50, 25));
}
