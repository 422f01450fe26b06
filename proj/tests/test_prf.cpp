#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "mimicry/prf.hpp"

using namespace mimicry;

TEST_CASE("mix64 matches the published splitmix64 sequence") {
    // First outputs of splitmix64 seeded with 0, 1: reference values computed
    // with an independent big-integer implementation of the finalizer.
    CHECK(mix64(0) == 0xE220A8397B1DCDAFull);
    CHECK(mix64(1) == 0x910A2DEC89025CC1ull);
    CHECK(mix64(5) == 0x63033B0CA389C35Aull);
    CHECK(mix64(42) == 0xBDD732262FEB6E95ull);
    CHECK(mix64(0xFFFFFFFFFFFFFFFFull) == 0xE4D971771B652C20ull);
}

TEST_CASE("mix64 wraps modulo 2^64") {
    // x and x + 2^64 are the same uint64 input; adding the golden constant
    // near the top of the range must wrap, not saturate.
    const std::uint64_t near_top = 0xFFFFFFFFFFFFFFFFull - 3;
    CHECK(mix64(near_top) == mix64(near_top));  // deterministic
    CHECK(mix64(near_top) != mix64(near_top - 1));
}

TEST_CASE("context_seed folds the window in order") {
    SecretKey zero{0};
    CHECK(context_seed(zero, {}, 0) == 0);  // empty fold returns the key

    const TokenId one_tok[] = {0};
    CHECK(context_seed(zero, one_tok, 1) == mix64(0 ^ mix64(1)));

    const TokenId window[] = {3, 1, 4, 1};
    CHECK(context_seed(SecretKey{0xDEADBEEFull}, window, 4) == 0xDAA69A0F39077686ull);

    CHECK_THROWS_AS(context_seed(zero, window, 3), std::invalid_argument);
}

TEST_CASE("context_seed is order-sensitive: no collisions over 10^4 pairs") {
    SplitMix64 rng(7);
    int collisions = 0;
    for (int i = 0; i < 10000; ++i) {
        const TokenId a = static_cast<TokenId>(rng.next() % 50000);
        TokenId b = static_cast<TokenId>(rng.next() % 50000);
        if (b == a) b = a + 1;
        const TokenId ab[] = {a, b};
        const TokenId ba[] = {b, a};
        SecretKey key{rng.next()};
        if (context_seed(key, ab, 2) == context_seed(key, ba, 2)) ++collisions;
    }
    CHECK(collisions == 0);
}

TEST_CASE("unit_uniform range and determinism") {
    CHECK(unit_uniform(0, DS_GREEN, 0) == doctest::Approx(0.26904012719481574).epsilon(1e-15));
    CHECK(unit_uniform(123, DS_GUMBEL, 7) == doctest::Approx(0.6990653313006293).epsilon(1e-15));
    SplitMix64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const double u = unit_uniform(rng.next(), rng.next(), rng.next());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(unit_uniform(9, 8, 7) == unit_uniform(9, 8, 7));
}

TEST_CASE("unit_uniform passes a KS test against U(0,1)") {
    const int n = 100000;
    std::vector<double> xs;
    xs.reserve(n);
    for (int i = 0; i < n; ++i) xs.push_back(unit_uniform(0xABCDEF01ull, DS_GREEN, i));
    std::sort(xs.begin(), xs.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max({d, xs[i] - lo, hi - xs[i]});
    }
    // Asymptotic Kolmogorov critical value at the 0.1% level.
    const double critical = 1.9494746035204051 / std::sqrt(static_cast<double>(n));
    CHECK(d < critical);
}

TEST_CASE("is_green hits the expected green fraction") {
    SUBCASE("gamma near 1 dominates") {
        const double gamma = 1.0 - 0x1.0p-53;
        for (TokenId v = 0; v < 2000; ++v) CHECK(is_green(0x1234ull, v, gamma));
    }
    SUBCASE("binomial count at gamma = 0.25") {
        const int vocab = 10000;
        const double gamma = 0.25;
        int green = 0;
        for (TokenId v = 0; v < vocab; ++v) green += is_green(0x5EEDull, v, gamma);
        const double expected = gamma * vocab;
        const double band = 3.0 * std::sqrt(vocab * gamma * (1 - gamma));
        CHECK(std::abs(green - expected) <= band);
    }
    SUBCASE("gamma out of range") {
        CHECK_THROWS_AS(is_green(1, 1, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(is_green(1, 1, 1.5), std::invalid_argument);
    }
}

TEST_CASE("changing the domain tag gives independent membership") {
    // Under independent streams the both-green fraction is about gamma^2.
    const int vocab = 100000;
    const double gamma = 0.25;
    int both = 0;
    for (TokenId v = 0; v < vocab; ++v) {
        const bool g1 = unit_uniform(0x77ull, DS_GREEN, v) < gamma;
        const bool g2 = unit_uniform(0x77ull, DS_GUMBEL, v) < gamma;
        both += g1 && g2;
    }
    const double expected = gamma * gamma * vocab;
    const double band = 4.0 * std::sqrt(vocab * gamma * gamma * (1 - gamma * gamma));
    CHECK(std::abs(both - expected) <= band);
}

TEST_CASE("domain-separated streams pass a chi-square independence test") {
    // 8x8 contingency table over (u_green, u_gumbel) pairs, df = 49.
    const int n = 100000;
    const int bins = 8;
    std::vector<int> table(bins * bins, 0);
    std::vector<int> row(bins, 0), col(bins, 0);
    for (int i = 0; i < n; ++i) {
        const double a = unit_uniform(0x90210ull, DS_GREEN, i);
        const double b = unit_uniform(0x90210ull, DS_GUMBEL, i);
        const int ra = std::min(bins - 1, static_cast<int>(a * bins));
        const int cb = std::min(bins - 1, static_cast<int>(b * bins));
        ++table[ra * bins + cb];
        ++row[ra];
        ++col[cb];
    }
    double stat = 0.0;
    for (int r = 0; r < bins; ++r) {
        for (int c = 0; c < bins; ++c) {
            const double expect = static_cast<double>(row[r]) * col[c] / n;
            const double diff = table[r * bins + c] - expect;
            stat += diff * diff / expect;
        }
    }
    // chi2 inverse survival at 0.1%, 49 degrees of freedom.
    CHECK(stat < 85.35056460859305);
}

TEST_CASE("expected green fraction over random seeds is gamma") {
    const int trials = 4000;
    const double gamma = 0.25;
    SplitMix64 rng(99);
    int green = 0;
    for (int i = 0; i < trials; ++i) green += is_green(rng.next(), 17, gamma);
    const double band = 3.0 * std::sqrt(trials * gamma * (1 - gamma));
    CHECK(std::abs(green - gamma * trials) <= band);
}

TEST_CASE("SplitMix64 streams are reproducible") {
    SplitMix64 a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    SplitMix64 c(0);
    CHECK(c.next() == 0xE220A8397B1DCDAFull);  // same finalizer, counter from 0
}
