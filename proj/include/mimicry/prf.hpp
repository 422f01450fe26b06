#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

namespace mimicry {

using TokenId = std::int32_t;

// Domain-separation tags for the keyed streams. Frozen constants: changing
// either one changes every watermark bit, so they are part of the
// compatibility surface between generators and detectors.
inline constexpr std::uint64_t DS_GREEN  = 0x67726565ull;
inline constexpr std::uint64_t DS_GUMBEL = 0x67756d62ull;

struct SecretKey {
    std::uint64_t value = 0;
};

// splitmix64 finalizer. Bit-exact everywhere: this is the primitive every
// watermark decision reduces to.
inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    std::uint64_t z = x + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Folds the h-token context window into a per-position seed. Order-sensitive.
// `width` is the configured ngram width; a window of any other length is a
// caller bug, not data.
inline std::uint64_t context_seed(SecretKey key, std::span<const TokenId> window, int width) {
    if (static_cast<int>(window.size()) != width) {
        throw std::invalid_argument("context width mismatch");
    }
    std::uint64_t s = key.value;
    for (TokenId t : window) {
        s = mix64(s ^ mix64(static_cast<std::uint64_t>(t) + 1));
    }
    return s;
}

// Counter-based uniform in [0, 1 - 2^-53]. Shared by both schemes through
// different domain tags.
inline double unit_uniform(std::uint64_t seed, std::uint64_t domain_tag, std::uint64_t item) noexcept {
    std::uint64_t u = mix64(seed ^ mix64(domain_tag) ^ mix64(item + 0x9E37ull));
    return static_cast<double>(u >> 11) * 0x1.0p-53;
}

// Bernoulli(gamma) green-list membership per token.
inline bool is_green(std::uint64_t seed, TokenId token, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw std::invalid_argument("gamma must be in (0,1)");
    }
    return unit_uniform(seed, DS_GREEN, static_cast<std::uint64_t>(token)) < gamma;
}

// Sequential splitmix64 stream for experiment replication randomness
// (responder sampling, key derivation). Kept separate from the watermark
// PRF so watermark bits never depend on the run seed.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform draw in [0, 1 - 2^-53].
    double next_unit() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

}  // namespace mimicry
