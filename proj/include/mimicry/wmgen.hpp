#pragma once

#include <functional>
#include <optional>
#include <string>

#include "mimicry/distribution.hpp"
#include "mimicry/prf.hpp"
#include "mimicry/textmodel.hpp"

namespace mimicry {

enum class Scheme { none, greenlist, expmin };

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct WatermarkConfig {
    Scheme scheme = Scheme::none;
    SecretKey key;
    int ngram_h = 4;          // seeding window width
    double gamma = 0.25;      // greenlist only
    double delta = 2.0;       // greenlist only
    double temperature = 1.0;
    double alpha = 0.01;      // detection threshold on p-values

    void validate() const;
};

// Inverse-CDF sample at `u`, cumulative over ascending ids.
int sample_from(const Eigen::ArrayXd& probs, double u);

// Green-list scheme: add delta to every green logit, apply temperature, then
// inverse-CDF sample at rng_draw.
int sample_greenlist(const NextTokenDistribution& d, std::span<const TokenId> context,
                     const WatermarkConfig& cfg, double rng_draw);

// Exponential-minimum scheme: temperature first, then argmax over the support
// of ln(r_v)/p_v with key-derived uniforms r_v. Deterministic given
// (key, context, p). T=0 falls back to greedy on p.
int sample_expmin(const NextTokenDistribution& d, std::span<const TokenId> context,
                  const WatermarkConfig& cfg);

// Any model exposing next-token logits given the full history.
using NextTokenFn = std::function<NextTokenDistribution(const TokenSeq& history)>;

// Autoregressive loop. The seeding window is the last h prompt-or-generated
// tokens, left-padded with EOT when history is shorter than h (padded
// positions are generation-only; detectors skip positions without real
// context). `rng` drives scheme none and greenlist draws; expmin consumes no
// external randomness.
TokenSeq generate(const NextTokenFn& lm, const TokenSeq& prompt, const WatermarkConfig& cfg,
                  int max_tokens, SplitMix64& rng, std::optional<TokenId> stop = std::nullopt);

}  // namespace mimicry
