#include "mimicry/wmgen.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mimicry {

const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::none: return "none";
        case Scheme::greenlist: return "greenlist";
        case Scheme::expmin: return "expmin";
    }
    return "?";
}

Scheme scheme_from_name(const std::string& name) {
    if (name == "none") return Scheme::none;
    if (name == "greenlist") return Scheme::greenlist;
    if (name == "expmin") return Scheme::expmin;
    throw std::invalid_argument("unknown scheme: " + name);
}

void WatermarkConfig::validate() const {
    if (scheme == Scheme::greenlist && !(gamma > 0.0 && gamma < 1.0)) {
        throw std::invalid_argument("gamma must be in (0,1)");
    }
    if (scheme == Scheme::greenlist && delta < 0.0) {
        throw std::invalid_argument("delta must be >= 0");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
    if (ngram_h < 0) throw std::invalid_argument("ngram width must be >= 0");
    if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
}

int sample_from(const Eigen::ArrayXd& probs, double u) {
    const int n = static_cast<int>(probs.size());
    double cum = 0.0;
    for (int v = 0; v < n; ++v) {
        cum += probs[v];
        if (u < cum) return v;
    }
    // u landed in the rounding gap above the final cumulative value.
    for (int v = n - 1; v >= 0; --v) {
        if (probs[v] > 0.0) return v;
    }
    throw std::invalid_argument("degenerate distribution");
}

int sample_greenlist(const NextTokenDistribution& d, std::span<const TokenId> context,
                     const WatermarkConfig& cfg, double rng_draw) {
    const std::uint64_t seed = context_seed(cfg.key, context, cfg.ngram_h);
    NextTokenDistribution biased{d.logits};
    for (int v = 0; v < biased.size(); ++v) {
        if (is_green(seed, v, cfg.gamma)) biased.logits[v] += cfg.delta;
    }
    return sample_from(apply_temperature(biased, cfg.temperature), rng_draw);
}

int sample_expmin(const NextTokenDistribution& d, std::span<const TokenId> context,
                  const WatermarkConfig& cfg) {
    const Eigen::ArrayXd p = apply_temperature(d, cfg.temperature);
    if (cfg.temperature == 0.0) {
        Eigen::Index arg = 0;
        p.maxCoeff(&arg);
        return static_cast<int>(arg);
    }
    const std::uint64_t seed = context_seed(cfg.key, context, cfg.ngram_h);
    double best = -std::numeric_limits<double>::infinity();
    int best_v = -1;
    for (int v = 0; v < static_cast<int>(p.size()); ++v) {
        if (p[v] <= 0.0) continue;
        const double r = unit_uniform(seed, DS_GUMBEL, static_cast<std::uint64_t>(v));
        const double score = r > 0.0 ? std::log(r) / p[v] : -std::numeric_limits<double>::infinity();
        if (score > best) {
            best = score;
            best_v = v;
        }
    }
    if (best_v < 0) throw std::invalid_argument("degenerate distribution");
    return best_v;
}

TokenSeq generate(const NextTokenFn& lm, const TokenSeq& prompt, const WatermarkConfig& cfg,
                  int max_tokens, SplitMix64& rng, std::optional<TokenId> stop) {
    cfg.validate();
    TokenSeq history = prompt;
    TokenSeq out;
    out.reserve(static_cast<size_t>(std::max(0, max_tokens)));

    std::vector<TokenId> window(static_cast<size_t>(cfg.ngram_h));
    for (int step = 0; step < max_tokens; ++step) {
        NextTokenDistribution d = lm(history);
        // Last h tokens, left-padded with EOT.
        for (int i = 0; i < cfg.ngram_h; ++i) {
            const std::int64_t pos = static_cast<std::int64_t>(history.size()) - cfg.ngram_h + i;
            window[static_cast<size_t>(i)] = pos >= 0 ? history[static_cast<size_t>(pos)] : Vocabulary::eot_id;
        }
        int next = 0;
        switch (cfg.scheme) {
            case Scheme::none:
                next = sample_from(apply_temperature(d, cfg.temperature), rng.next_unit());
                break;
            case Scheme::greenlist:
                next = sample_greenlist(d, window, cfg, rng.next_unit());
                break;
            case Scheme::expmin:
                next = sample_expmin(d, window, cfg);
                break;
        }
        out.push_back(next);
        history.push_back(next);
        if (stop && next == *stop) break;
    }
    return out;
}

}  // namespace mimicry
