#include "mimicry/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace mimicry {

const char* dedup_mode_name(DedupMode mode) {
    switch (mode) {
        case DedupMode::off: return "off";
        case DedupMode::in_text: return "in_text";
        case DedupMode::cross_prompt: return "cross_prompt";
    }
    return "?";
}

DedupMode dedup_mode_from_name(const std::string& name) {
    if (name == "off") return DedupMode::off;
    if (name == "in_text") return DedupMode::in_text;
    if (name == "cross_prompt") return DedupMode::cross_prompt;
    throw std::invalid_argument("unknown dedup mode: " + name);
}

std::vector<int> scorable_positions(const TokenSeq& text, int h) {
    std::vector<int> positions;
    const int n = static_cast<int>(text.size());
    for (int t = h; t < n; ++t) positions.push_back(t);
    return positions;
}

namespace {

// Byte-packed (h+1)-gram so set membership is exact, not hash-probabilistic.
std::string pack_unit(const TokenSeq& text, int end_pos, int h) {
    std::string unit(static_cast<size_t>(h + 1) * sizeof(TokenId), '\0');
    std::memcpy(unit.data(), text.data() + end_pos - h, (static_cast<size_t>(h) + 1) * sizeof(TokenId));
    return unit;
}

}  // namespace

std::vector<int> apply_dedup(const std::vector<int>& positions, const TokenSeq& text,
                             const DedupPolicy& policy, int h) {
    if (policy.mode == DedupMode::off) return positions;
    if (policy.mode == DedupMode::cross_prompt && !policy.reference) {
        throw std::invalid_argument("cross_prompt dedup requires a reference text");
    }

    std::unordered_set<std::string> seen;
    if (policy.mode == DedupMode::cross_prompt) {
        const TokenSeq& ref = *policy.reference;
        for (int t = h; t < static_cast<int>(ref.size()); ++t) seen.insert(pack_unit(ref, t, h));
    }

    std::vector<int> kept;
    kept.reserve(positions.size());
    for (int t : positions) {
        if (seen.insert(pack_unit(text, t, h)).second) kept.push_back(t);
    }
    return kept;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double incomplete_gamma_upper(double shape, double x) {
    if (!(shape > 0.0)) throw std::invalid_argument("shape must be > 0");
    if (x < 0.0) throw std::invalid_argument("x must be >= 0");
    if (x == 0.0) return 1.0;

    const double lg = std::lgamma(shape);
    if (x < shape + 1.0) {
        // Lower series: P(a,x) = x^a e^-x / Gamma(a) * sum x^n / (a)_{n+1}
        double ap = shape;
        double sum = 1.0 / shape;
        double term = sum;
        for (int i = 0; i < 10000; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-16) break;
        }
        const double p = sum * std::exp(-x + shape * std::log(x) - lg);
        return std::clamp(1.0 - p, 0.0, 1.0);
    }
    // Upper continued fraction (modified Lentz).
    const double tiny = 1e-300;
    double b = x + 1.0 - shape;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double f = d;
    for (int i = 1; i <= 10000; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - shape);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    const double q = f * std::exp(-x + shape * std::log(x) - lg);
    return std::clamp(q, 0.0, 1.0);
}

namespace {

struct PositionTrace {
    std::vector<ScoredPosition> per_token;
    std::vector<int> kept;
};

PositionTrace trace_positions(const TokenSeq& text, const WatermarkConfig& cfg,
                              const DedupPolicy& policy) {
    PositionTrace trace;
    const std::vector<int> positions = scorable_positions(text, cfg.ngram_h);
    trace.kept = apply_dedup(positions, text, policy, cfg.ngram_h);
    std::unordered_set<int> kept_set(trace.kept.begin(), trace.kept.end());
    trace.per_token.reserve(positions.size());
    for (int t : positions) {
        ScoredPosition sp;
        sp.position = t;
        sp.context.assign(text.begin() + t - cfg.ngram_h, text.begin() + t);
        sp.score = 0.0;
        sp.masked = kept_set.find(t) == kept_set.end();
        trace.per_token.push_back(std::move(sp));
    }
    return trace;
}

DetectionResult empty_result(const char* scheme, const WatermarkConfig& cfg, PositionTrace trace) {
    DetectionResult res;
    res.scheme = scheme;
    res.key_id = cfg.key.value;
    res.ngram_h = cfg.ngram_h;
    res.alpha = cfg.alpha;
    res.scored = 0;
    res.statistic = 0.0;
    res.p_value = 1.0;
    res.flagged = false;
    res.masked_count = static_cast<int>(trace.per_token.size());
    res.per_token = std::move(trace.per_token);
    return res;
}

}  // namespace

DetectionResult detect_greenlist(const TokenSeq& text, const WatermarkConfig& cfg,
                                 const DedupPolicy& policy) {
    if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw std::invalid_argument("gamma must be in (0,1)");
    PositionTrace trace = trace_positions(text, cfg, policy);
    const int scored = static_cast<int>(trace.kept.size());
    if (scored == 0) return empty_result("greenlist", cfg, std::move(trace));

    int green = 0;
    for (ScoredPosition& sp : trace.per_token) {
        const std::uint64_t seed = context_seed(cfg.key, sp.context, cfg.ngram_h);
        const bool g = is_green(seed, text[static_cast<size_t>(sp.position)], cfg.gamma);
        sp.score = g ? 1.0 : 0.0;
        if (!sp.masked && g) ++green;
    }

    DetectionResult res;
    res.scheme = "greenlist";
    res.key_id = cfg.key.value;
    res.ngram_h = cfg.ngram_h;
    res.alpha = cfg.alpha;
    res.scored = scored;
    const double t = static_cast<double>(scored);
    res.statistic = (static_cast<double>(green) - cfg.gamma * t) / std::sqrt(t * cfg.gamma * (1.0 - cfg.gamma));
    res.p_value = normal_upper_tail(res.statistic);
    res.flagged = res.p_value < cfg.alpha;
    res.masked_count = static_cast<int>(trace.per_token.size()) - scored;
    res.per_token = std::move(trace.per_token);
    return res;
}

DetectionResult detect_expmin(const TokenSeq& text, const WatermarkConfig& cfg,
                              const DedupPolicy& policy) {
    PositionTrace trace = trace_positions(text, cfg, policy);
    const int scored = static_cast<int>(trace.kept.size());
    if (scored == 0) return empty_result("expmin", cfg, std::move(trace));

    double stat = 0.0;
    for (ScoredPosition& sp : trace.per_token) {
        const std::uint64_t seed = context_seed(cfg.key, sp.context, cfg.ngram_h);
        const double r = unit_uniform(seed, DS_GUMBEL,
                                      static_cast<std::uint64_t>(text[static_cast<size_t>(sp.position)]));
        sp.score = -std::log1p(-r);
        if (!sp.masked) stat += sp.score;
    }

    DetectionResult res;
    res.scheme = "expmin";
    res.key_id = cfg.key.value;
    res.ngram_h = cfg.ngram_h;
    res.alpha = cfg.alpha;
    res.scored = scored;
    res.statistic = stat;
    res.p_value = incomplete_gamma_upper(static_cast<double>(scored), stat);
    res.flagged = res.p_value < cfg.alpha;
    res.masked_count = static_cast<int>(trace.per_token.size()) - scored;
    res.per_token = std::move(trace.per_token);
    return res;
}

double ratio_score(const TokenSeq& text, const NgramLM& observer, const NgramLM& performer) {
    if (observer.vocab.fingerprint() != performer.vocab.fingerprint()) {
        throw std::invalid_argument("observer and performer vocabularies differ");
    }
    if (text.size() < 2) throw std::invalid_argument("text too short for ratio scoring");

    double log_ppl = 0.0;
    double cross_ent = 0.0;
    TokenSeq prefix;
    prefix.reserve(text.size());
    prefix.push_back(text[0]);
    for (size_t t = 1; t < text.size(); ++t) {
        const Eigen::ArrayXd obs_log = next_dist(observer, prefix).logits;
        const Eigen::ArrayXd perf_p = next_dist(performer, prefix).logits.exp();
        log_ppl += -obs_log[text[t]];
        cross_ent += -(perf_p * obs_log).sum();
        prefix.push_back(text[t]);
    }
    return log_ppl / cross_ent;
}

DetectionResult detect_ratio(const TokenSeq& text, const NgramLM& observer, const NgramLM& performer,
                             double threshold) {
    DetectionResult res;
    res.scheme = "ratio";
    res.key_id = 0;
    res.ngram_h = 0;
    res.alpha = threshold;
    res.statistic = ratio_score(text, observer, performer);
    res.scored = static_cast<int>(text.size()) - 1;
    res.flagged = res.statistic < threshold;
    res.p_value = res.flagged ? 0.0 : 1.0;
    res.masked_count = 0;
    return res;
}

CalibrationResult calibrate_threshold(std::vector<double> scores, double fpr) {
    if (scores.size() < 100) throw std::invalid_argument("insufficient calibration data");
    if (!(fpr > 0.0 && fpr < 1.0)) throw std::invalid_argument("fpr must be in (0,1)");
    std::sort(scores.begin(), scores.end());
    const size_t k = static_cast<size_t>(
        std::max<long long>(1, static_cast<long long>(std::ceil(fpr * static_cast<double>(scores.size())))));
    CalibrationResult out;
    out.threshold = scores[k - 1];
    out.degenerate = scores.front() == scores.back();
    return out;
}

nlohmann::json DetectionResult::to_json() const {
    return nlohmann::json{
        {"scheme", scheme},   {"key_id", key_id},       {"h", ngram_h},
        {"alpha", alpha},     {"scored", scored},       {"statistic", statistic},
        {"p_value", p_value}, {"flagged", flagged},     {"masked_count", masked_count},
    };
}

}  // namespace mimicry
