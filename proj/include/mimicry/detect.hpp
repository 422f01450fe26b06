#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimicry/toylm.hpp"
#include "mimicry/wmgen.hpp"

namespace mimicry {

enum class DedupMode { off, in_text, cross_prompt };

const char* dedup_mode_name(DedupMode mode);
DedupMode dedup_mode_from_name(const std::string& name);

// Repetition masking policy. The dedup unit is the (h+1)-gram: context
// window plus current token. in_text scores each unit once; cross_prompt
// additionally masks every unit present in the reference text.
struct DedupPolicy {
    DedupMode mode = DedupMode::off;
    std::optional<TokenSeq> reference;

    static DedupPolicy off() { return {DedupMode::off, std::nullopt}; }
    static DedupPolicy in_text() { return {DedupMode::in_text, std::nullopt}; }
    static DedupPolicy cross_prompt(TokenSeq ref) { return {DedupMode::cross_prompt, std::move(ref)}; }
};

struct ScoredPosition {
    int position;
    std::vector<TokenId> context;
    double score;
    bool masked;
};

struct DetectionResult {
    std::string scheme;
    std::uint64_t key_id = 0;
    int ngram_h = 0;
    double alpha = 0.01;
    int scored = 0;          // unmasked scorable positions
    double statistic = 0.0;  // z (greenlist), S (expmin), B (ratio)
    double p_value = 1.0;
    bool flagged = false;
    int masked_count = 0;
    std::vector<ScoredPosition> per_token;

    nlohmann::json to_json() const;
};

// Positions with a full h-token context: t >= h.
std::vector<int> scorable_positions(const TokenSeq& text, int h);

// Returns the positions that remain scorable under the policy.
std::vector<int> apply_dedup(const std::vector<int>& positions, const TokenSeq& text,
                             const DedupPolicy& policy, int h);

// z-test on the green-token count among scored positions; one-sided upper
// normal tail. Zero scorable positions is a sentinel (p=1), not an error.
DetectionResult detect_greenlist(const TokenSeq& text, const WatermarkConfig& cfg,
                                 const DedupPolicy& policy);

// Sum of -ln(1 - r) over scored positions; null distribution Gamma(T, 1),
// p = Q(T, S).
DetectionResult detect_expmin(const TokenSeq& text, const WatermarkConfig& cfg,
                              const DedupPolicy& policy);

// Regularized upper incomplete gamma Q(shape, x): series for x < shape + 1,
// continued fraction otherwise. Absolute error <= 1e-12.
double incomplete_gamma_upper(double shape, double x);

// One-sided upper normal tail 1 - Phi(z).
double normal_upper_tail(double z);

// Perplexity-ratio statistic: mean observer log-perplexity of the text over
// mean cross-entropy of the performer's predictions scored by the observer.
// Low values indicate machine-generated text.
double ratio_score(const TokenSeq& text, const NgramLM& observer, const NgramLM& performer);

// Flagged when the statistic falls below the calibrated threshold. The
// p_value field is a 0/1 sentinel: this detector is calibrated in score
// space, not probability space.
DetectionResult detect_ratio(const TokenSeq& text, const NgramLM& observer, const NgramLM& performer,
                             double threshold);

struct CalibrationResult {
    double threshold = 0.0;
    bool degenerate = false;  // all calibration scores identical
};

// Empirical lower-tail fpr-quantile of reference scores.
CalibrationResult calibrate_threshold(std::vector<double> scores, double fpr);

}  // namespace mimicry
