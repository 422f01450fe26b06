#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mimicry/simulate.hpp"

namespace mimicry {

// One summary row: proportions over conversations, mean and sd across keys.
// P<R uses strict inequality (ties are not "stronger").
struct MimicryRow {
    Scheme scheme = Scheme::greenlist;
    int ngram_h = 4;
    TemperaturePair temps;
    int concat_r = 1;
    int num_keys = 0;
    int conversations_per_key = 0;
    double p_mean = 0, p_sd = 0;
    double r_mean = 0, r_sd = 0;
    double pandr_mean = 0, pandr_sd = 0;
    double pltr_mean = 0, pltr_sd = 0;
    double r_dedup_mean = 0, r_dedup_sd = 0;
};

MimicryRow summarize(const CellResult& cell, int concat_r, double alpha);
std::vector<MimicryRow> summarize_all(std::span<const CellResult> cells, double alpha);

void write_report_csv(const std::filesystem::path& path, std::span<const MimicryRow> rows);

struct SweepPoint {
    int ngram_h;
    std::string metric;  // P, R, PandR, PltR
    double value;
};

// Long-format reshaping of summary rows taken at a fixed scheme and #R:
// one row per (h, metric), values bit-identical to the summarize output.
std::vector<SweepPoint> ngram_sweep_view(std::span<const MimicryRow> rows);
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepPoint> points);

// Token-level shared-span annotation between a prompt and a response.
struct OverlapAnnotation {
    std::vector<bool> prompt_marked;
    std::vector<bool> response_marked;
};

// Marks every position covered by a maximal shared token span of length
// >= min_len.
OverlapAnnotation annotate_overlap(const TokenSeq& prompt, const TokenSeq& response, int min_len);

// Plain-text rendering with guillemet brackets around marked runs.
std::string render_annotation_text(const TokenSeq& ids, const std::vector<bool>& marked,
                                   const Vocabulary& vocab);

// Self-contained HTML page with prompt-side and response-side highlights.
std::string render_annotation_html(const TokenSeq& prompt, const TokenSeq& response,
                                   const OverlapAnnotation& ann, const Vocabulary& vocab);

struct TrajectoryPoint {
    Role side;
    int turn_index = 0;  // ordinal among this side's turns
    int count = 0;       // conversations contributing
    double mean = 0.0;
    double sd = 0.0;
};

// Per-turn-index ratio-detector score series across conversations. Turns too
// short to score are skipped.
std::vector<TrajectoryPoint> trajectory(std::span<const ConversationRecord> records,
                                        const NgramLM& observer, const NgramLM& performer);

void write_trajectory_csv(const std::filesystem::path& path, std::span<const TrajectoryPoint> points);

}  // namespace mimicry
