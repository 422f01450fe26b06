#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimicry/detect.hpp"
#include "mimicry/toylm.hpp"
#include "mimicry/wmgen.hpp"

namespace mimicry {

// Default conversation opener used when no prompt file is given.
const std::string& default_conversation_prompt();

struct TemperaturePair {
    double watermarked = 1.0;
    double responder = 0.8;
};

struct ExperimentGrid {
    std::vector<Scheme> schemes{Scheme::greenlist, Scheme::expmin};
    std::vector<std::uint64_t> keys;            // empty = derive 3 from the master seed
    std::vector<int> ngram_widths{2, 4, 6, 8};
    std::vector<TemperaturePair> temperatures{{1.0, 0.8}};
    int exchanges = 5;                          // speaker+responder round trips per conversation
    int tokens_per_turn = 60;
    std::vector<int> concat_responses{1, 3, 5}; // #R values
    int conversations_per_cell = 200;
    double alpha = 0.01;
    double gamma = 0.25;
    double delta = 4.0;
    double copy_lambda = 0.3;
    int min_match = 3;

    void validate() const;
};

// Per-conversation p-values at one #R. p_response is scored with in-text
// repetition masking; the dedup variant additionally masks every (h+1)-gram
// of the concatenated speaker text.
struct ConversationScores {
    double p_prompt = 1.0;
    double p_response = 1.0;
    double p_response_dedup = 1.0;
};

// One grid cell: scheme x ngram width x temperature pair, all keys kept
// separate for dispersion reporting.
struct CellResult {
    Scheme scheme = Scheme::greenlist;
    int ngram_h = 4;
    TemperaturePair temps;
    std::vector<std::uint64_t> keys;
    std::vector<int> concat_responses;
    // per_key[key_idx][r_idx][conversation_idx]
    std::vector<std::vector<std::vector<ConversationScores>>> per_key;

    nlohmann::json to_json() const;
};

// Alternates a watermarked speaker turn and an unwatermarked responder turn,
// both conditioned on the full transcript. The responder's copy rule matches
// against the transcript as frozen at the start of its turn.
ConversationRecord run_conversation(const NgramLM& speaker_lm, const WatermarkConfig& speaker_cfg,
                                    const CopyMixtureAgent& responder, double responder_temperature,
                                    const TokenSeq& seed_prompt, int exchanges, int tokens_per_turn,
                                    std::uint64_t run_seed);

struct SideResults {
    DetectionResult prompt;
    DetectionResult response;
};

// Scores the concatenation of the first #R speaker turns and the first #R
// responder turns. cross_prompt masking applies to the response side with
// the concatenated speaker text as reference; the prompt side then falls
// back to in-text masking.
SideResults score_conversation(const ConversationRecord& rec, const WatermarkConfig& cfg,
                               int concat_r, DedupMode mode);

struct GridModels {
    const NgramLM* speaker = nullptr;
    const NgramLM* responder_base = nullptr;
};

using ProgressFn = std::function<void(int done, int total)>;

// Full Cartesian sweep. Every conversation derives its RNG from
// (master_seed, cell, key, conversation), so results are independent of the
// worker schedule.
std::vector<CellResult> run_grid(const ExperimentGrid& grid, const GridModels& models,
                                 const TokenSeq& seed_prompt, std::uint64_t master_seed, int jobs = 1,
                                 const ProgressFn& progress = {});

std::vector<std::uint64_t> derive_keys(std::uint64_t master_seed, int count);

void write_cells_jsonl(const std::filesystem::path& path, std::span<const CellResult> cells);
void write_conversations_csv(const std::filesystem::path& path, std::span<const CellResult> cells);

// Batch experiment configuration (JSON file). Unknown keys are rejected.
struct RunConfig {
    ExperimentGrid grid;
    std::filesystem::path speaker_model;
    std::filesystem::path responder_model;
    std::filesystem::path output_dir = "out";
    std::string prompt = "builtin";  // "builtin" or a text file path
    std::uint64_t master_seed = 1;
    int jobs = 1;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace mimicry
