#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "mimicry/distribution.hpp"
#include "mimicry/textmodel.hpp"

namespace mimicry {

// Backoff add-k n-gram model. Conditionals use the longest seen context
// suffix, falling back order by order to the add-k unigram, which has full
// support. Immutable after training.
struct NgramLM {
    struct ContextStats {
        std::uint64_t total = 0;
        std::vector<std::pair<TokenId, std::uint32_t>> counts;  // sorted by token id
    };

    int order = 3;
    double k = 1e-4;
    Vocabulary vocab;
    int context_bits = 0;  // id bits used for packing context keys
    std::vector<std::uint64_t> unigram;
    std::uint64_t unigram_total = 0;
    // tables[len-1]: contexts of exactly `len` tokens, keyed by packed ids.
    std::vector<std::unordered_map<std::uint64_t, ContextStats>> tables;

    std::uint64_t pack_context(std::span<const TokenId> context) const;
};

NgramLM train_ngram(std::span<const TokenSeq> corpus, const Vocabulary& vocab, int order, double k);

// Backoff conditional p(. | context suffix) as a dense probability vector.
Eigen::ArrayXd conditional(const NgramLM& lm, std::span<const TokenId> context);

// Logits = ln conditional(last order-1 tokens of history).
NextTokenDistribution next_dist(const NgramLM& lm, const TokenSeq& history);

// Versioned binary serialization with the vocabulary embedded.
void save_model(const NgramLM& lm, const std::filesystem::path& path);
NgramLM load_model(const std::filesystem::path& path);

// FNV-1a over a file's bytes; hex string. Used for model provenance lines.
std::string file_checksum(const std::filesystem::path& path);

// Conversational agent that mixes an ngram base model with an
// induction-style copy rule: when the longest suffix of the running history
// (length >= min_match) reappears in the frozen conversation, the token that
// followed its most recent occurrence gets probability lambda.
struct CopyMixtureAgent {
    const NgramLM* base = nullptr;
    double lambda = 0.0;
    int min_match = 1;
};

// Longest suffix of `history` occurring in `conversation` with a
// continuation; returns {match length, continuation token} or {0, -1}.
std::pair<int, TokenId> longest_suffix_match(const TokenSeq& history, const TokenSeq& conversation,
                                             int min_match);

NextTokenDistribution agent_next_dist(const CopyMixtureAgent& agent, const TokenSeq& history,
                                      const TokenSeq& conversation);

}  // namespace mimicry
