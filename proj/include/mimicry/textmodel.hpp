#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mimicry/prf.hpp"

namespace mimicry {

using TokenSeq = std::vector<TokenId>;

// Word-level vocabulary. Ids are dense 0..|V|-1, id 0 and 1 reserved.
// Immutable after construction; safe to share across threads.
struct Vocabulary {
    static constexpr TokenId unk_id = 0;
    static constexpr TokenId eot_id = 1;

    std::vector<std::string> tokens;
    std::unordered_map<std::string, TokenId> index;

    int size() const { return static_cast<int>(tokens.size()); }

    TokenId lookup(const std::string& surface) const {
        auto it = index.find(surface);
        return it == index.end() ? unk_id : it->second;
    }

    const std::string& surface(TokenId id) const { return tokens.at(static_cast<size_t>(id)); }

    // Order-sensitive hash of the token list; embedded in model files so a
    // model is never paired with the wrong vocabulary.
    std::uint64_t fingerprint() const;

    // One token per line, line number = id, UTF-8.
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    static Vocabulary from_tokens(std::vector<std::string> tokens);
};

// Reserved surfaces. Chosen so they survive the tokenizer as single tokens
// (the angle brackets are multi-byte UTF-8, which the splitter treats as
// word characters).
inline constexpr std::string_view kUnkSurface = "⟨unk⟩";
inline constexpr std::string_view kEotSurface = "⟨eot⟩";

// Lowercases ASCII and splits on whitespace and punctuation boundaries;
// each ASCII punctuation mark is its own token. Total function.
std::vector<std::string> split_words(std::string_view text);

Vocabulary build_vocab(std::span<const std::string> corpus, int min_count);

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab);
std::string detokenize(const TokenSeq& ids, const Vocabulary& vocab);

enum class Role { watermarked_speaker, responder, human, llm };

const char* role_name(Role role);

struct Turn {
    Role role;
    TokenSeq text;
};

struct ConversationMeta {
    std::uint64_t key = 0;
    double temperature = 0.0;
    int ngram_h = 0;
    std::uint64_t run_seed = 0;
};

struct ConversationRecord {
    std::vector<Turn> turns;
    ConversationMeta meta;
};

using RoleAliasTable = std::unordered_map<std::string, Role>;
RoleAliasTable default_role_aliases();

struct IngestStats {
    std::vector<ConversationRecord> records;
    int skipped_lines = 0;
    int total_lines = 0;
};

// Loads a JSONL dump of dialogues: one conversation per line,
// {"turns":[{"role":"human","text":"..."}]}. Malformed lines are skipped and
// counted; consecutive same-role turns are merged so the alternation
// invariant holds on ingested records.
IngestStats ingest_jsonl(const std::filesystem::path& path, const Vocabulary& vocab,
                         const RoleAliasTable& aliases = default_role_aliases());

}  // namespace mimicry
