#include "mimicry/textmodel.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mimicry {

namespace {

bool is_ascii_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char raw : text) {
        unsigned char c = static_cast<unsigned char>(raw);
        if (is_ascii_space(c)) {
            if (!cur.empty()) { out.push_back(std::move(cur)); cur.clear(); }
        } else if (is_ascii_punct(c)) {
            if (!cur.empty()) { out.push_back(std::move(cur)); cur.clear(); }
            out.emplace_back(1, raw);
        } else {
            if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
            cur.push_back(static_cast<char>(c));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::uint64_t Vocabulary::fingerprint() const {
    std::uint64_t h = 0x79646f62616c6f76ull;
    for (const std::string& t : tokens) {
        for (char c : t) h = mix64(h ^ static_cast<unsigned char>(c));
        h = mix64(h ^ 0x0Aull);
    }
    return h;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    v.tokens = std::move(tokens);
    v.index.reserve(v.tokens.size());
    for (size_t i = 0; i < v.tokens.size(); ++i) {
        if (!v.index.emplace(v.tokens[i], static_cast<TokenId>(i)).second) {
            throw std::invalid_argument("duplicate token surface in vocabulary");
        }
    }
    if (v.size() < 2) throw std::invalid_argument("vocabulary needs at least 2 tokens");
    return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocabulary: " + path.string());
    for (const std::string& t : tokens) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read vocabulary: " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return from_tokens(std::move(tokens));
}

Vocabulary build_vocab(std::span<const std::string> corpus, int min_count) {
    std::unordered_map<std::string, std::uint64_t> freq;
    for (const std::string& doc : corpus) {
        for (std::string& w : split_words(doc)) {
            if (w == kUnkSurface || w == kEotSurface) continue;
            ++freq[std::move(w)];
        }
    }
    if (freq.empty()) throw std::invalid_argument("empty corpus");

    std::vector<std::pair<std::string, std::uint64_t>> kept;
    kept.reserve(freq.size());
    for (auto& [w, n] : freq) {
        if (n >= static_cast<std::uint64_t>(std::max(1, min_count))) kept.emplace_back(w, n);
    }
    // Reserved first, then descending frequency, ties lexicographic.
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    std::vector<std::string> tokens;
    tokens.reserve(kept.size() + 2);
    tokens.emplace_back(kUnkSurface);
    tokens.emplace_back(kEotSurface);
    for (auto& [w, n] : kept) tokens.push_back(w);
    return Vocabulary::from_tokens(std::move(tokens));
}

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab) {
    TokenSeq ids;
    for (const std::string& w : split_words(text)) ids.push_back(vocab.lookup(w));
    return ids;
}

std::string detokenize(const TokenSeq& ids, const Vocabulary& vocab) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        out += vocab.surface(ids[i]);
    }
    return out;
}

const char* role_name(Role role) {
    switch (role) {
        case Role::watermarked_speaker: return "watermarked-speaker";
        case Role::responder: return "responder";
        case Role::human: return "human";
        case Role::llm: return "llm";
    }
    return "?";
}

RoleAliasTable default_role_aliases() {
    return {
        {"human", Role::human},        {"user", Role::human},
        {"person", Role::human},       {"prompter", Role::human},
        {"llm", Role::llm},            {"assistant", Role::llm},
        {"gpt", Role::llm},            {"chatgpt", Role::llm},
        {"ai", Role::llm},             {"bot", Role::llm},
        {"model", Role::llm},          {"system", Role::llm},
        {"watermarked-speaker", Role::watermarked_speaker},
        {"speaker", Role::watermarked_speaker},
        {"responder", Role::responder},
    };
}

IngestStats ingest_jsonl(const std::filesystem::path& path, const Vocabulary& vocab,
                         const RoleAliasTable& aliases) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read dataset: " + path.string());

    IngestStats out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++out.total_lines;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            const auto& turns = j.at("turns");
            if (!turns.is_array() || turns.empty()) throw std::runtime_error("no turns");
            ConversationRecord rec;
            for (const auto& t : turns) {
                std::string role_str = t.at("role").get<std::string>();
                std::transform(role_str.begin(), role_str.end(), role_str.begin(),
                               [](unsigned char c) { return std::tolower(c); });
                auto it = aliases.find(role_str);
                Role role = it == aliases.end() ? Role::llm : it->second;
                TokenSeq ids = tokenize(t.at("text").get<std::string>(), vocab);
                if (!rec.turns.empty() && rec.turns.back().role == role) {
                    // Merge consecutive same-role turns to keep alternation.
                    auto& prev = rec.turns.back().text;
                    prev.insert(prev.end(), ids.begin(), ids.end());
                } else {
                    rec.turns.push_back(Turn{role, std::move(ids)});
                }
            }
            out.records.push_back(std::move(rec));
        } catch (const std::exception&) {
            ++out.skipped_lines;
        }
    }
    if (out.records.empty()) throw std::runtime_error("no conversations");
    return out;
}

}  // namespace mimicry
