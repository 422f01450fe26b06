#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mimicry/textmodel.hpp"

using namespace mimicry;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path dir = fs::temp_directory_path() / "mlab_textmodel_test";
    fs::create_directories(dir);
    return dir;
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Independent word splitter for oracle counting: regex-free state machine
// driven by character classes, written against the documented rule rather
// than sharing code with split_words.
std::map<std::string, int> oracle_counts(const std::string& text) {
    std::map<std::string, int> counts;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            ++counts[cur];
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        const bool punct = c < 0x80 && std::ispunct(c);
        if (space) {
            flush();
        } else if (punct) {
            flush();
            ++counts[std::string(1, static_cast<char>(c))];
        } else {
            cur.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
        }
    }
    flush();
    return counts;
}

}  // namespace

TEST_CASE("build_vocab orders reserved first, then by frequency") {
    const std::string corpus[] = {"a b a"};
    Vocabulary v = build_vocab(corpus, 1);
    REQUIRE(v.size() == 4);
    CHECK(v.tokens[0] == kUnkSurface);
    CHECK(v.tokens[1] == kEotSurface);
    CHECK(v.tokens[2] == "a");
    CHECK(v.tokens[3] == "b");

    Vocabulary cut = build_vocab(corpus, 2);
    REQUIRE(cut.size() == 3);
    CHECK(cut.tokens[2] == "a");
}

TEST_CASE("build_vocab breaks frequency ties lexicographically") {
    const std::string corpus[] = {"pear apple pear apple zeta"};
    Vocabulary v = build_vocab(corpus, 1);
    REQUIRE(v.size() == 5);
    CHECK(v.tokens[2] == "apple");
    CHECK(v.tokens[3] == "pear");
    CHECK(v.tokens[4] == "zeta");
}

TEST_CASE("build_vocab rejects an empty corpus") {
    const std::string empty[] = {"", "   \t\n"};
    CHECK_THROWS_WITH_AS(build_vocab(empty, 1), "empty corpus", std::invalid_argument);
}

TEST_CASE("tokenize lowercases and splits punctuation") {
    const std::string corpus[] = {"hello , world"};
    Vocabulary v = build_vocab(corpus, 1);
    TokenSeq ids = tokenize("Hello, world", v);
    REQUIRE(ids.size() == 3);
    CHECK(v.surface(ids[0]) == "hello");
    CHECK(v.surface(ids[1]) == ",");
    CHECK(v.surface(ids[2]) == "world");

    CHECK(tokenize("", v).empty());

    TokenSeq oov = tokenize("zzzqqq", v);
    REQUIRE(oov.size() == 1);
    CHECK(oov[0] == Vocabulary::unk_id);
}

TEST_CASE("round trip: tokenize(detokenize(s)) == s") {
    const std::string corpus[] = {"the cat sat on a mat . it was , in fact ! quite gray"};
    Vocabulary v = build_vocab(corpus, 1);
    SplitMix64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        TokenSeq s;
        const int len = 1 + static_cast<int>(rng.next() % 40);
        for (int i = 0; i < len; ++i) s.push_back(static_cast<TokenId>(rng.next() % v.size()));
        CHECK(tokenize(detokenize(s, v), v) == s);
    }
}

TEST_CASE("tokenize-detokenize-tokenize is idempotent on id sequences") {
    const std::string corpus[] = {"one two three four , ."};
    Vocabulary v = build_vocab(corpus, 1);
    TokenSeq first = tokenize("One, two; THREE unknownword four.", v);
    TokenSeq second = tokenize(detokenize(first, v), v);
    CHECK(first == second);
}

TEST_CASE("fixture corpus vocabulary matches an independent frequency count") {
    const fs::path corpus_path = fs::path(MLAB_DATA_DIR) / "corpus.txt";
    REQUIRE(fs::exists(corpus_path));
    const std::string raw = read_all(corpus_path);

    std::map<std::string, int> counts = oracle_counts(raw);
    int distinct_at_least_2 = 0;
    for (const auto& [w, n] : counts) distinct_at_least_2 += n >= 2;

    const std::string docs[] = {raw};
    Vocabulary v = build_vocab(docs, 2);
    CHECK(v.size() == distinct_at_least_2 + 2);
}

TEST_CASE("vocabulary serialization is deterministic and loads back") {
    const std::string corpus[] = {"b a b c c c . ,"};
    Vocabulary v1 = build_vocab(corpus, 1);
    Vocabulary v2 = build_vocab(corpus, 1);
    const fs::path p1 = temp_dir() / "v1.vocab";
    const fs::path p2 = temp_dir() / "v2.vocab";
    v1.save(p1);
    v2.save(p2);
    CHECK(read_all(p1) == read_all(p2));

    Vocabulary loaded = Vocabulary::load(p1);
    CHECK(loaded.tokens == v1.tokens);
    CHECK(loaded.fingerprint() == v1.fingerprint());
}

TEST_CASE("ingest_jsonl parses well-formed lines and skips malformed ones") {
    const std::string corpus[] = {"hi there how are you good thanks"};
    Vocabulary v = build_vocab(corpus, 1);
    const fs::path path = temp_dir() / "convs.jsonl";

    SUBCASE("two well-formed lines") {
        std::ofstream out(path);
        out << R"({"turns":[{"role":"human","text":"hi there"},{"role":"assistant","text":"how are you"}]})"
            << "\n";
        out << R"({"turns":[{"role":"user","text":"good"},{"role":"gpt","text":"thanks"}]})" << "\n";
        out.close();
        IngestStats got = ingest_jsonl(path, v);
        CHECK(got.records.size() == 2);
        CHECK(got.skipped_lines == 0);
        CHECK(got.records[0].turns[0].role == Role::human);
        CHECK(got.records[0].turns[1].role == Role::llm);
    }

    SUBCASE("malformed line is skipped and counted") {
        std::ofstream out(path);
        out << R"({"turns":[{"role":"human","text":"hi"}]})" << "\n";
        out << "{not json\n";
        out.close();
        IngestStats got = ingest_jsonl(path, v);
        CHECK(got.records.size() == 1);
        CHECK(got.skipped_lines == 1);
        CHECK(static_cast<int>(got.records.size()) + got.skipped_lines == got.total_lines);
    }

    SUBCASE("consecutive same-role turns are merged to keep alternation") {
        std::ofstream out(path);
        out << R"({"turns":[{"role":"user","text":"a"},{"role":"human","text":"b"},{"role":"ai","text":"c"}]})"
            << "\n";
        out.close();
        IngestStats got = ingest_jsonl(path, v);
        REQUIRE(got.records.size() == 1);
        CHECK(got.records[0].turns.size() == 2);
        CHECK(got.records[0].turns[0].text.size() == 2);
    }

    SUBCASE("zero parseable lines") {
        std::ofstream out(path);
        out << "nope\n{\n";
        out.close();
        CHECK_THROWS_WITH_AS(ingest_jsonl(path, v), "no conversations", std::runtime_error);
    }

    SUBCASE("unreadable file") {
        CHECK_THROWS_AS(ingest_jsonl(temp_dir() / "missing.jsonl", v), std::runtime_error);
    }
}

TEST_CASE("turn-count filtering matches a brute-force pass") {
    // Stand-in for a large scraped dump: 520 dialogues with varying turn
    // counts; a >=100-turn filter must agree with an independent count.
    const std::string corpus[] = {"x"};
    Vocabulary v = build_vocab(corpus, 1);
    const fs::path path = temp_dir() / "dump.jsonl";
    std::ofstream out(path);
    int expected = 0;
    for (int i = 0; i < 520; ++i) {
        const int turns = 2 + (i * 7) % 180;
        if (turns >= 100) ++expected;
        out << R"({"turns":[)";
        for (int t = 0; t < turns; ++t) {
            if (t) out << ",";
            out << R"({"role":")" << (t % 2 == 0 ? "user" : "assistant") << R"(","text":"x"})";
        }
        out << "]}\n";
    }
    out.close();

    IngestStats got = ingest_jsonl(path, v);
    REQUIRE(got.records.size() == 520);
    int kept = 0;
    for (const ConversationRecord& rec : got.records) {
        kept += static_cast<int>(rec.turns.size()) >= 100;
    }
    CHECK(kept == expected);
}
