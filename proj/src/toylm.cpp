#include "mimicry/toylm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace mimicry {

namespace {

int bits_for_vocab(int vocab_size) {
    return std::max(1, std::bit_width(static_cast<std::uint32_t>(vocab_size - 1)));
}

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

constexpr char kMagic[4] = {'M', 'L', 'M', '1'};

}  // namespace

std::uint64_t NgramLM::pack_context(std::span<const TokenId> context) const {
    std::uint64_t key = 0;
    for (TokenId t : context) key = (key << context_bits) | static_cast<std::uint64_t>(t);
    return key;
}

NgramLM train_ngram(std::span<const TokenSeq> corpus, const Vocabulary& vocab, int order, double k) {
    if (order < 1) throw std::invalid_argument("order must be >= 1");
    if (!(k > 0.0)) throw std::invalid_argument("smoothing constant must be > 0");

    std::uint64_t total_tokens = 0;
    for (const TokenSeq& doc : corpus) total_tokens += doc.size();
    if (total_tokens == 0) throw std::invalid_argument("empty corpus");
    if (total_tokens < static_cast<std::uint64_t>(order)) {
        throw std::invalid_argument("corpus shorter than model order");
    }

    NgramLM lm;
    lm.order = order;
    lm.k = k;
    lm.vocab = vocab;
    lm.context_bits = bits_for_vocab(vocab.size());
    if ((order - 1) * lm.context_bits > 64) {
        throw std::invalid_argument("order too large to pack contexts for this vocabulary");
    }
    lm.unigram.assign(static_cast<size_t>(vocab.size()), 0);
    lm.tables.resize(static_cast<size_t>(std::max(0, order - 1)));

    std::vector<std::unordered_map<std::uint64_t, std::map<TokenId, std::uint32_t>>> raw(
        static_cast<size_t>(std::max(0, order - 1)));

    for (const TokenSeq& doc : corpus) {
        for (size_t i = 0; i < doc.size(); ++i) {
            const TokenId v = doc[i];
            if (v < 0 || v >= vocab.size()) throw std::invalid_argument("token id out of range");
            ++lm.unigram[static_cast<size_t>(v)];
            for (int len = 1; len <= order - 1 && static_cast<size_t>(len) <= i; ++len) {
                std::span<const TokenId> ctx(doc.data() + i - len, static_cast<size_t>(len));
                ++raw[static_cast<size_t>(len - 1)][lm.pack_context(ctx)][v];
            }
        }
    }
    lm.unigram_total = total_tokens;

    for (size_t len = 0; len < raw.size(); ++len) {
        auto& table = lm.tables[len];
        table.reserve(raw[len].size());
        for (auto& [key, conts] : raw[len]) {
            NgramLM::ContextStats stats;
            stats.counts.assign(conts.begin(), conts.end());  // std::map keeps ids sorted
            for (auto& [tok, cnt] : stats.counts) stats.total += cnt;
            table.emplace(key, std::move(stats));
        }
    }
    return lm;
}

Eigen::ArrayXd conditional(const NgramLM& lm, std::span<const TokenId> context) {
    const int vocab_size = lm.vocab.size();
    const double floor_denom_add = lm.k * vocab_size;

    int len = std::min<int>(lm.order - 1, static_cast<int>(context.size()));
    for (; len >= 1; --len) {
        std::span<const TokenId> suffix = context.subspan(context.size() - static_cast<size_t>(len));
        const auto& table = lm.tables[static_cast<size_t>(len - 1)];
        auto it = table.find(lm.pack_context(suffix));
        if (it == table.end()) continue;
        const auto& stats = it->second;
        Eigen::ArrayXd p = Eigen::ArrayXd::Constant(vocab_size, lm.k);
        for (const auto& [tok, cnt] : stats.counts) p[tok] += cnt;
        return p / (static_cast<double>(stats.total) + floor_denom_add);
    }

    Eigen::ArrayXd p(vocab_size);
    for (int v = 0; v < vocab_size; ++v) p[v] = static_cast<double>(lm.unigram[static_cast<size_t>(v)]) + lm.k;
    return p / (static_cast<double>(lm.unigram_total) + floor_denom_add);
}

NextTokenDistribution next_dist(const NgramLM& lm, const TokenSeq& history) {
    const size_t ctx_len = std::min<size_t>(history.size(), static_cast<size_t>(lm.order - 1));
    std::span<const TokenId> ctx(history.data() + history.size() - ctx_len, ctx_len);
    return NextTokenDistribution{conditional(lm, ctx).log()};
}

void save_model(const NgramLM& lm, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model: " + path.string());
    out.write(kMagic, 4);
    write_u32(out, 1);
    write_u32(out, static_cast<std::uint32_t>(lm.order));
    write_f64(out, lm.k);
    write_u64(out, lm.vocab.fingerprint());
    write_u32(out, static_cast<std::uint32_t>(lm.vocab.size()));
    for (const std::string& t : lm.vocab.tokens) {
        write_u32(out, static_cast<std::uint32_t>(t.size()));
        out.write(t.data(), static_cast<std::streamsize>(t.size()));
    }
    write_u64(out, lm.unigram_total);
    for (std::uint64_t c : lm.unigram) write_u64(out, c);
    for (const auto& table : lm.tables) {
        std::vector<std::uint64_t> keys;
        keys.reserve(table.size());
        for (const auto& [key, stats] : table) keys.push_back(key);
        std::sort(keys.begin(), keys.end());
        write_u64(out, keys.size());
        for (std::uint64_t key : keys) {
            const auto& stats = table.at(key);
            write_u64(out, key);
            write_u64(out, stats.total);
            write_u32(out, static_cast<std::uint32_t>(stats.counts.size()));
            for (const auto& [tok, cnt] : stats.counts) {
                write_u32(out, static_cast<std::uint32_t>(tok));
                write_u32(out, cnt);
            }
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

NgramLM load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read model: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a model file: " + path.string());
    if (read_u32(in) != 1) throw std::runtime_error("unsupported model version");

    NgramLM lm;
    lm.order = static_cast<int>(read_u32(in));
    lm.k = read_f64(in);
    const std::uint64_t vocab_fp = read_u64(in);
    const std::uint32_t vocab_size = read_u32(in);
    std::vector<std::string> tokens(vocab_size);
    for (auto& t : tokens) {
        t.resize(read_u32(in));
        in.read(t.data(), static_cast<std::streamsize>(t.size()));
    }
    lm.vocab = Vocabulary::from_tokens(std::move(tokens));
    if (lm.vocab.fingerprint() != vocab_fp) {
        throw std::runtime_error("vocabulary hash mismatch in model file");
    }
    lm.context_bits = bits_for_vocab(lm.vocab.size());
    lm.unigram_total = read_u64(in);
    lm.unigram.resize(vocab_size);
    for (auto& c : lm.unigram) c = read_u64(in);
    lm.tables.resize(static_cast<size_t>(std::max(0, lm.order - 1)));
    for (auto& table : lm.tables) {
        const std::uint64_t n = read_u64(in);
        table.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            const std::uint64_t key = read_u64(in);
            NgramLM::ContextStats stats;
            stats.total = read_u64(in);
            stats.counts.resize(read_u32(in));
            for (auto& [tok, cnt] : stats.counts) {
                tok = static_cast<TokenId>(read_u32(in));
                cnt = read_u32(in);
            }
            table.emplace(key, std::move(stats));
        }
    }
    if (!in) throw std::runtime_error("truncated model file: " + path.string());
    return lm;
}

std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path.string());
    std::uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return std::string(hex);
}

namespace {

// Z-array over s: z[i] = longest common prefix of s and s[i..].
std::vector<int> z_array(const std::vector<TokenId>& s) {
    const int n = static_cast<int>(s.size());
    std::vector<int> z(static_cast<size_t>(n), 0);
    if (n == 0) return z;
    z[0] = n;
    int l = 0, r = 0;
    for (int i = 1; i < n; ++i) {
        if (i < r) z[static_cast<size_t>(i)] = std::min(r - i, z[static_cast<size_t>(i - l)]);
        while (i + z[static_cast<size_t>(i)] < n &&
               s[static_cast<size_t>(z[static_cast<size_t>(i)])] ==
                   s[static_cast<size_t>(i + z[static_cast<size_t>(i)])]) {
            ++z[static_cast<size_t>(i)];
        }
        if (i + z[static_cast<size_t>(i)] > r) {
            l = i;
            r = i + z[static_cast<size_t>(i)];
        }
    }
    return z;
}

}  // namespace

std::pair<int, TokenId> longest_suffix_match(const TokenSeq& history, const TokenSeq& conversation,
                                             int min_match) {
    const int n = static_cast<int>(conversation.size());
    const int pat_len = std::min<int>(static_cast<int>(history.size()), n);
    if (pat_len == 0 || n < 2 || min_match < 1) return {0, -1};

    // Longest suffix of history == longest prefix of reversed history found
    // in reversed conversation. Continuation requires the match to end
    // before the conversation's last position (j >= 1 in reversed coords).
    std::vector<TokenId> s;
    s.reserve(static_cast<size_t>(pat_len + 1 + n));
    for (int i = 0; i < pat_len; ++i) s.push_back(history[history.size() - 1 - static_cast<size_t>(i)]);
    s.push_back(-1);  // separator outside the id space
    for (int j = 0; j < n; ++j) s.push_back(conversation[static_cast<size_t>(n - 1 - j)]);

    const std::vector<int> z = z_array(s);
    int best_len = 0, best_j = -1;
    for (int j = 1; j < n; ++j) {
        const int match = z[static_cast<size_t>(pat_len + 1 + j)];
        if (match > best_len) {  // ties keep the smallest j = most recent occurrence
            best_len = match;
            best_j = j;
        }
    }
    if (best_len < min_match) return {0, -1};
    return {best_len, conversation[static_cast<size_t>(n - best_j)]};
}

NextTokenDistribution agent_next_dist(const CopyMixtureAgent& agent, const TokenSeq& history,
                                      const TokenSeq& conversation) {
    if (agent.base == nullptr) throw std::invalid_argument("agent has no base model");
    if (agent.lambda < 0.0 || agent.lambda > 1.0) throw std::invalid_argument("lambda must be in [0,1]");
    if (agent.min_match < 1) throw std::invalid_argument("min_match must be >= 1");

    NextTokenDistribution base = next_dist(*agent.base, history);
    if (agent.lambda == 0.0) return base;

    const auto [len, cont] = longest_suffix_match(history, conversation, agent.min_match);
    if (len < agent.min_match) return base;

    Eigen::ArrayXd p = base.logits.exp();
    p *= (1.0 - agent.lambda);
    p[cont] += agent.lambda;
    // Floor keeps logits finite at lambda = 1.
    p = p.max(1e-300);
    return NextTokenDistribution{p.log()};
}

}  // namespace mimicry
