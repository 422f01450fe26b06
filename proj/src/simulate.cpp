#include "mimicry/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>
#include <unordered_set>

namespace mimicry {

const std::string& default_conversation_prompt() {
    static const std::string prompt =
        "A chat between two people talking about everyday topics such as Weather, Family, "
        "Work/School, Hobbies/Interests, Entertainment, Travel, Food/Cooking, Current Events, "
        "Technology, Health/Fitness, Pets, Relationships, Home/Living, Fashion/Style, "
        "Goals/Ambitions.\nThe two people listen to each other intently and carry the conversation "
        "naturally and they talk at length. Answer with at least 50 words each time.\n\n### Person "
        "A: Hey there! How's the weather treating you lately? It's been so unpredictable here. One "
        "day it's sunny and warm, and the next it's pouring rain.\n\n### Person B: Oh, I know what "
        "you mean! The weather has been all over the place lately. It makes planning outdoor "
        "activities a bit tricky, doesn't it? I'm hoping for some more consistent sunshine soon so "
        "I can spend more time hiking and enjoying nature. How about you? Any outdoor plans in "
        "mind?";
    return prompt;
}

void ExperimentGrid::validate() const {
    if (schemes.empty()) throw std::invalid_argument("grid needs at least one scheme");
    for (Scheme s : schemes) {
        if (s == Scheme::none) throw std::invalid_argument("grid schemes must be greenlist or expmin");
    }
    if (ngram_widths.empty()) throw std::invalid_argument("grid needs at least one ngram width");
    if (temperatures.empty()) throw std::invalid_argument("grid needs at least one temperature pair");
    if (concat_responses.empty()) throw std::invalid_argument("grid needs at least one #R value");
    if (exchanges < 1) throw std::invalid_argument("exchanges must be >= 1");
    const int max_r = *std::max_element(concat_responses.begin(), concat_responses.end());
    if (exchanges < max_r) throw std::invalid_argument("exchanges must cover max #R");
    if (tokens_per_turn < 1) throw std::invalid_argument("tokens_per_turn must be >= 1");
    if (conversations_per_cell < 1) throw std::invalid_argument("conversations_per_cell must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0,1)");
    if (delta < 0.0) throw std::invalid_argument("delta must be >= 0");
    if (copy_lambda < 0.0 || copy_lambda > 1.0) throw std::invalid_argument("copy_lambda must be in [0,1]");
    if (min_match < 1) throw std::invalid_argument("min_match must be >= 1");
    for (int h : ngram_widths) {
        if (h < 0) throw std::invalid_argument("ngram width must be >= 0");
    }
    for (int r : concat_responses) {
        if (r < 1) throw std::invalid_argument("#R must be >= 1");
    }
}

ConversationRecord run_conversation(const NgramLM& speaker_lm, const WatermarkConfig& speaker_cfg,
                                    const CopyMixtureAgent& responder, double responder_temperature,
                                    const TokenSeq& seed_prompt, int exchanges, int tokens_per_turn,
                                    std::uint64_t run_seed) {
    if (exchanges < 1) throw std::invalid_argument("exchanges must be >= 1");
    speaker_cfg.validate();

    ConversationRecord rec;
    rec.meta.key = speaker_cfg.key.value;
    rec.meta.temperature = speaker_cfg.temperature;
    rec.meta.ngram_h = speaker_cfg.ngram_h;
    rec.meta.run_seed = run_seed;

    SplitMix64 rng(run_seed);
    NextTokenFn speaker_fn = [&speaker_lm](const TokenSeq& history) { return next_dist(speaker_lm, history); };

    WatermarkConfig responder_cfg;
    responder_cfg.scheme = Scheme::none;
    responder_cfg.ngram_h = 0;
    responder_cfg.temperature = responder_temperature;

    TokenSeq transcript = seed_prompt;
    for (int e = 0; e < exchanges; ++e) {
        TokenSeq speaker_turn = generate(speaker_fn, transcript, speaker_cfg, tokens_per_turn, rng);
        transcript.insert(transcript.end(), speaker_turn.begin(), speaker_turn.end());
        rec.turns.push_back(Turn{Role::watermarked_speaker, std::move(speaker_turn)});

        const TokenSeq frozen = transcript;
        NextTokenFn responder_fn = [&responder, &frozen](const TokenSeq& history) {
            return agent_next_dist(responder, history, frozen);
        };
        TokenSeq responder_turn = generate(responder_fn, transcript, responder_cfg, tokens_per_turn, rng);
        transcript.insert(transcript.end(), responder_turn.begin(), responder_turn.end());
        rec.turns.push_back(Turn{Role::responder, std::move(responder_turn)});
    }
    return rec;
}

namespace {

TokenSeq concat_side(const ConversationRecord& rec, Role role, int first_r) {
    TokenSeq out;
    int taken = 0;
    for (const Turn& turn : rec.turns) {
        if (turn.role != role) continue;
        out.insert(out.end(), turn.text.begin(), turn.text.end());
        if (++taken == first_r) break;
    }
    if (taken < first_r) throw std::invalid_argument("record has fewer turns than requested #R");
    return out;
}

DetectionResult detect_with(const TokenSeq& text, const WatermarkConfig& cfg, const DedupPolicy& policy) {
    switch (cfg.scheme) {
        case Scheme::greenlist: return detect_greenlist(text, cfg, policy);
        case Scheme::expmin: return detect_expmin(text, cfg, policy);
        case Scheme::none: break;
    }
    throw std::invalid_argument("detection requires a watermark scheme");
}

}  // namespace

SideResults score_conversation(const ConversationRecord& rec, const WatermarkConfig& cfg,
                               int concat_r, DedupMode mode) {
    if (concat_r < 1) throw std::invalid_argument("#R must be >= 1");
    TokenSeq speaker_text = concat_side(rec, Role::watermarked_speaker, concat_r);
    TokenSeq responder_text = concat_side(rec, Role::responder, concat_r);

    DedupPolicy prompt_policy =
        mode == DedupMode::cross_prompt ? DedupPolicy::in_text() : DedupPolicy{mode, std::nullopt};
    DedupPolicy response_policy = mode == DedupMode::cross_prompt
                                      ? DedupPolicy::cross_prompt(speaker_text)
                                      : DedupPolicy{mode, std::nullopt};

    SideResults out{detect_with(speaker_text, cfg, prompt_policy),
                    detect_with(responder_text, cfg, response_policy)};
    return out;
}

std::vector<std::uint64_t> derive_keys(std::uint64_t master_seed, int count) {
    std::vector<std::uint64_t> keys;
    keys.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        keys.push_back(mix64(master_seed ^ mix64(0x6b6579ull + static_cast<std::uint64_t>(i))));
    }
    return keys;
}

std::vector<CellResult> run_grid(const ExperimentGrid& grid, const GridModels& models,
                                 const TokenSeq& seed_prompt, std::uint64_t master_seed, int jobs,
                                 const ProgressFn& progress) {
    grid.validate();
    if (models.speaker == nullptr || models.responder_base == nullptr) {
        throw std::invalid_argument("grid needs speaker and responder models");
    }

    const std::vector<std::uint64_t> keys =
        grid.keys.empty() ? derive_keys(master_seed, 3) : grid.keys;

    struct CellSpec {
        Scheme scheme;
        int h;
        TemperaturePair temps;
    };
    std::vector<CellSpec> specs;
    for (Scheme scheme : grid.schemes) {
        for (int h : grid.ngram_widths) {
            for (const TemperaturePair& temps : grid.temperatures) {
                specs.push_back(CellSpec{scheme, h, temps});
            }
        }
    }

    std::vector<CellResult> cells(specs.size());
    for (size_t ci = 0; ci < specs.size(); ++ci) {
        cells[ci].scheme = specs[ci].scheme;
        cells[ci].ngram_h = specs[ci].h;
        cells[ci].temps = specs[ci].temps;
        cells[ci].keys = keys;
        cells[ci].concat_responses = grid.concat_responses;
        cells[ci].per_key.assign(keys.size(),
                                 std::vector<std::vector<ConversationScores>>(
                                     grid.concat_responses.size(),
                                     std::vector<ConversationScores>(
                                         static_cast<size_t>(grid.conversations_per_cell))));
    }

    const int total_units = static_cast<int>(specs.size() * keys.size()) * grid.conversations_per_cell;
    std::atomic<int> next_unit{0};
    std::atomic<int> done_units{0};
    const int units_per_cell = static_cast<int>(keys.size()) * grid.conversations_per_cell;

    CopyMixtureAgent agent{models.responder_base, grid.copy_lambda, grid.min_match};

    auto worker = [&]() {
        for (;;) {
            const int unit = next_unit.fetch_add(1);
            if (unit >= total_units) return;
            const int ci = unit / units_per_cell;
            const int within = unit % units_per_cell;
            const int ki = within / grid.conversations_per_cell;
            const int vi = within % grid.conversations_per_cell;
            const CellSpec& spec = specs[static_cast<size_t>(ci)];

            WatermarkConfig cfg;
            cfg.scheme = spec.scheme;
            cfg.key = SecretKey{keys[static_cast<size_t>(ki)]};
            cfg.ngram_h = spec.h;
            cfg.gamma = grid.gamma;
            cfg.delta = grid.delta;
            cfg.temperature = spec.temps.watermarked;
            cfg.alpha = grid.alpha;

            std::uint64_t seed = master_seed;
            seed = mix64(seed ^ mix64(static_cast<std::uint64_t>(ci)));
            seed = mix64(seed ^ mix64(static_cast<std::uint64_t>(ki)));
            seed = mix64(seed ^ mix64(static_cast<std::uint64_t>(vi)));

            ConversationRecord rec = run_conversation(*models.speaker, cfg, agent, spec.temps.responder,
                                                      seed_prompt, grid.exchanges, grid.tokens_per_turn,
                                                      seed);
            for (size_t ri = 0; ri < grid.concat_responses.size(); ++ri) {
                const int r = grid.concat_responses[ri];
                SideResults masked = score_conversation(rec, cfg, r, DedupMode::in_text);
                SideResults dedup = score_conversation(rec, cfg, r, DedupMode::cross_prompt);
                ConversationScores& slot = cells[static_cast<size_t>(ci)]
                                               .per_key[static_cast<size_t>(ki)][ri][static_cast<size_t>(vi)];
                slot.p_prompt = masked.prompt.p_value;
                slot.p_response = masked.response.p_value;
                slot.p_response_dedup = dedup.response.p_value;
            }
            const int done = done_units.fetch_add(1) + 1;
            if (progress && (done % 64 == 0 || done == total_units)) progress(done, total_units);
        }
    };

    const int n_threads = std::max(1, jobs);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(n_threads));
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    return cells;
}

nlohmann::json CellResult::to_json() const {
    nlohmann::json j;
    j["scheme"] = scheme_name(scheme);
    j["h"] = ngram_h;
    j["temperature_watermarked"] = temps.watermarked;
    j["temperature_responder"] = temps.responder;
    j["keys"] = keys;
    j["concat_responses"] = concat_responses;
    nlohmann::json per_key_json = nlohmann::json::array();
    for (const auto& key_block : per_key) {
        nlohmann::json rs = nlohmann::json::array();
        for (const auto& convs : key_block) {
            nlohmann::json arr = nlohmann::json::array();
            for (const ConversationScores& s : convs) {
                arr.push_back({{"p_prompt", s.p_prompt},
                               {"p_response", s.p_response},
                               {"p_response_dedup", s.p_response_dedup}});
            }
            rs.push_back(std::move(arr));
        }
        per_key_json.push_back(std::move(rs));
    }
    j["per_key"] = std::move(per_key_json);
    return j;
}

void write_cells_jsonl(const std::filesystem::path& path, std::span<const CellResult> cells) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write results: " + path.string());
    for (const CellResult& cell : cells) out << cell.to_json().dump() << '\n';
}

void write_conversations_csv(const std::filesystem::path& path, std::span<const CellResult> cells) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write csv: " + path.string());
    out << "scheme,key_id,h,temp_watermarked,temp_responder,concat_r,conversation,"
           "p_prompt,p_response,p_response_dedup\n";
    char buf[512];
    for (const CellResult& cell : cells) {
        for (size_t ki = 0; ki < cell.per_key.size(); ++ki) {
            for (size_t ri = 0; ri < cell.concat_responses.size(); ++ri) {
                const auto& convs = cell.per_key[ki][ri];
                for (size_t vi = 0; vi < convs.size(); ++vi) {
                    std::snprintf(buf, sizeof(buf),
                                  "%s,%" PRIu64 ",%d,%.17g,%.17g,%d,%zu,%.17g,%.17g,%.17g\n",
                                  scheme_name(cell.scheme), cell.keys[ki], cell.ngram_h,
                                  cell.temps.watermarked, cell.temps.responder,
                                  cell.concat_responses[ri], vi, convs[vi].p_prompt,
                                  convs[vi].p_response, convs[vi].p_response_dedup);
                    out << buf;
                }
            }
        }
    }
}

namespace {

[[noreturn]] void config_error(const std::string& what) {
    throw std::invalid_argument("config: " + what);
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
    static const std::unordered_set<std::string> known = {
        "schemes",        "keys",          "num_keys",        "ngram_widths",
        "temperatures",   "exchanges",     "tokens_per_turn", "concat_responses",
        "conversations_per_cell", "alpha", "gamma",           "delta",
        "copy_lambda",    "min_match",     "speaker_model",   "responder_model",
        "output_dir",     "prompt",        "master_seed",     "jobs",
    };
    if (!j.is_object()) config_error("top level must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) config_error("unknown key '" + it.key() + "'");
    }

    RunConfig cfg;
    ExperimentGrid& g = cfg.grid;
    if (j.contains("schemes")) {
        g.schemes.clear();
        for (const auto& s : j.at("schemes")) g.schemes.push_back(scheme_from_name(s.get<std::string>()));
    }
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("keys")) {
        g.keys.clear();
        for (const auto& k : j.at("keys")) g.keys.push_back(k.get<std::uint64_t>());
        if (j.contains("num_keys")) config_error("give either keys or num_keys, not both");
    } else if (j.contains("num_keys")) {
        g.keys = derive_keys(cfg.master_seed, j.at("num_keys").get<int>());
    }
    if (j.contains("ngram_widths")) g.ngram_widths = j.at("ngram_widths").get<std::vector<int>>();
    if (j.contains("temperatures")) {
        g.temperatures.clear();
        for (const auto& t : j.at("temperatures")) {
            g.temperatures.push_back(
                TemperaturePair{t.at("watermarked").get<double>(), t.at("responder").get<double>()});
        }
    }
    if (j.contains("exchanges")) g.exchanges = j.at("exchanges").get<int>();
    if (j.contains("tokens_per_turn")) g.tokens_per_turn = j.at("tokens_per_turn").get<int>();
    if (j.contains("concat_responses")) g.concat_responses = j.at("concat_responses").get<std::vector<int>>();
    if (j.contains("conversations_per_cell")) {
        g.conversations_per_cell = j.at("conversations_per_cell").get<int>();
    }
    if (j.contains("alpha")) g.alpha = j.at("alpha").get<double>();
    if (j.contains("gamma")) g.gamma = j.at("gamma").get<double>();
    if (j.contains("delta")) g.delta = j.at("delta").get<double>();
    if (j.contains("copy_lambda")) g.copy_lambda = j.at("copy_lambda").get<double>();
    if (j.contains("min_match")) g.min_match = j.at("min_match").get<int>();
    if (j.contains("speaker_model")) cfg.speaker_model = j.at("speaker_model").get<std::string>();
    if (j.contains("responder_model")) cfg.responder_model = j.at("responder_model").get<std::string>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("prompt")) cfg.prompt = j.at("prompt").get<std::string>();
    if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();

    if (cfg.speaker_model.empty()) config_error("speaker_model is required");
    if (cfg.responder_model.empty()) config_error("responder_model is required");
    if (cfg.jobs < 1) config_error("jobs must be >= 1");
    g.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace mimicry
