// Command-line front end: train toy models, generate watermarked text, run
// detectors, drive the conversation grid, and post-process results.
//
// Exit codes: 0 success (for `detect`: flagged), 1 not flagged (`detect`
// only), 2+ usage/config/runtime errors. stdout carries data, stderr logs.

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "mimicry/detect.hpp"
#include "mimicry/report.hpp"
#include "mimicry/simulate.hpp"
#include "mimicry/toylm.hpp"

namespace {

using namespace mimicry;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string read_stdin() {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
}

// Documents are non-empty lines.
std::vector<TokenSeq> corpus_documents(const std::string& raw, const Vocabulary& vocab) {
    std::vector<TokenSeq> docs;
    std::istringstream in(raw);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        TokenSeq ids = tokenize(line, vocab);
        if (!ids.empty()) docs.push_back(std::move(ids));
    }
    return docs;
}

std::vector<std::string> corpus_lines(const std::string& raw) {
    std::vector<std::string> lines;
    std::istringstream in(raw);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag_seed) {
    if (flag_seed) return *flag_seed;
    if (const char* env = std::getenv("MIMICRY_LAB_SEED")) {
        return std::strtoull(env, nullptr, 10);
    }
    return 1;
}

// `--vocab` accepts either a plain vocabulary file or a model file (the
// embedded vocabulary is used).
Vocabulary load_any_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    if (in && magic[0] == 'M' && magic[1] == 'L' && magic[2] == 'M') {
        return load_model(path).vocab;
    }
    return Vocabulary::load(path);
}

int cmd_train_lm(const std::string& corpus_path, int order, double k, int min_count,
                 const std::string& out_path) {
    const std::string raw = read_text_file(corpus_path);
    const std::vector<std::string> lines = corpus_lines(raw);
    Vocabulary vocab = build_vocab(lines, min_count);
    std::vector<TokenSeq> docs = corpus_documents(raw, vocab);
    NgramLM lm = train_ngram(docs, vocab, order, k);
    save_model(lm, out_path);
    std::fprintf(stderr, "trained order-%d model on %zu documents\n", order, docs.size());
    std::printf("vocab_size: %d\n", vocab.size());
    std::printf("model_checksum: %s\n", file_checksum(out_path).c_str());
    return 0;
}

TokenSeq load_prompt(const std::string& prompt_arg, const Vocabulary& vocab) {
    const std::string text =
        prompt_arg == "builtin" ? default_conversation_prompt() : read_text_file(prompt_arg);
    return tokenize(text, vocab);
}

int cmd_generate(const std::string& model_path, const std::string& scheme, std::uint64_t key, int h,
                 double gamma, double delta, double temperature, const std::string& prompt_arg,
                 int max_tokens, bool stop_at_eot, std::optional<std::uint64_t> seed) {
    NgramLM lm = load_model(model_path);
    WatermarkConfig cfg;
    cfg.scheme = scheme_from_name(scheme);
    cfg.key = SecretKey{key};
    cfg.ngram_h = h;
    cfg.gamma = gamma;
    cfg.delta = delta;
    cfg.temperature = temperature;
    cfg.validate();

    TokenSeq prompt = load_prompt(prompt_arg, lm.vocab);
    SplitMix64 rng(resolve_seed(seed));
    NextTokenFn fn = [&lm](const TokenSeq& history) { return next_dist(lm, history); };
    std::optional<TokenId> stop;
    if (stop_at_eot) stop = Vocabulary::eot_id;
    TokenSeq out = generate(fn, prompt, cfg, max_tokens, rng, stop);
    std::printf("%s\n", detokenize(out, lm.vocab).c_str());
    return 0;
}

int cmd_detect(const std::string& vocab_path, const std::string& scheme, std::uint64_t key, int h,
               double gamma, double alpha, const std::string& dedup,
               const std::string& reference_path, const std::string& input_path) {
    Vocabulary vocab = load_any_vocab(vocab_path);
    WatermarkConfig cfg;
    cfg.scheme = scheme_from_name(scheme);
    cfg.key = SecretKey{key};
    cfg.ngram_h = h;
    cfg.gamma = gamma;
    cfg.alpha = alpha;

    const std::string text = input_path == "-" ? read_stdin() : read_text_file(input_path);
    TokenSeq ids = tokenize(text, vocab);

    DedupPolicy policy;
    policy.mode = dedup_mode_from_name(dedup);
    if (policy.mode == DedupMode::cross_prompt) {
        if (reference_path.empty()) throw std::invalid_argument("--dedup cross_prompt needs --reference");
        policy.reference = tokenize(read_text_file(reference_path), vocab);
    }

    DetectionResult res;
    switch (cfg.scheme) {
        case Scheme::greenlist: res = detect_greenlist(ids, cfg, policy); break;
        case Scheme::expmin: res = detect_expmin(ids, cfg, policy); break;
        case Scheme::none: throw std::invalid_argument("detect needs --scheme greenlist|expmin");
    }
    std::printf("%s\n", res.to_json().dump().c_str());
    return res.flagged ? 0 : 1;
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                 std::optional<int> jobs_override) {
    RunConfig cfg = load_run_config(config_path);
    if (seed_override) cfg.master_seed = *seed_override;
    if (jobs_override) cfg.jobs = *jobs_override;

    NgramLM speaker = load_model(cfg.speaker_model);
    NgramLM responder = load_model(cfg.responder_model);
    if (speaker.vocab.fingerprint() != responder.vocab.fingerprint()) {
        throw std::invalid_argument("speaker and responder models use different vocabularies");
    }
    TokenSeq prompt = load_prompt(cfg.prompt, speaker.vocab);

    std::filesystem::create_directories(cfg.output_dir);
    GridModels models{&speaker, &responder};
    auto progress = [](int done, int total) {
        std::fprintf(stderr, "\rconversations %d/%d", done, total);
        if (done == total) std::fprintf(stderr, "\n");
    };
    std::vector<CellResult> cells =
        run_grid(cfg.grid, models, prompt, cfg.master_seed, cfg.jobs, progress);

    write_cells_jsonl(cfg.output_dir / "cells.jsonl", cells);
    write_conversations_csv(cfg.output_dir / "conversations.csv", cells);
    std::vector<MimicryRow> rows = summarize_all(cells, cfg.grid.alpha);
    write_report_csv(cfg.output_dir / "mimicry_report.csv", rows);

    // Human-readable table on stdout.
    std::printf("scheme     h  T_w  T_r  #R     P      R    P&R    P<R  R(dedup)\n");
    for (const MimicryRow& r : rows) {
        std::printf("%-9s %2d %4.2g %4.2g  %2d  %5.1f%% %5.1f%% %5.2f%% %5.2f%%   %5.2f%%\n",
                    scheme_name(r.scheme), r.ngram_h, r.temps.watermarked, r.temps.responder,
                    r.concat_r, 100 * r.p_mean, 100 * r.r_mean, 100 * r.pandr_mean,
                    100 * r.pltr_mean, 100 * r.r_dedup_mean);
    }
    std::fprintf(stderr, "results written to %s\n", cfg.output_dir.string().c_str());
    return 0;
}

int cmd_annotate(const std::string& prompt_path, const std::string& response_path, int min_len,
                 const std::string& html_out) {
    const std::string prompt_text = read_text_file(prompt_path);
    const std::string response_text = read_text_file(response_path);

    // Annotation compares surfaces directly: build a throwaway vocabulary
    // over both texts so OOV collisions cannot create false overlaps.
    const std::string both[] = {prompt_text, response_text};
    Vocabulary vocab = build_vocab(both, 1);
    TokenSeq prompt = tokenize(prompt_text, vocab);
    TokenSeq response = tokenize(response_text, vocab);

    OverlapAnnotation ann = annotate_overlap(prompt, response, min_len);
    std::printf("P: %s\n", render_annotation_text(prompt, ann.prompt_marked, vocab).c_str());
    std::printf("R: %s\n", render_annotation_text(response, ann.response_marked, vocab).c_str());
    if (!html_out.empty()) {
        std::ofstream out(html_out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write html: " + html_out);
        out << render_annotation_html(prompt, response, ann, vocab);
        std::fprintf(stderr, "html written to %s\n", html_out.c_str());
    }
    return 0;
}

int cmd_score_dataset(const std::string& jsonl_path, const std::string& detector,
                      const std::string& observer_path, const std::string& performer_path,
                      std::uint64_t key, int h, double gamma, double alpha, int min_turns,
                      const std::string& calibrate_path, double fpr, const std::string& out_path) {
    if (detector == "ratio") {
        NgramLM observer = load_model(observer_path);
        NgramLM performer = load_model(performer_path);
        IngestStats ingest = ingest_jsonl(jsonl_path, observer.vocab);
        std::fprintf(stderr, "ingested %zu conversations (%d lines skipped)\n",
                     ingest.records.size(), ingest.skipped_lines);

        std::vector<ConversationRecord> kept;
        for (ConversationRecord& rec : ingest.records) {
            if (static_cast<int>(rec.turns.size()) >= min_turns) kept.push_back(std::move(rec));
        }
        std::fprintf(stderr, "%zu conversations with at least %d turns\n", kept.size(), min_turns);
        if (kept.empty()) {
            std::fprintf(stderr, "no conversations left after filtering\n");
            return 2;
        }

        if (!calibrate_path.empty()) {
            const std::string raw = read_text_file(calibrate_path);
            std::vector<double> scores;
            for (const std::string& line : corpus_lines(raw)) {
                TokenSeq ids = tokenize(line, observer.vocab);
                if (ids.size() >= 2) scores.push_back(ratio_score(ids, observer, performer));
            }
            CalibrationResult cal = calibrate_threshold(std::move(scores), fpr);
            if (cal.degenerate) std::fprintf(stderr, "warning: degenerate calibration scores\n");
            std::fprintf(stderr, "calibrated threshold at fpr %g: %.6f\n", fpr, cal.threshold);
            std::printf("threshold: %.17g\n", cal.threshold);
        }

        std::vector<TrajectoryPoint> points = trajectory(kept, observer, performer);
        write_trajectory_csv(out_path, points);
        std::fprintf(stderr, "trajectory written to %s\n", out_path.c_str());
        return 0;
    }

    // Watermark detectors over each turn.
    Vocabulary vocab = load_any_vocab(observer_path);
    WatermarkConfig cfg;
    cfg.scheme = scheme_from_name(detector);
    cfg.key = SecretKey{key};
    cfg.ngram_h = h;
    cfg.gamma = gamma;
    cfg.alpha = alpha;

    IngestStats ingest = ingest_jsonl(jsonl_path, vocab);
    std::vector<ConversationRecord> kept;
    for (ConversationRecord& rec : ingest.records) {
        if (static_cast<int>(rec.turns.size()) >= min_turns) kept.push_back(std::move(rec));
    }
    if (kept.empty()) {
        std::fprintf(stderr, "no conversations left after filtering\n");
        return 2;
    }

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write csv: " + out_path);
    out << "conversation,side,turn_index,scored,statistic,p_value,flagged\n";
    char buf[256];
    for (size_t ci = 0; ci < kept.size(); ++ci) {
        std::map<Role, int> ordinal;
        for (const Turn& turn : kept[ci].turns) {
            const int idx = ordinal[turn.role]++;
            DetectionResult res = cfg.scheme == Scheme::greenlist
                                      ? detect_greenlist(turn.text, cfg, DedupPolicy::in_text())
                                      : detect_expmin(turn.text, cfg, DedupPolicy::in_text());
            std::snprintf(buf, sizeof(buf), "%zu,%s,%d,%d,%.17g,%.17g,%d\n", ci,
                          role_name(turn.role), idx, res.scored, res.statistic, res.p_value,
                          res.flagged ? 1 : 0);
            out << buf;
        }
    }
    std::fprintf(stderr, "per-turn scores written to %s\n", out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Watermark mimicry laboratory"};
    app.require_subcommand(1);

    // train-lm
    auto* train = app.add_subcommand("train-lm", "Train a backoff ngram model from a text corpus");
    std::string corpus_path, train_out;
    int order = 3, min_count = 2;
    double k = 1e-4;
    train->add_option("--corpus", corpus_path, "training corpus, one document per line")->required();
    train->add_option("--order", order, "ngram order n")->capture_default_str();
    train->add_option("--k", k, "add-k smoothing constant")->capture_default_str();
    train->add_option("--min-count", min_count, "vocabulary frequency cutoff")->capture_default_str();
    train->add_option("--out", train_out, "output model path")->required();

    // generate
    auto* gen = app.add_subcommand("generate", "Generate (optionally watermarked) text");
    std::string gen_model, gen_scheme = "none", gen_prompt = "builtin";
    std::uint64_t gen_key = 0;
    int gen_h = 4, gen_max_tokens = 200;
    double gen_gamma = 0.25, gen_delta = 4.0, gen_temp = 1.0;
    bool gen_stop_eot = false;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--model", gen_model, "model file")->required();
    gen->add_option("--scheme", gen_scheme, "none|greenlist|expmin")->capture_default_str();
    gen->add_option("--key", gen_key, "watermark key")->capture_default_str();
    gen->add_option("--ngram", gen_h, "seeding window width h")->capture_default_str();
    gen->add_option("--gamma", gen_gamma, "green fraction")->capture_default_str();
    gen->add_option("--delta", gen_delta, "green logit bias")->capture_default_str();
    gen->add_option("--temp", gen_temp, "sampling temperature")->capture_default_str();
    gen->add_option("--prompt", gen_prompt, "'builtin' or a prompt file")->capture_default_str();
    gen->add_option("--max-tokens", gen_max_tokens, "tokens to generate")->capture_default_str();
    gen->add_flag("--stop-at-eot", gen_stop_eot, "stop at the EOT token");
    gen->add_option("--seed", gen_seed, "run seed (or MIMICRY_LAB_SEED)");

    // detect
    auto* det = app.add_subcommand("detect", "Run a watermark detector over text");
    std::string det_vocab, det_scheme, det_dedup = "in_text", det_reference, det_input = "-";
    std::uint64_t det_key = 0;
    int det_h = 4;
    double det_gamma = 0.25, det_alpha = 0.01;
    det->add_option("--vocab", det_vocab, "vocabulary file or model file")->required();
    det->add_option("--scheme", det_scheme, "greenlist|expmin")->required();
    det->add_option("--key", det_key, "watermark key")->capture_default_str();
    det->add_option("--ngram", det_h, "seeding window width h")->capture_default_str();
    det->add_option("--gamma", det_gamma, "green fraction")->capture_default_str();
    det->add_option("--alpha", det_alpha, "p-value threshold")->capture_default_str();
    det->add_option("--dedup", det_dedup, "off|in_text|cross_prompt")->capture_default_str();
    det->add_option("--reference", det_reference, "reference text for cross_prompt");
    det->add_option("input", det_input, "input file, or '-' for stdin")->capture_default_str();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run the conversation experiment grid");
    std::string sim_config;
    std::optional<std::uint64_t> sim_seed;
    std::optional<int> sim_jobs;
    sim->add_option("--config", sim_config, "JSON run configuration")->required();
    sim->add_option("--seed", sim_seed, "override master_seed");
    sim->add_option("--jobs", sim_jobs, "worker threads");

    // annotate
    auto* ann = app.add_subcommand("annotate", "Highlight shared token spans between two texts");
    std::string ann_prompt, ann_response, ann_html;
    int ann_min_len = 3;
    ann->add_option("--prompt", ann_prompt, "prompt text file")->required();
    ann->add_option("--response", ann_response, "response text file")->required();
    ann->add_option("--min-len", ann_min_len, "minimum shared span length")->capture_default_str();
    ann->add_option("--html", ann_html, "write an HTML rendering here");

    // score-dataset
    auto* sd = app.add_subcommand("score-dataset", "Score an ingested JSONL conversation dump");
    std::string sd_jsonl, sd_detector = "ratio", sd_observer, sd_performer, sd_calibrate;
    std::string sd_out = "trajectory.csv";
    std::uint64_t sd_key = 0;
    int sd_h = 4, sd_min_turns = 1;
    double sd_gamma = 0.25, sd_alpha = 0.01, sd_fpr = 0.01;
    sd->add_option("--jsonl", sd_jsonl, "JSONL conversations file")->required();
    sd->add_option("--detector", sd_detector, "ratio|greenlist|expmin")->capture_default_str();
    sd->add_option("--observer", sd_observer, "observer model (or vocab for watermark detectors)")
        ->required();
    sd->add_option("--performer", sd_performer, "performer model (ratio only)");
    sd->add_option("--key", sd_key, "watermark key")->capture_default_str();
    sd->add_option("--ngram", sd_h, "seeding window width h")->capture_default_str();
    sd->add_option("--gamma", sd_gamma, "green fraction")->capture_default_str();
    sd->add_option("--alpha", sd_alpha, "p-value threshold")->capture_default_str();
    sd->add_option("--min-turns", sd_min_turns, "keep conversations with at least this many turns")
        ->capture_default_str();
    sd->add_option("--calibrate", sd_calibrate, "reference segments for threshold calibration");
    sd->add_option("--fpr", sd_fpr, "calibration false positive rate")->capture_default_str();
    sd->add_option("--out", sd_out, "output CSV path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) return cmd_train_lm(corpus_path, order, k, min_count, train_out);
        if (gen->parsed()) {
            return cmd_generate(gen_model, gen_scheme, gen_key, gen_h, gen_gamma, gen_delta, gen_temp,
                                gen_prompt, gen_max_tokens, gen_stop_eot, gen_seed);
        }
        if (det->parsed()) {
            return cmd_detect(det_vocab, det_scheme, det_key, det_h, det_gamma, det_alpha, det_dedup,
                              det_reference, det_input);
        }
        if (sim->parsed()) return cmd_simulate(sim_config, sim_seed, sim_jobs);
        if (ann->parsed()) return cmd_annotate(ann_prompt, ann_response, ann_min_len, ann_html);
        if (sd->parsed()) {
            if (sd_detector == "ratio" && sd_performer.empty()) {
                throw std::invalid_argument("--detector ratio needs --performer");
            }
            return cmd_score_dataset(sd_jsonl, sd_detector, sd_observer, sd_performer, sd_key, sd_h,
                                     sd_gamma, sd_alpha, sd_min_turns, sd_calibrate, sd_fpr, sd_out);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
