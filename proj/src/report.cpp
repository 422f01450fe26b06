#include "mimicry/report.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace mimicry {

namespace {

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

MeanSd mean_sd(std::span<const double> xs) {
    MeanSd out;
    if (xs.empty()) return out;
    double sum = 0.0;
    for (double x : xs) sum += x;
    out.mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    double sq = 0.0;
    for (double x : xs) sq += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(sq / static_cast<double>(xs.size() - 1));
    return out;
}

}  // namespace

MimicryRow summarize(const CellResult& cell, int concat_r, double alpha) {
    if (cell.per_key.empty()) throw std::invalid_argument("empty cell");
    const auto it = std::find(cell.concat_responses.begin(), cell.concat_responses.end(), concat_r);
    if (it == cell.concat_responses.end()) throw std::invalid_argument("#R not present in cell");
    const size_t ri = static_cast<size_t>(it - cell.concat_responses.begin());

    std::vector<double> p, r, pandr, pltr, r_dedup;
    int conversations = 0;
    for (const auto& key_block : cell.per_key) {
        const auto& convs = key_block.at(ri);
        if (convs.empty()) throw std::invalid_argument("empty cell");
        conversations = static_cast<int>(convs.size());
        int np = 0, nr = 0, nboth = 0, nlt = 0, nrd = 0;
        for (const ConversationScores& s : convs) {
            const bool fp = s.p_prompt < alpha;
            const bool fr = s.p_response < alpha;
            np += fp;
            nr += fr;
            nboth += fp && fr;
            nlt += s.p_response < s.p_prompt;  // strictly stronger
            nrd += s.p_response_dedup < alpha;
        }
        const double n = static_cast<double>(convs.size());
        p.push_back(np / n);
        r.push_back(nr / n);
        pandr.push_back(nboth / n);
        pltr.push_back(nlt / n);
        r_dedup.push_back(nrd / n);
    }

    MimicryRow row;
    row.scheme = cell.scheme;
    row.ngram_h = cell.ngram_h;
    row.temps = cell.temps;
    row.concat_r = concat_r;
    row.num_keys = static_cast<int>(cell.per_key.size());
    row.conversations_per_key = conversations;
    const MeanSd mp = mean_sd(p), mr = mean_sd(r), mb = mean_sd(pandr), ml = mean_sd(pltr),
                 md = mean_sd(r_dedup);
    row.p_mean = mp.mean;
    row.p_sd = mp.sd;
    row.r_mean = mr.mean;
    row.r_sd = mr.sd;
    row.pandr_mean = mb.mean;
    row.pandr_sd = mb.sd;
    row.pltr_mean = ml.mean;
    row.pltr_sd = ml.sd;
    row.r_dedup_mean = md.mean;
    row.r_dedup_sd = md.sd;
    return row;
}

std::vector<MimicryRow> summarize_all(std::span<const CellResult> cells, double alpha) {
    std::vector<MimicryRow> rows;
    for (const CellResult& cell : cells) {
        for (int r : cell.concat_responses) rows.push_back(summarize(cell, r, alpha));
    }
    return rows;
}

void write_report_csv(const std::filesystem::path& path, std::span<const MimicryRow> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + path.string());
    out << "scheme,h,temp_watermarked,temp_responder,concat_r,keys,conversations_per_key,"
           "P_mean,P_sd,R_mean,R_sd,PandR_mean,PandR_sd,PltR_mean,PltR_sd,"
           "R_dedup_mean,R_dedup_sd\n";
    char buf[640];
    for (const MimicryRow& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%s,%d,%.17g,%.17g,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                      "%.17g,%.17g\n",
                      scheme_name(r.scheme), r.ngram_h, r.temps.watermarked, r.temps.responder,
                      r.concat_r, r.num_keys, r.conversations_per_key, r.p_mean, r.p_sd, r.r_mean,
                      r.r_sd, r.pandr_mean, r.pandr_sd, r.pltr_mean, r.pltr_sd, r.r_dedup_mean,
                      r.r_dedup_sd);
        out << buf;
    }
}

std::vector<SweepPoint> ngram_sweep_view(std::span<const MimicryRow> rows) {
    std::map<int, const MimicryRow*> by_h;
    for (const MimicryRow& row : rows) {
        if (!by_h.emplace(row.ngram_h, &row).second) {
            throw std::invalid_argument("duplicate ngram width in sweep input");
        }
    }
    if (by_h.size() < 2) throw std::invalid_argument("sweep needs at least 2 ngram widths");

    std::vector<SweepPoint> points;
    for (const auto& [h, row] : by_h) {
        points.push_back(SweepPoint{h, "P", row->p_mean});
        points.push_back(SweepPoint{h, "R", row->r_mean});
        points.push_back(SweepPoint{h, "PandR", row->pandr_mean});
        points.push_back(SweepPoint{h, "PltR", row->pltr_mean});
    }
    return points;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepPoint> points) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write sweep: " + path.string());
    out << "h,metric,value\n";
    char buf[128];
    for (const SweepPoint& p : points) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%.17g\n", p.ngram_h, p.metric.c_str(), p.value);
        out << buf;
    }
}

OverlapAnnotation annotate_overlap(const TokenSeq& prompt, const TokenSeq& response, int min_len) {
    if (min_len < 1) throw std::invalid_argument("min_len must be >= 1");
    OverlapAnnotation ann;
    ann.prompt_marked.assign(prompt.size(), false);
    ann.response_marked.assign(response.size(), false);
    const int np = static_cast<int>(prompt.size());
    const int nr = static_cast<int>(response.size());

    // Walk every diagonal; a maximal run of equal tokens is a maximal shared
    // span on that alignment.
    for (int d = -(np - 1); d <= nr - 1; ++d) {
        int i = std::max(0, -d);
        int j = i + d;
        while (i < np && j < nr) {
            if (prompt[static_cast<size_t>(i)] != response[static_cast<size_t>(j)]) {
                ++i;
                ++j;
                continue;
            }
            int run = 0;
            while (i + run < np && j + run < nr &&
                   prompt[static_cast<size_t>(i + run)] == response[static_cast<size_t>(j + run)]) {
                ++run;
            }
            if (run >= min_len) {
                for (int s = 0; s < run; ++s) {
                    ann.prompt_marked[static_cast<size_t>(i + s)] = true;
                    ann.response_marked[static_cast<size_t>(j + s)] = true;
                }
            }
            i += run;
            j += run;
        }
    }
    return ann;
}

std::string render_annotation_text(const TokenSeq& ids, const std::vector<bool>& marked,
                                   const Vocabulary& vocab) {
    std::string out;
    bool open = false;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        if (marked[i] && !open) {
            out += "«";
            open = true;
        }
        out += vocab.surface(ids[i]);
        const bool next_marked = i + 1 < ids.size() && marked[i + 1];
        if (open && !next_marked) {
            out += "»";
            open = false;
        }
    }
    return out;
}

namespace {

void append_html_escaped(std::string& out, const std::string& s) {
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out.push_back(c);
        }
    }
}

void append_html_side(std::string& out, const TokenSeq& ids, const std::vector<bool>& marked,
                      const Vocabulary& vocab, const char* css_class) {
    bool open = false;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        if (marked[i] && !open) {
            out += "<span class=\"";
            out += css_class;
            out += "\">";
            open = true;
        }
        append_html_escaped(out, vocab.surface(ids[i]));
        const bool next_marked = i + 1 < ids.size() && marked[i + 1];
        if (open && !next_marked) {
            out += "</span>";
            open = false;
        }
    }
}

}  // namespace

std::string render_annotation_html(const TokenSeq& prompt, const TokenSeq& response,
                                   const OverlapAnnotation& ann, const Vocabulary& vocab) {
    std::string out;
    out +=
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        "<title>Overlap annotation</title>\n<style>\n"
        "body { font-family: sans-serif; max-width: 60em; margin: 2em auto; line-height: 1.6; }\n"
        ".prompt-overlap { background: #b5e8b5; }\n"
        ".response-overlap { background: #b5ccf5; }\n"
        "h2 { border-bottom: 1px solid #ccc; }\n"
        "</style>\n</head>\n<body>\n<h2>Prompt</h2>\n<p>";
    append_html_side(out, prompt, ann.prompt_marked, vocab, "prompt-overlap");
    out += "</p>\n<h2>Response</h2>\n<p>";
    append_html_side(out, response, ann.response_marked, vocab, "response-overlap");
    out += "</p>\n</body>\n</html>\n";
    return out;
}

std::vector<TrajectoryPoint> trajectory(std::span<const ConversationRecord> records,
                                        const NgramLM& observer, const NgramLM& performer) {
    if (records.empty()) throw std::invalid_argument("no records");
    // (side, turn ordinal) -> scores across conversations
    std::map<std::pair<int, int>, std::vector<double>> buckets;
    for (const ConversationRecord& rec : records) {
        std::map<Role, int> ordinal;
        for (const Turn& turn : rec.turns) {
            const int idx = ordinal[turn.role]++;
            if (turn.text.size() < 2) continue;
            buckets[{static_cast<int>(turn.role), idx}].push_back(
                ratio_score(turn.text, observer, performer));
        }
    }
    std::vector<TrajectoryPoint> points;
    for (const auto& [key, scores] : buckets) {
        const MeanSd ms = mean_sd(scores);
        points.push_back(TrajectoryPoint{static_cast<Role>(key.first), key.second,
                                         static_cast<int>(scores.size()), ms.mean, ms.sd});
    }
    return points;
}

void write_trajectory_csv(const std::filesystem::path& path, std::span<const TrajectoryPoint> points) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write trajectory: " + path.string());
    out << "side,turn_index,count,mean,sd\n";
    char buf[192];
    for (const TrajectoryPoint& p : points) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.17g,%.17g\n", role_name(p.side), p.turn_index,
                      p.count, p.mean, p.sd);
        out << buf;
    }
}

}  // namespace mimicry
