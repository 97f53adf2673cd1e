#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "bridge/schema.hpp"
#include "bridge/text.hpp"

namespace bridge {

// One matched (question span, field, cell value) triple.
struct AnchorMatch {
    FieldId field = -1;
    std::string cell_value;   // s_c, source casing
    size_t q_begin = 0;       // character range of s_q in the question
    size_t q_end = 0;
    std::string q_span;       // s_q
    std::string matched;      // s_m, lowercased
    double beta_q = 0.0;      // |s_m| / |s_q|
    double beta_c = 0.0;      // |s_c| / |s_q|
};

struct MatchConfig {
    int k = 2;                   // max matches per field
    double theta_q = 0.5;
    double theta_c = 0.8;
    bool exclude_numbers = true;
    // Default cell filter: the match must cover theta_c of the cell value,
    // |s_m|/|s_c| = beta_q/beta_c >= theta_c. This keeps exact and
    // plural-variation matches while rejecting fragments of long cells.
    // The flag switches to reading theta_c as a plain ceiling on beta_c.
    bool theta_c_ceiling = false;
};

struct RawMatch {
    size_t sm_begin = 0, sm_len = 0;  // s_m inside the question
    size_t sq_begin = 0, sq_end = 0;  // whole-word span containing s_m
};

// Longest common substring of the lowercased cell inside the question, with
// the boundary heuristic: word boundaries must exist within [i-2, j+2] around
// the match, which accepts "cats"/"cat" but rejects "category"/"cat".
inline std::optional<RawMatch> longest_boundary_match(const std::string& question,
                                                      const std::string& cell) {
    if (question.empty() || cell.empty()) return std::nullopt;
    std::string q = to_lower(question);
    std::string c = to_lower(cell);
    const size_t nq = q.size(), nc = c.size();
    size_t best_len = 0, best_q = 0;
    std::vector<size_t> prev(nc + 1, 0), cur(nc + 1, 0);
    for (size_t i = 1; i <= nq; ++i) {
        for (size_t j = 1; j <= nc; ++j) {
            if (q[i - 1] == c[j - 1]) {
                cur[j] = prev[j - 1] + 1;
                if (cur[j] > best_len) {
                    best_len = cur[j];
                    best_q = i - cur[j];
                }
            } else {
                cur[j] = 0;
            }
        }
        std::swap(prev, cur);
    }
    if (best_len == 0) return std::nullopt;
    size_t i = best_q, j = best_q + best_len;  // [i, j) in the question
    // trim non-word edges the raw match may carry (e.g. a trailing space)
    while (i < j && !is_word_char(q[i])) ++i;
    while (j > i && !is_word_char(q[j - 1])) --j;
    if (i >= j) return std::nullopt;
    size_t ws = i, we = j;
    while (ws > 0 && is_word_char(q[ws - 1])) --ws;
    while (we < nq && is_word_char(q[we])) ++we;
    if (i - ws > 2 || we - j > 2) return std::nullopt;
    return RawMatch{i, j - i, ws, we};
}

inline std::pair<double, double> score(const RawMatch& m, const std::string& cell) {
    double sq_len = static_cast<double>(m.sq_end - m.sq_begin);
    return {static_cast<double>(m.sm_len) / sq_len,
            static_cast<double>(cell.size()) / sq_len};
}

inline std::vector<AnchorMatch> select_anchors(const std::string& question,
                                               const Schema& s,
                                               const MatchConfig& cfg = {}) {
    std::vector<AnchorMatch> out;
    for (FieldId f = 0; f < static_cast<FieldId>(s.fields.size()); ++f) {
        std::vector<AnchorMatch> per_field;
        for (const std::string& cell : s.fields[f].picklist) {
            auto m = longest_boundary_match(question, cell);
            if (!m) continue;
            auto [bq, bc] = score(*m, cell);
            if (bq < cfg.theta_q) continue;
            double cell_cover = static_cast<double>(m->sm_len) / cell.size();
            if (cfg.theta_c_ceiling ? bc > cfg.theta_c : cell_cover < cfg.theta_c)
                continue;
            AnchorMatch a;
            a.field = f;
            a.cell_value = cell;
            a.q_begin = m->sq_begin;
            a.q_end = m->sq_end;
            a.q_span = question.substr(m->sq_begin, m->sq_end - m->sq_begin);
            a.matched = to_lower(question).substr(m->sm_begin, m->sm_len);
            a.beta_q = bq;
            a.beta_c = bc;
            if (cfg.exclude_numbers && parses_as_number(trim(a.q_span))) continue;
            per_field.push_back(std::move(a));
        }
        std::stable_sort(per_field.begin(), per_field.end(),
                         [](const AnchorMatch& a, const AnchorMatch& b) {
                             if (a.beta_q != b.beta_q) return a.beta_q > b.beta_q;
                             if (a.matched.size() != b.matched.size())
                                 return a.matched.size() > b.matched.size();
                             return a.q_begin < b.q_begin;
                         });
        if (cfg.k >= 0 && per_field.size() > static_cast<size_t>(cfg.k))
            per_field.resize(cfg.k);
        std::stable_sort(per_field.begin(), per_field.end(),
                         [](const AnchorMatch& a, const AnchorMatch& b) {
                             return a.q_begin < b.q_begin;
                         });
        out.insert(out.end(), per_field.begin(), per_field.end());
    }
    return out;
}

// Corpus-level approximated precision/recall of anchor selection against the
// textual values of the gold queries. Field association is deliberately not
// checked; comparisons are case-insensitive, duplicates collapse per example.
inline std::pair<double, double> approx_precision_recall(
    const std::vector<std::vector<std::string>>& anchors_per_example,
    const std::vector<std::vector<std::string>>& gold_per_example) {
    if (anchors_per_example.size() != gold_per_example.size())
        throw std::invalid_argument("anchor/gold corpus length mismatch");
    size_t anchor_total = 0, anchor_hit = 0, gold_total = 0, gold_hit = 0;
    for (size_t i = 0; i < anchors_per_example.size(); ++i) {
        std::unordered_set<std::string> a, g;
        for (const auto& v : anchors_per_example[i]) a.insert(to_lower(v));
        for (const auto& v : gold_per_example[i]) g.insert(to_lower(v));
        anchor_total += a.size();
        gold_total += g.size();
        for (const auto& v : a) anchor_hit += g.count(v);
        for (const auto& v : g) gold_hit += a.count(v);
    }
    double p = anchor_total ? 100.0 * anchor_hit / anchor_total : 0.0;
    double r = gold_total ? 100.0 * gold_hit / gold_total : 0.0;
    return {p, r};
}

}  // namespace bridge
