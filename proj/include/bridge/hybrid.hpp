#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridge/anchor.hpp"
#include "bridge/rng.hpp"
#include "bridge/schema.hpp"
#include "bridge/text.hpp"

namespace bridge {

enum class Special { CLS = 0, SEP = 1, T = 2, C = 3, V = 4 };
inline constexpr size_t kNumSpecials = 5;

enum class XKind { special, question, schema_word, value_word };

struct XToken {
    XKind kind = XKind::question;
    Special special = Special::CLS;  // meaningful for kind == special
    std::string surface;
};

// Table permutation plus an optionally dropped table (training augmentation).
struct SchemaView {
    std::vector<TableId> table_order;
    std::optional<TableId> dropped;

    static SchemaView identity(const Schema& s) {
        SchemaView v;
        for (TableId t = 0; t < static_cast<TableId>(s.tables.size()); ++t)
            v.table_order.push_back(t);
        return v;
    }
    std::vector<TableId> effective_tables() const {
        std::vector<TableId> out;
        for (TableId t : table_order)
            if (!dropped || *dropped != t) out.push_back(t);
        return out;
    }
};

// Uniformly permutes the tables; with probability p_drop removes one table
// that does not appear in the gold query. Gold tables are never dropped.
inline SchemaView shuffle_and_drop(const Schema& s,
                                   const std::set<TableId>& gold_tables,
                                   double p_drop, Rng& rng) {
    if (p_drop < 0.0 || p_drop > 1.0)
        throw std::invalid_argument("p_drop outside [0,1]");
    SchemaView v = SchemaView::identity(s);
    rng.shuffle(v.table_order);
    if (rng.uniform01() < p_drop) {
        std::vector<TableId> candidates;
        for (TableId t = 0; t < static_cast<TableId>(s.tables.size()); ++t)
            if (!gold_tables.count(t)) candidates.push_back(t);
        if (!candidates.empty()) v.dropped = candidates[rng.uniform(candidates.size())];
    }
    return v;
}

struct SerializeOpts {
    bool bridging = true;           // insert [V] value spans from anchors
    bool value_marker_only = false;  // insert [V] tokens without the values
};

// The tagged question-schema serialization
//   [CLS] Q [SEP] [T] t1 [C] c11 ... [T] t2 ... [SEP]
// with anchor values appended to their fields after [V] markers.
struct HybridSequence {
    std::vector<XToken> tokens;
    size_t question_begin = 1, question_end = 1;        // [begin, end)
    std::vector<TableId> tables;                        // view order
    std::vector<FieldId> fields;                        // table-major, view order
    std::vector<size_t> t_positions;                    // parallel to tables
    std::vector<size_t> c_positions;                    // parallel to fields
    std::map<FieldId, std::vector<std::pair<size_t, size_t>>> v_spans;

    size_t question_len() const { return question_end - question_begin; }
};

inline HybridSequence serialize(const std::vector<std::string>& question_tokens,
                                const Schema& s,
                                const std::vector<AnchorMatch>& anchors,
                                const SchemaView& view,
                                const SerializeOpts& opts = {}) {
    for (const auto& a : anchors)
        if (a.field < 0 || a.field >= static_cast<FieldId>(s.fields.size()))
            throw std::out_of_range("anchor references unknown field");
    HybridSequence h;
    auto special = [&](Special sp, const char* surf) {
        h.tokens.push_back({XKind::special, sp, surf});
    };
    special(Special::CLS, "[CLS]");
    h.question_begin = h.tokens.size();
    for (const auto& w : question_tokens)
        h.tokens.push_back({XKind::question, Special::CLS, w});
    h.question_end = h.tokens.size();
    special(Special::SEP, "[SEP]");

    for (TableId t : view.effective_tables()) {
        h.tables.push_back(t);
        h.t_positions.push_back(h.tokens.size());
        special(Special::T, "[T]");
        for (const auto& w : split_name_words(s.tables[t].name))
            h.tokens.push_back({XKind::schema_word, Special::CLS, w});
        for (FieldId f : s.tables[t].fields) {
            h.fields.push_back(f);
            h.c_positions.push_back(h.tokens.size());
            special(Special::C, "[C]");
            for (const auto& w : split_name_words(s.fields[f].name))
                h.tokens.push_back({XKind::schema_word, Special::CLS, w});
            if (!opts.bridging) continue;
            // anchors of this field in question-matching order
            std::vector<const AnchorMatch*> mine;
            for (const auto& a : anchors)
                if (a.field == f) mine.push_back(&a);
            std::stable_sort(mine.begin(), mine.end(),
                             [](const AnchorMatch* a, const AnchorMatch* b) {
                                 return a->q_begin < b->q_begin;
                             });
            for (const AnchorMatch* a : mine) {
                size_t begin = h.tokens.size();
                special(Special::V, "[V]");
                if (!opts.value_marker_only) {
                    std::vector<std::string> words;
                    std::string cur;  // keep source casing, split like names
                    for (char c : a->cell_value) {
                        if (is_word_char(c)) {
                            cur.push_back(c);
                        } else if (!cur.empty()) {
                            words.push_back(cur);
                            cur.clear();
                        }
                    }
                    if (!cur.empty()) words.push_back(cur);
                    for (auto& w : words)
                        h.tokens.push_back({XKind::value_word, Special::CLS, w});
                }
                h.v_spans[f].emplace_back(begin, h.tokens.size());
            }
        }
    }
    special(Special::SEP, "[SEP]");
    return h;
}

// ---------------------------------------------------------------------------
// Pointable view X~: question words plus one entry per [T]/[C] token, ordered
// to line up with the decoder's attention memory [h_Q; h_S] (tables before
// fields). Value tokens never appear here.

struct Pointable {
    enum Kind { question, table, field } kind = question;
    size_t x_index = 0;        // source position in X
    std::string word;          // question surface (lowercased)
    TableId table_ref = -1;
    FieldId field_ref = -1;
};

struct PointableView {
    std::vector<Pointable> items;
    size_t question_len = 0;

    size_t size() const { return items.size(); }
};

inline PointableView pointable_view(const HybridSequence& h) {
    PointableView v;
    v.question_len = h.question_len();
    for (size_t i = h.question_begin; i < h.question_end; ++i)
        v.items.push_back({Pointable::question, i, h.tokens[i].surface, -1, -1});
    for (size_t k = 0; k < h.tables.size(); ++k)
        v.items.push_back({Pointable::table, h.t_positions[k], "", h.tables[k], -1});
    for (size_t k = 0; k < h.fields.size(); ++k)
        v.items.push_back({Pointable::field, h.c_positions[k], "", -1, h.fields[k]});
    return v;
}

}  // namespace bridge
