#pragma once

#include <Eigen/Dense>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bridge/hybrid.hpp"
#include "bridge/sqlkit.hpp"
#include "bridge/vocab.hpp"

namespace bridge {

enum class ViolationKind { syntax, scope, lemma1, lemma2, sketch };

struct Violation {
    ViolationKind kind = ViolationKind::syntax;
    size_t position = 0;  // token index within the checked sequence
    std::string message;
};

inline const char* violation_kind_name(ViolationKind k) {
    switch (k) {
        case ViolationKind::syntax: return "syntax";
        case ViolationKind::scope: return "scope";
        case ViolationKind::lemma1: return "lemma1";
        case ViolationKind::lemma2: return "lemma2";
        default: return "sketch";
    }
}

// Token classes of the transition lemma: digits count as value tokens.
enum class TokClass { reserved, table, field, value };

inline TokClass token_class(const SqlToken& t) {
    switch (t.kind) {
        case TokKind::table: return TokClass::table;
        case TokKind::field: return TokClass::field;
        case TokKind::value:
        case TokKind::number: return TokClass::value;
        default: return TokClass::reserved;
    }
}

// ---------------------------------------------------------------------------
// Decode-time masks over the support [generation vocabulary | pointable X~].

struct FieldMask {
    std::vector<uint8_t> allowed;  // one bit per pointable item

    static FieldMask initial(const PointableView& view) {
        FieldMask m;
        m.allowed.resize(view.size());
        for (size_t i = 0; i < view.items.size(); ++i)
            m.allowed[i] = view.items[i].kind != Pointable::field;
        return m;
    }
};

// Once a table is decoded its fields unlock; bits never fall back to zero.
inline FieldMask update_field_mask(FieldMask xi, TokClass emitted_class,
                                   TableId emitted_table,
                                   const PointableView& view, const Schema& s) {
    if (emitted_class != TokClass::table) return xi;
    for (size_t i = 0; i < view.items.size(); ++i) {
        const Pointable& p = view.items[i];
        if (p.kind == Pointable::field && s.fields[p.field_ref].table == emitted_table)
            xi.allowed[i] = 1;
    }
    return xi;
}

struct TransitionMask {
    bool allow_reserved = true;
    bool allow_table = true;
    bool allow_field = true;
    bool allow_value = true;

    // last == nullopt at the start of a hypothesis (everything allowed)
    static TransitionMask after(std::optional<TokClass> last) {
        TransitionMask m;
        if (!last || *last == TokClass::reserved) return m;
        if (*last == TokClass::table || *last == TokClass::field) {
            m.allow_table = m.allow_field = m.allow_value = false;
            return m;
        }
        m.allow_table = m.allow_field = false;  // after value/digit
        return m;
    }
};

struct SupportLayout {
    size_t vocab_size = kVocabSize;
    const PointableView* view = nullptr;

    size_t size() const { return vocab_size + view->size(); }

    bool entry_allowed(size_t idx, const FieldMask& xi, const TransitionMask& tm) const {
        if (idx < vocab_size)
            return vocab_id_is_digit(static_cast<int>(idx)) ? tm.allow_value
                                                            : tm.allow_reserved;
        const Pointable& p = view->items[idx - vocab_size];
        switch (p.kind) {
            case Pointable::question: return tm.allow_value;
            case Pointable::table: return tm.allow_table;
            default: return tm.allow_field && xi.allowed[idx - vocab_size];
        }
    }
};

struct MaskedDistribution {
    Eigen::VectorXd probs;
    bool all_masked = false;
};

// Zero out masked entries and renormalize the survivors to sum 1. If the
// masks remove everything, report that instead of dividing by zero.
inline MaskedDistribution apply_masks(const Eigen::VectorXd& dist,
                                      const FieldMask& xi, const TransitionMask& tm,
                                      const SupportLayout& layout,
                                      bool renormalize = true) {
    if (static_cast<size_t>(dist.size()) != layout.size())
        throw std::invalid_argument("distribution/support dimension mismatch");
    MaskedDistribution out;
    out.probs = Eigen::VectorXd::Zero(dist.size());
    double mass = 0.0;
    for (Eigen::Index i = 0; i < dist.size(); ++i) {
        if (layout.entry_allowed(static_cast<size_t>(i), xi, tm)) {
            out.probs[i] = dist[i];
            mass += dist[i];
        }
    }
    if (mass <= 0.0) {
        out.all_masked = true;
        out.probs.setZero();
        return out;
    }
    if (renormalize) out.probs /= mass;
    return out;
}

// ---------------------------------------------------------------------------
// Post-hoc scans and the static SQL correctness check.

inline std::vector<Violation> lemma2_scan(const std::vector<SqlToken>& toks) {
    std::vector<Violation> out;
    for (size_t i = 0; i < toks.size(); ++i) {
        TokClass c = token_class(toks[i]);
        if (c == TokClass::reserved) continue;
        if (i == 0) {
            out.push_back({ViolationKind::lemma2, i,
                           "'" + toks[i].surface + "' opens the sequence"});
            continue;
        }
        TokClass prev = token_class(toks[i - 1]);
        if (c == TokClass::table || c == TokClass::field) {
            if (prev != TokClass::reserved)
                out.push_back({ViolationKind::lemma2, i,
                               "'" + toks[i].surface +
                                   "' must follow a reserved token"});
        } else {  // value / number
            if (prev == TokClass::table || prev == TokClass::field)
                out.push_back({ViolationKind::lemma2, i,
                               "value '" + toks[i].surface +
                                   "' must follow a reserved or value token"});
        }
    }
    return out;
}

inline std::vector<Violation> lemma1_scan(const std::vector<SqlToken>& toks,
                                          const Schema& s) {
    std::vector<Violation> out;
    std::set<TableId> seen;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (toks[i].kind == TokKind::table) {
            seen.insert(toks[i].table_ref);
        } else if (toks[i].kind == TokKind::field) {
            TableId owner = s.fields[toks[i].field_ref].table;
            if (!seen.count(owner))
                out.push_back({ViolationKind::lemma1, i,
                               "field '" + toks[i].surface +
                                   "' precedes its table " + s.tables[owner].name});
        }
    }
    return out;
}

namespace guard_detail {

// Map a character offset in the rebuilt text back to a token index.
inline size_t token_index_for_pos(const std::vector<SqlToken>& toks, size_t pos) {
    size_t offset = 0;
    for (size_t i = 0; i < toks.size(); ++i) {
        size_t len = toks[i].surface.size() + (toks[i].kind == TokKind::value ? 2 : 0);
        if (pos < offset + len + 1) return i;
        offset += len + 1;
    }
    return toks.empty() ? 0 : toks.size() - 1;
}

}  // namespace guard_detail

// Syntax (execution-order grammar), per-query scope analysis, and both lemma
// scans. An empty result means the sequence is fully valid.
inline std::vector<Violation> static_check(const std::vector<SqlToken>& toks,
                                           const Schema& s) {
    std::vector<Violation> out;
    if (toks.empty())
        return {{ViolationKind::syntax, 0, "empty sequence"}};
    auto l2 = lemma2_scan(toks);
    out.insert(out.end(), l2.begin(), l2.end());
    auto l1 = lemma1_scan(toks, s);
    out.insert(out.end(), l1.begin(), l1.end());
    try {
        ParseResult r = parse_exec(tokens_to_text(toks), s);
        for (const auto& issue : r.scope_issues) {
            size_t idx = std::min(issue.token_index, toks.size() - 1);
            out.push_back({ViolationKind::scope, idx, issue.message});
        }
    } catch (const ParseError& e) {
        out.push_back({ViolationKind::syntax,
                       guard_detail::token_index_for_pos(toks, e.pos), e.what()});
    }
    return out;
}

// Standalone classification of a canonical (alias-free) execution-order line,
// for checking sequences arriving as text.
inline std::vector<SqlToken> classify_exec_line(const std::string& line,
                                                const Schema& s) {
    auto raw = sql_detail::lex(line);
    std::vector<SqlToken> out;
    for (size_t i = 0; i < raw.size(); ++i) {
        const auto& t = raw[i];
        switch (t.kind) {
            case sql_detail::RawTok::number:
                out.push_back({TokKind::number, t.text, -1, -1, i});
                break;
            case sql_detail::RawTok::str:
                out.push_back({TokKind::value, t.text, -1, -1, i});
                break;
            case sql_detail::RawTok::op:
                out.push_back({TokKind::reserved, t.text, -1, -1, i});
                break;
            case sql_detail::RawTok::word: {
                if (is_reserved_word(t.text)) {
                    out.push_back({TokKind::reserved, to_upper(t.text), -1, -1, i});
                    break;
                }
                // qualified field reference a.b folds into one token
                if (i + 2 < raw.size() && raw[i + 1].kind == sql_detail::RawTok::op &&
                    raw[i + 1].text == "." &&
                    raw[i + 2].kind == sql_detail::RawTok::word) {
                    auto tab = s.find_table(t.text);
                    if (!tab)
                        throw ParseError("unknown table '" + t.text + "'", t.pos);
                    auto f = s.find_field(*tab, raw[i + 2].text);
                    if (!f)
                        throw ParseError("unknown field '" + raw[i + 2].text + "'",
                                         raw[i + 2].pos);
                    out.push_back({TokKind::field, s.qualified_name(*f), *tab, *f, i});
                    i += 2;
                    break;
                }
                if (auto tab = s.find_table(t.text)) {
                    out.push_back({TokKind::table, s.tables[*tab].name, *tab, -1, i});
                    break;
                }
                std::optional<FieldId> found;
                bool ambiguous = false;
                for (FieldId f = 0; f < static_cast<FieldId>(s.fields.size()); ++f)
                    if (iequals(s.fields[f].name, t.text)) {
                        if (found) ambiguous = true;
                        found = f;
                    }
                if (!found || ambiguous)
                    throw ParseError(
                        (ambiguous ? "ambiguous field '" : "unknown identifier '") +
                            t.text + "'",
                        t.pos);
                out.push_back({TokKind::field, s.qualified_name(*found),
                               s.fields[*found].table, *found, i});
                break;
            }
        }
    }
    return out;
}

inline std::vector<Violation> static_check_line(const std::string& line,
                                                const Schema& s) {
    std::vector<SqlToken> toks;
    try {
        toks = classify_exec_line(line, s);
    } catch (const ParseError& e) {
        return {{ViolationKind::syntax, 0, e.what()}};
    }
    return static_check(toks, s);
}

// WikiSQL sketch: SELECT [agg] col FROM single table with an optional
// conjunction of simple column-operator-literal conditions.
inline bool sketch_check(const Query& q) {
    if (q.set_op != SetOp::none) return false;
    const QueryCore& c = q.core;
    if (c.from_tables.size() != 1 || !c.joins.empty()) return false;
    if (c.select.size() != 1 || c.select_distinct) return false;
    const ValUnit& u = c.select[0];
    if (u.col.star && u.agg != AggOp::count) return false;
    if (!c.group_by.empty() || c.having || !c.order_by.empty() || c.limit)
        return false;
    if (c.where) {
        for (bool is_or : c.where->or_connector)
            if (is_or) return false;
        for (const auto& cond : c.where->conds) {
            if (cond.negated) return false;
            if (cond.op == CmpOp::in || cond.op == CmpOp::like ||
                cond.op == CmpOp::between)
                return false;
            if (cond.lhs.agg != AggOp::none || cond.lhs.col.star) return false;
            if (cond.rhs.kind == SqlValue::subquery) return false;
        }
    }
    return true;
}

}  // namespace bridge
