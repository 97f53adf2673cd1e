#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <sqlite3.h>

#include "bridge/schema.hpp"
#include "bridge/sqlkit.hpp"

namespace bridge {

// ---------------------------------------------------------------------------
// Exact match: canonical token sequences (case-folded keywords, alias-free,
// whitespace-collapsed) must be identical. A lower bound on correctness.

inline bool tokens_exact_equal(const std::vector<SqlToken>& a,
                               const std::vector<SqlToken>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].kind != b[i].kind) return false;
        if (a[i].kind == TokKind::value || a[i].kind == TokKind::number) {
            if (!value_text_equal(a[i].surface, b[i].surface)) return false;
        } else if (a[i].surface != b[i].surface) {
            return false;
        }
    }
    return true;
}

inline bool exact_match(const std::string& pred, const std::string& gold,
                        const Schema& s) {
    Query gq = parse(gold, s);
    try {
        Query pq = parse(pred, s);
        return tokens_exact_equal(render_written_tokens(pq, s),
                                  render_written_tokens(gq, s));
    } catch (const ParseError&) {
        return false;
    }
}

// ---------------------------------------------------------------------------
// Exact set match: orderless per-clause comparison with condition literals
// replaced by placeholders. Nested sub-queries compare recursively.

namespace esm_detail {

inline bool esm_equal(const Query& a, const Query& b);

struct CondKey {
    bool negated;
    CmpOp op;
    AggOp agg;
    bool distinct_inside;
    bool star;
    TableId table;
    FieldId field;
    bool rhs_is_subquery;
    auto tie() const {
        return std::tuple(negated, op, agg, distinct_inside, star, table, field,
                          rhs_is_subquery);
    }
    bool operator<(const CondKey& o) const { return tie() < o.tie(); }
    bool operator==(const CondKey& o) const { return tie() == o.tie(); }
};

inline CondKey cond_key(const Condition& c) {
    return {c.negated,          c.op,           c.lhs.agg, c.lhs.distinct_inside,
            c.lhs.col.star,     c.lhs.col.table, c.lhs.col.field,
            c.rhs.kind == SqlValue::subquery};
}

// Orderless multiset match of conditions; literals are ignored, sub-query
// values must match recursively. Connector kinds compare as multisets.
inline bool cond_lists_equal(const std::optional<CondList>& oa,
                             const std::optional<CondList>& ob) {
    if (oa.has_value() != ob.has_value()) return false;
    if (!oa) return true;
    const CondList& a = *oa;
    const CondList& b = *ob;
    if (a.conds.size() != b.conds.size()) return false;
    int a_or = std::count(a.or_connector.begin(), a.or_connector.end(), true);
    int b_or = std::count(b.or_connector.begin(), b.or_connector.end(), true);
    if (a_or != b_or || a.or_connector.size() != b.or_connector.size())
        return false;
    std::vector<bool> used(b.conds.size(), false);
    for (const auto& ca : a.conds) {
        bool matched = false;
        for (size_t j = 0; j < b.conds.size(); ++j) {
            if (used[j]) continue;
            const auto& cb = b.conds[j];
            if (!(cond_key(ca) == cond_key(cb))) continue;
            if (ca.rhs.kind == SqlValue::subquery &&
                !esm_equal(*ca.rhs.sub, *cb.rhs.sub))
                continue;
            used[j] = true;
            matched = true;
            break;
        }
        if (!matched) return false;
    }
    return true;
}

using UnitKey = std::tuple<AggOp, bool, bool, TableId, FieldId>;
inline UnitKey unit_key(const ValUnit& u) {
    return {u.agg, u.distinct_inside, u.col.star, u.col.table, u.col.field};
}

inline bool esm_core_equal(const QueryCore& a, const QueryCore& b) {
    if (a.select_distinct != b.select_distinct) return false;
    auto multiset_of = [](const std::vector<ValUnit>& units) {
        std::vector<UnitKey> keys;
        for (const auto& u : units) keys.push_back(unit_key(u));
        std::sort(keys.begin(), keys.end());
        return keys;
    };
    if (multiset_of(a.select) != multiset_of(b.select)) return false;

    auto tables_of = [](const QueryCore& c) {
        std::vector<TableId> t = c.from_tables;
        std::sort(t.begin(), t.end());
        return t;
    };
    if (tables_of(a) != tables_of(b)) return false;

    auto join_set = [](const QueryCore& c) {
        std::vector<std::pair<std::pair<TableId, FieldId>, std::pair<TableId, FieldId>>> v;
        for (const auto& jc : c.all_join_conds()) {
            std::pair<TableId, FieldId> l{jc.left.table, jc.left.field};
            std::pair<TableId, FieldId> r{jc.right.table, jc.right.field};
            if (r < l) std::swap(l, r);
            v.emplace_back(l, r);
        }
        std::sort(v.begin(), v.end());
        return v;
    };
    if (join_set(a) != join_set(b)) return false;

    if (!cond_lists_equal(a.where, b.where)) return false;
    if (!cond_lists_equal(a.having, b.having)) return false;

    auto group_set = [](const QueryCore& c) {
        std::vector<std::pair<TableId, FieldId>> v;
        for (const auto& g : c.group_by) v.emplace_back(g.table, g.field);
        std::sort(v.begin(), v.end());
        return v;
    };
    if (group_set(a) != group_set(b)) return false;

    auto order_set = [](const QueryCore& c) {
        std::vector<std::pair<UnitKey, bool>> v;
        for (const auto& o : c.order_by) v.emplace_back(unit_key(o.expr), o.desc);
        std::sort(v.begin(), v.end());
        return v;
    };
    if (order_set(a) != order_set(b)) return false;

    return a.limit == b.limit;
}

inline bool esm_equal(const Query& a, const Query& b) {
    if (!esm_core_equal(a.core, b.core)) return false;
    if (a.set_op != b.set_op) return false;
    if (a.set_op == SetOp::none) return true;
    return esm_equal(*a.rhs, *b.rhs);
}

}  // namespace esm_detail

inline bool exact_set_match(const std::string& pred, const std::string& gold,
                            const Schema& s) {
    Query gq = parse(gold, s);  // gold must parse; pred failures score false
    try {
        Query pq = parse(pred, s);
        return esm_detail::esm_equal(pq, gq);
    } catch (const ParseError&) {
        return false;
    }
}

// ---------------------------------------------------------------------------
// Execution accuracy on a SQLite database file. Result multisets compare
// (sequences when both queries carry ORDER BY); nothing when the gold query
// itself cannot run.

namespace ea_detail {

inline std::string canonical_cell(sqlite3_stmt* stmt, int col) {
    switch (sqlite3_column_type(stmt, col)) {
        case SQLITE_NULL: return "NULL";
        case SQLITE_INTEGER: return std::to_string(sqlite3_column_int64(stmt, col));
        case SQLITE_FLOAT: {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.10g", sqlite3_column_double(stmt, col));
            return buf;
        }
        default: {
            const unsigned char* t = sqlite3_column_text(stmt, col);
            std::string s = t ? reinterpret_cast<const char*>(t) : "";
            if (parses_as_number(s)) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.10g", std::stod(s));
                return buf;
            }
            return s;
        }
    }
}

inline std::optional<std::vector<std::vector<std::string>>> run_query(
    sqlite3* db, const std::string& sql) {
    sqlite3_stmt* stmt = nullptr;
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
        sqlite3_finalize(stmt);
        return std::nullopt;
    }
    std::vector<std::vector<std::string>> rows;
    int rc;
    while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
        std::vector<std::string> row;
        for (int c = 0; c < sqlite3_column_count(stmt); ++c)
            row.push_back(canonical_cell(stmt, c));
        rows.push_back(std::move(row));
    }
    bool ok = rc == SQLITE_DONE;
    sqlite3_finalize(stmt);
    if (!ok) return std::nullopt;
    return rows;
}

}  // namespace ea_detail

inline std::optional<bool> execution_accuracy(const std::string& pred,
                                              const std::string& gold,
                                              const std::string& db_path,
                                              const Schema& s) {
    sqlite3* db = nullptr;
    if (sqlite3_open_v2(db_path.c_str(), &db, SQLITE_OPEN_READONLY, nullptr) !=
        SQLITE_OK) {
        sqlite3_close(db);
        throw std::runtime_error("cannot open database " + db_path);
    }
    auto gold_rows = ea_detail::run_query(db, gold);
    if (!gold_rows) {
        sqlite3_close(db);
        return std::nullopt;
    }
    auto pred_rows = ea_detail::run_query(db, pred);
    sqlite3_close(db);
    if (!pred_rows) return false;
    if (pred_rows->size() != gold_rows->size()) return false;
    if (!pred_rows->empty() && (*pred_rows)[0].size() != (*gold_rows)[0].size())
        return false;

    bool ordered = false;
    try {
        ordered = !parse(pred, s).core.order_by.empty() &&
                  !parse(gold, s).core.order_by.empty();
    } catch (const ParseError&) {
        ordered = false;
    }
    if (!ordered) {
        std::sort(pred_rows->begin(), pred_rows->end());
        std::sort(gold_rows->begin(), gold_rows->end());
    }
    return *pred_rows == *gold_rows;
}

// ---------------------------------------------------------------------------
// Corpus-level reporting

struct EvalVerdict {
    bool em = false;
    bool esm = false;
    std::optional<bool> ea;
};

struct EvalResult {
    std::vector<EvalVerdict> verdicts;
    double em_pct = 0.0, esm_pct = 0.0;
    std::optional<double> ea_pct;

    void aggregate() {
        if (verdicts.empty()) return;
        double em = 0, esm = 0, ea = 0;
        size_t ea_n = 0;
        for (const auto& v : verdicts) {
            em += v.em;
            esm += v.esm;
            if (v.ea) {
                ea += *v.ea;
                ++ea_n;
            }
        }
        em_pct = 100.0 * em / double(verdicts.size());
        esm_pct = 100.0 * esm / double(verdicts.size());
        if (ea_n) ea_pct = 100.0 * ea / double(ea_n);
    }
};

}  // namespace bridge
