#pragma once

#include <cctype>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridge/schema.hpp"
#include "bridge/text.hpp"
#include "bridge/vocab.hpp"

namespace bridge {

// ---------------------------------------------------------------------------
// Tokens

enum class TokKind { reserved, table, field, value, number };

struct SqlToken {
    TokKind kind = TokKind::reserved;
    std::string surface;  // values: unquoted content; reserved: canonical form
    TableId table_ref = -1;
    FieldId field_ref = -1;
    size_t pos = 0;
};

struct ParseError : std::runtime_error {
    size_t pos;
    ParseError(const std::string& msg, size_t p)
        : std::runtime_error(msg + " (at position " + std::to_string(p) + ")"),
          pos(p) {}
};

// Clause arrangements. Written is standard SQL; Exec mirrors how a database
// evaluates a query and is the decoder's target order.
enum class ClauseOrder { Written, Exec };

namespace sql_detail {

struct RawTok {
    enum Kind { word, number, str, op } kind;
    std::string text;
    size_t pos = 0;
};

inline std::vector<RawTok> lex(std::string_view sql) {
    std::vector<RawTok> out;
    size_t i = 0;
    const size_t n = sql.size();
    while (i < n) {
        char c = sql[i];
        if (std::isspace(static_cast<unsigned char>(c)) || c == ';') {
            ++i;
            continue;
        }
        size_t start = i;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t j = i;
            while (j < n && (is_word_char(sql[j]) || sql[j] == '_')) ++j;
            out.push_back({RawTok::word, std::string(sql.substr(i, j - i)), start});
            i = j;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            size_t j = i;
            bool dot = false;
            while (j < n && (std::isdigit(static_cast<unsigned char>(sql[j])) ||
                             (sql[j] == '.' && !dot && j + 1 < n &&
                              std::isdigit(static_cast<unsigned char>(sql[j + 1]))))) {
                if (sql[j] == '.') dot = true;
                ++j;
            }
            out.push_back({RawTok::number, std::string(sql.substr(i, j - i)), start});
            i = j;
        } else if (c == '\'' || c == '"') {
            size_t j = i + 1;
            while (j < n && sql[j] != c) ++j;
            if (j >= n) throw ParseError("unterminated string literal", start);
            out.push_back({RawTok::str, std::string(sql.substr(i + 1, j - i - 1)), start});
            i = j + 1;
        } else {
            // two-character operators first
            if (i + 1 < n) {
                std::string two = std::string(sql.substr(i, 2));
                if (two == "<=" || two == ">=" || two == "!=" || two == "<>") {
                    out.push_back({RawTok::op, two, start});
                    i += 2;
                    continue;
                }
            }
            static const std::string singles = "=<>(),.*-+/";
            if (singles.find(c) == std::string::npos)
                throw ParseError(std::string("unexpected character '") + c + "'", start);
            out.push_back({RawTok::op, std::string(1, c), start});
            ++i;
        }
    }
    return out;
}

}  // namespace sql_detail

// ---------------------------------------------------------------------------
// AST

enum class AggOp { none, count, sum, avg, min, max };
enum class CmpOp { eq, ne, lt, gt, le, ge, in, like, between };
enum class SetOp { none, union_, intersect_, except_ };

struct ColRef {
    TableId table = -1;
    FieldId field = -1;
    bool star = false;
    std::string orig;  // surface as written, for alias-preserving output
};

struct ValUnit {
    AggOp agg = AggOp::none;
    bool distinct_inside = false;
    ColRef col;
};

struct Query;

struct SqlValue {
    enum Kind { number, text, subquery } kind = number;
    std::string surface;  // unquoted content / number as written
    std::unique_ptr<Query> sub;
};

struct Condition {
    bool negated = false;
    CmpOp op = CmpOp::eq;
    ValUnit lhs;
    SqlValue rhs;
    SqlValue rhs2;  // upper bound of BETWEEN
};

struct CondList {
    std::vector<Condition> conds;
    std::vector<bool> or_connector;  // [i] joins conds[i] and conds[i+1]
};

struct JoinCond {
    ColRef left, right;
};

struct OrderItem {
    ValUnit expr;
    bool desc = false;
};

struct QueryCore {
    bool select_distinct = false;
    std::vector<ValUnit> select;
    std::vector<TableId> from_tables;
    std::vector<std::string> from_aliases;  // parallel to from_tables, "" if none
    std::vector<std::vector<JoinCond>> joins;  // joins[k]: ON conds of table k+1
    std::optional<CondList> where;
    std::vector<ColRef> group_by;
    std::optional<CondList> having;
    std::vector<OrderItem> order_by;
    std::optional<long long> limit;

    std::vector<JoinCond> all_join_conds() const {
        std::vector<JoinCond> out;
        for (const auto& j : joins) out.insert(out.end(), j.begin(), j.end());
        return out;
    }
};

struct Query {
    QueryCore core;
    SetOp set_op = SetOp::none;
    std::unique_ptr<Query> rhs;
};

using SqlAst = Query;

// ---------------------------------------------------------------------------
// AST equality. Aliases and surface spellings are ignored; literal values
// compare numerically when both sides parse as numbers, case-insensitively
// otherwise (the corpus mixes '2192' and 2192 for the same constant).

inline bool value_text_equal(const std::string& a, const std::string& b) {
    if (parses_as_number(a) && parses_as_number(b))
        return std::stod(a) == std::stod(b);
    return iequals(a, b);
}

inline bool ast_equal(const Query& a, const Query& b);

namespace sql_detail {

inline bool eq(const ColRef& a, const ColRef& b) {
    return a.star == b.star && a.table == b.table && a.field == b.field;
}
inline bool eq(const ValUnit& a, const ValUnit& b) {
    return a.agg == b.agg && a.distinct_inside == b.distinct_inside && eq(a.col, b.col);
}
inline bool eq(const SqlValue& a, const SqlValue& b) {
    bool asub = a.kind == SqlValue::subquery, bsub = b.kind == SqlValue::subquery;
    if (asub != bsub) return false;
    if (asub) return ast_equal(*a.sub, *b.sub);
    return value_text_equal(a.surface, b.surface);
}
inline bool eq(const Condition& a, const Condition& b) {
    if (a.negated != b.negated || a.op != b.op || !eq(a.lhs, b.lhs)) return false;
    if (!eq(a.rhs, b.rhs)) return false;
    if (a.op == CmpOp::between && !eq(a.rhs2, b.rhs2)) return false;
    return true;
}
inline bool eq(const CondList& a, const CondList& b) {
    if (a.conds.size() != b.conds.size() || a.or_connector != b.or_connector)
        return false;
    for (size_t i = 0; i < a.conds.size(); ++i)
        if (!eq(a.conds[i], b.conds[i])) return false;
    return true;
}
inline bool eq_opt_conds(const std::optional<CondList>& a,
                         const std::optional<CondList>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || eq(*a, *b);
}

}  // namespace sql_detail

inline bool ast_equal(const Query& a, const Query& b) {
    using namespace sql_detail;
    const QueryCore& x = a.core;
    const QueryCore& y = b.core;
    if (x.select_distinct != y.select_distinct) return false;
    if (x.select.size() != y.select.size()) return false;
    for (size_t i = 0; i < x.select.size(); ++i)
        if (!eq(x.select[i], y.select[i])) return false;
    if (x.from_tables != y.from_tables) return false;
    auto xj = x.all_join_conds(), yj = y.all_join_conds();
    if (xj.size() != yj.size()) return false;
    for (size_t i = 0; i < xj.size(); ++i)
        if (!eq(xj[i].left, yj[i].left) || !eq(xj[i].right, yj[i].right))
            return false;
    if (!eq_opt_conds(x.where, y.where) || !eq_opt_conds(x.having, y.having))
        return false;
    if (x.group_by.size() != y.group_by.size()) return false;
    for (size_t i = 0; i < x.group_by.size(); ++i)
        if (!eq(x.group_by[i], y.group_by[i])) return false;
    if (x.order_by.size() != y.order_by.size()) return false;
    for (size_t i = 0; i < x.order_by.size(); ++i)
        if (x.order_by[i].desc != y.order_by[i].desc ||
            !eq(x.order_by[i].expr, y.order_by[i].expr))
            return false;
    if (x.limit != y.limit) return false;
    if (a.set_op != b.set_op) return false;
    if (a.set_op != SetOp::none) return ast_equal(*a.rhs, *b.rhs);
    return true;
}

// ---------------------------------------------------------------------------
// Parsing. One recursive-descent core serves both clause orders; identifier
// resolution walks the scope stack (own FROM first, then enclosing queries),
// falling back to a schema-wide search whose uses are reported as scope
// issues so the static checker can flag them.

struct ScopeIssue {
    size_t token_index = 0;  // into the produced SqlToken stream
    std::string message;
};

struct ParseResult {
    Query query;
    std::vector<SqlToken> tokens;
    std::vector<ScopeIssue> scope_issues;
};

namespace sql_detail {

struct Scope {
    std::vector<TableId> tables;
    std::vector<std::pair<std::string, TableId>> aliases;
};

class Parser {
public:
    Parser(std::vector<RawTok> toks, const Schema& schema)
        : toks_(std::move(toks)), schema_(schema) {}

    ParseResult run(ClauseOrder order) {
        ParseResult r;
        r.query = parse_query(order);
        if (i_ < toks_.size())
            throw ParseError("unexpected trailing token '" + toks_[i_].text + "'",
                             toks_[i_].pos);
        r.tokens = std::move(out_);
        r.scope_issues = std::move(issues_);
        return r;
    }

private:
    std::vector<RawTok> toks_;
    const Schema& schema_;
    size_t i_ = 0;
    std::vector<SqlToken> out_;
    std::vector<ScopeIssue> issues_;
    std::vector<Scope> scopes_;  // innermost last
    // select items parsed before FROM (written order) wait here
    struct Pending {
        std::string first, second;
        bool qualified = false;
        size_t tok_index = 0;
        size_t pos = 0;
        size_t unit_index = 0;  // into deferred_units_
    };

    bool done() const { return i_ >= toks_.size(); }
    const RawTok& peek(size_t ahead = 0) const {
        static RawTok eof{RawTok::op, "", 0};
        return i_ + ahead < toks_.size() ? toks_[i_ + ahead] : eof;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        size_t pos = done() ? (toks_.empty() ? 0 : toks_.back().pos) : toks_[i_].pos;
        throw ParseError(msg, pos);
    }
    bool peek_kw(std::string_view kw, size_t ahead = 0) const {
        const RawTok& t = peek(ahead);
        return t.kind == RawTok::word && iequals(t.text, kw);
    }
    bool eat_kw(std::string_view kw) {
        if (!peek_kw(kw)) return false;
        push_reserved(to_upper(kw), toks_[i_].pos);
        ++i_;
        return true;
    }
    void expect_kw(std::string_view kw) {
        if (!eat_kw(kw)) fail("expected " + std::string(kw));
    }
    bool eat_op(std::string_view op) {
        if (done() || toks_[i_].kind != RawTok::op || toks_[i_].text != op)
            return false;
        push_reserved(std::string(op), toks_[i_].pos);
        ++i_;
        return true;
    }
    void expect_op(std::string_view op) {
        if (!eat_op(op)) fail("expected '" + std::string(op) + "'");
    }

    void push_reserved(std::string surface, size_t pos) {
        out_.push_back({TokKind::reserved, std::move(surface), -1, -1, pos});
    }

    // ---- scope handling

    std::optional<TableId> lookup_table_name(const std::string& name) const {
        return schema_.find_table(name);
    }

    std::optional<TableId> resolve_table_word(const std::string& word) const {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            for (const auto& [alias, t] : it->aliases)
                if (iequals(alias, word)) return t;
            for (TableId t : it->tables)
                if (iequals(schema_.tables[t].name, word)) return t;
        }
        return std::nullopt;
    }

    bool table_in_scope(TableId t) const {
        for (const auto& sc : scopes_)
            for (TableId u : sc.tables)
                if (u == t) return true;
        return false;
    }

    ColRef resolve_ref(const Pending& p) {
        ColRef ref;
        ref.orig = p.qualified ? p.first + "." + p.second : p.first;
        if (p.qualified) {
            std::optional<TableId> t = resolve_table_word(p.first);
            if (!t) t = lookup_table_name(p.first);
            if (!t) fail_at(p.pos, "unknown table or alias '" + p.first + "'");
            auto f = schema_.find_field(*t, p.second);
            if (!f)
                fail_at(p.pos, "table " + schema_.tables[*t].name +
                                   " has no field '" + p.second + "'");
            if (!table_in_scope(*t))
                issues_.push_back({p.tok_index,
                                   schema_.qualified_name(*f) +
                                       " references a table outside the FROM scope"});
            ref.table = *t;
            ref.field = *f;
        } else {
            // bare field name: innermost scope outwards, unique within a scope
            for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
                std::optional<FieldId> found;
                bool ambiguous = false;
                for (TableId t : it->tables) {
                    if (auto f = schema_.find_field(t, p.first)) {
                        if (found) ambiguous = true;
                        found = f;
                    }
                }
                if (ambiguous)
                    fail_at(p.pos, "ambiguous field '" + p.first + "'");
                if (found) {
                    ref.table = schema_.fields[*found].table;
                    ref.field = *found;
                    patch_token(p, ref);
                    return ref;
                }
            }
            // schema-wide fallback, reported as a scope issue
            std::optional<FieldId> found;
            for (FieldId f = 0; f < static_cast<FieldId>(schema_.fields.size()); ++f)
                if (iequals(schema_.fields[f].name, p.first)) {
                    found = f;
                    break;
                }
            if (!found) fail_at(p.pos, "unknown field '" + p.first + "'");
            issues_.push_back({p.tok_index,
                               schema_.qualified_name(*found) +
                                   " references a table outside the FROM scope"});
            ref.table = schema_.fields[*found].table;
            ref.field = *found;
        }
        patch_token(p, ref);
        return ref;
    }

    void patch_token(const Pending& p, const ColRef& ref) {
        SqlToken& tok = out_[p.tok_index];
        tok.kind = TokKind::field;
        tok.table_ref = ref.table;
        tok.field_ref = ref.field;
        tok.surface = schema_.qualified_name(ref.field);
    }

    [[noreturn]] void fail_at(size_t pos, const std::string& msg) const {
        throw ParseError(msg, pos);
    }

    // Consume an identifier or qualified pair, producing a Pending entry.
    Pending consume_ref() {
        if (done() || toks_[i_].kind != RawTok::word)
            fail("expected identifier");
        Pending p;
        p.pos = toks_[i_].pos;
        p.first = toks_[i_].text;
        p.qualified = false;
        p.tok_index = out_.size();
        out_.push_back({TokKind::field, p.first, -1, -1, p.pos});  // patched later
        ++i_;
        if (!done() && toks_[i_].kind == RawTok::op && toks_[i_].text == "." &&
            peek(1).kind == RawTok::word) {
            ++i_;  // '.', folded into the single field token
            p.second = toks_[i_].text;
            p.qualified = true;
            out_.back().surface = p.first + "." + p.second;
            ++i_;
        }
        return p;
    }

    // ---- grammar

    Query parse_query(ClauseOrder order) {
        Query q;
        q.core = parse_core(order);
        if (peek_kw("UNION") || peek_kw("INTERSECT") || peek_kw("EXCEPT")) {
            std::string kw = to_upper(peek().text);
            eat_kw(kw);
            q.set_op = kw == "UNION" ? SetOp::union_
                       : kw == "INTERSECT" ? SetOp::intersect_
                                           : SetOp::except_;
            q.rhs = std::make_unique<Query>(parse_query(order));
        }
        return q;
    }

    QueryCore parse_core(ClauseOrder order) {
        QueryCore core;
        scopes_.push_back({});
        std::vector<Pending> pending_select;
        bool pending_distinct = false;
        if (order == ClauseOrder::Written) {
            parse_select_clause(core, &pending_select, &pending_distinct);
            parse_from_clause(core);
            resolve_pending_select(core, pending_select, pending_distinct);
            parse_filters(core);
            parse_tail(core);
        } else {
            parse_from_clause(core);
            parse_filters(core);
            parse_select_clause(core, nullptr, nullptr);
            parse_tail(core);
        }
        scopes_.pop_back();
        return core;
    }

    void parse_filters(QueryCore& core) {
        if (eat_kw("WHERE")) core.where = parse_cond_list();
        if (peek_kw("GROUP")) {
            expect_kw("GROUP");
            expect_kw("BY");
            do {
                Pending p = consume_ref();
                core.group_by.push_back(resolve_ref(p));
            } while (eat_op(","));
        }
        if (eat_kw("HAVING")) core.having = parse_cond_list();
    }

    void parse_tail(QueryCore& core) {
        if (peek_kw("ORDER")) {
            expect_kw("ORDER");
            expect_kw("BY");
            do {
                OrderItem item;
                item.expr = parse_val_unit();
                if (eat_kw("DESC"))
                    item.desc = true;
                else
                    eat_kw("ASC");
                core.order_by.push_back(std::move(item));
            } while (eat_op(","));
        }
        if (eat_kw("LIMIT")) {
            if (done() || toks_[i_].kind != RawTok::number)
                fail("expected number after LIMIT");
            out_.push_back({TokKind::number, toks_[i_].text, -1, -1, toks_[i_].pos});
            core.limit = std::stoll(toks_[i_].text);
            ++i_;
        }
    }

    void parse_select_clause(QueryCore& core, std::vector<Pending>* defer,
                             bool* defer_distinct) {
        expect_kw("SELECT");
        bool distinct = eat_kw("DISTINCT");
        if (defer)
            *defer_distinct = distinct;
        else
            core.select_distinct = distinct;
        do {
            if (defer) {
                parse_select_item_deferred(*defer);
            } else {
                core.select.push_back(parse_val_unit());
            }
        } while (eat_op(","));
    }

    // In written order SELECT precedes FROM; star and aggregate structure is
    // parsed now, field names resolved once the FROM tables are known.
    void parse_select_item_deferred(std::vector<Pending>& defer) {
        ValUnit unit = parse_val_unit_raw(&defer);
        deferred_units_.push_back(std::move(unit));
    }

    void resolve_pending_select(QueryCore& core, std::vector<Pending>& pending,
                                bool distinct) {
        core.select_distinct = distinct;
        for (auto& p : pending)
            deferred_units_[p.unit_index].col = resolve_ref(p);
        core.select = std::move(deferred_units_);
        deferred_units_.clear();
        pending.clear();
    }

    std::vector<ValUnit> deferred_units_;

    ValUnit parse_val_unit() { return parse_val_unit_raw(nullptr); }

    ValUnit parse_val_unit_raw(std::vector<Pending>* defer) {
        ValUnit unit;
        static const char* aggs[] = {"COUNT", "SUM", "AVG", "MIN", "MAX"};
        static const AggOp ops[] = {AggOp::count, AggOp::sum, AggOp::avg,
                                    AggOp::min, AggOp::max};
        for (size_t k = 0; k < 5; ++k) {
            if (peek_kw(aggs[k]) && peek(1).kind == RawTok::op && peek(1).text == "(") {
                eat_kw(aggs[k]);
                unit.agg = ops[k];
                expect_op("(");
                if (eat_kw("DISTINCT")) unit.distinct_inside = true;
                parse_col_or_star(unit.col, defer);
                expect_op(")");
                return unit;
            }
        }
        parse_col_or_star(unit.col, defer);
        return unit;
    }

    void parse_col_or_star(ColRef& col, std::vector<Pending>* defer) {
        if (!done() && toks_[i_].kind == RawTok::op && toks_[i_].text == "*") {
            col.star = true;
            col.orig = "*";
            push_reserved("*", toks_[i_].pos);
            ++i_;
            return;
        }
        Pending p = consume_ref();
        if (defer) {
            // resolution waits for FROM; remember which unit owns the ColRef
            p.unit_index = deferred_units_.size();
            defer->push_back(std::move(p));
        } else {
            col = resolve_ref(p);
        }
    }

    void parse_from_clause(QueryCore& core) {
        expect_kw("FROM");
        parse_table_ref(core);
        while (eat_kw("JOIN")) {
            parse_table_ref(core);
            expect_kw("ON");
            std::vector<JoinCond> conds;
            do {
                JoinCond jc;
                jc.left = resolve_ref(consume_ref());
                expect_op("=");
                jc.right = resolve_ref(consume_ref());
                conds.push_back(std::move(jc));
            } while (peek_kw("AND") && looks_like_join_cond() && eat_kw("AND"));
            core.joins.push_back(std::move(conds));
        }
    }

    // After ON's first equality, AND may continue the join condition or start
    // nothing (WHERE etc. follow). A join condition is ref = ref.
    bool looks_like_join_cond() const {
        size_t j = i_ + 1;  // after AND
        auto is_ref_end = [&](size_t k) {
            // ident or ident.ident
            if (k >= toks_.size() || toks_[k].kind != RawTok::word) return size_t(0);
            if (k + 2 < toks_.size() && toks_[k + 1].kind == RawTok::op &&
                toks_[k + 1].text == "." && toks_[k + 2].kind == RawTok::word)
                return k + 3;
            return k + 1;
        };
        size_t after_l = is_ref_end(j);
        if (!after_l) return false;
        if (after_l >= toks_.size() || toks_[after_l].kind != RawTok::op ||
            toks_[after_l].text != "=")
            return false;
        return is_ref_end(after_l + 1) != 0;
    }

    void parse_table_ref(QueryCore& core) {
        if (done() || toks_[i_].kind != RawTok::word) fail("expected table name");
        std::string name = toks_[i_].text;
        auto t = lookup_table_name(name);
        if (!t) fail("unknown table '" + name + "'");
        out_.push_back({TokKind::table, schema_.tables[*t].name, *t, -1, toks_[i_].pos});
        ++i_;
        std::string alias;
        if (eat_kw("AS")) {
            if (done() || toks_[i_].kind != RawTok::word) fail("expected alias");
            alias = toks_[i_].text;
            // alias declarations stand for their table
            out_.push_back({TokKind::table, alias, *t, -1, toks_[i_].pos});
            ++i_;
        }
        core.from_tables.push_back(*t);
        core.from_aliases.push_back(alias);
        scopes_.back().tables.push_back(*t);
        if (!alias.empty()) scopes_.back().aliases.emplace_back(alias, *t);
    }

    CondList parse_cond_list() {
        CondList list;
        list.conds.push_back(parse_condition());
        while (peek_kw("AND") || peek_kw("OR")) {
            bool is_or = peek_kw("OR");
            eat_kw(is_or ? "OR" : "AND");
            list.or_connector.push_back(is_or);
            list.conds.push_back(parse_condition());
        }
        return list;
    }

    Condition parse_condition() {
        Condition c;
        c.lhs = parse_val_unit();
        if (eat_kw("NOT")) c.negated = true;
        if (eat_kw("BETWEEN")) {
            c.op = CmpOp::between;
            c.rhs = parse_value();
            expect_kw("AND");
            c.rhs2 = parse_value();
            return c;
        }
        if (eat_kw("IN")) {
            c.op = CmpOp::in;
            expect_op("(");
            c.rhs.kind = SqlValue::subquery;
            c.rhs.sub = std::make_unique<Query>(parse_query(current_order()));
            expect_op(")");
            return c;
        }
        if (eat_kw("LIKE")) {
            c.op = CmpOp::like;
            c.rhs = parse_value();
            return c;
        }
        if (c.negated) fail("expected IN, LIKE or BETWEEN after NOT");
        static const std::pair<const char*, CmpOp> cmps[] = {
            {"=", CmpOp::eq},  {"!=", CmpOp::ne}, {"<>", CmpOp::ne},
            {"<=", CmpOp::le}, {">=", CmpOp::ge}, {"<", CmpOp::lt},
            {">", CmpOp::gt}};
        for (const auto& [sym, op] : cmps) {
            if (eat_op(sym)) {
                c.op = op;
                c.rhs = parse_value();
                return c;
            }
        }
        fail("expected comparison operator");
    }

    // Distinguishing a parenthesised subquery from a literal: the first token
    // inside decides (SELECT for written order, FROM for execution order).
    ClauseOrder current_order() const { return order_; }

    SqlValue parse_value() {
        SqlValue v;
        if (!done() && toks_[i_].kind == RawTok::op && toks_[i_].text == "(") {
            expect_op("(");
            v.kind = SqlValue::subquery;
            v.sub = std::make_unique<Query>(parse_query(order_));
            expect_op(")");
            return v;
        }
        bool neg = false;
        if (!done() && toks_[i_].kind == RawTok::op && toks_[i_].text == "-") {
            push_reserved("-", toks_[i_].pos);
            ++i_;
            neg = true;
        }
        if (done()) fail("expected value");
        const RawTok& t = toks_[i_];
        if (t.kind == RawTok::number) {
            v.kind = SqlValue::number;
            v.surface = (neg ? "-" : "") + t.text;
            out_.push_back({TokKind::number, t.text, -1, -1, t.pos});
            ++i_;
            return v;
        }
        if (neg) fail("expected number after '-'");
        if (t.kind == RawTok::str) {
            v.kind = SqlValue::text;
            v.surface = t.text;
            out_.push_back({TokKind::value, t.text, -1, -1, t.pos});
            ++i_;
            return v;
        }
        fail("expected literal or subquery");
    }

public:
    void set_order(ClauseOrder o) { order_ = o; }

private:
    ClauseOrder order_ = ClauseOrder::Written;
};

inline ParseResult parse_text(const std::string& sql, const Schema& schema,
                              ClauseOrder order) {
    if (trim(sql).empty()) throw ParseError("empty SQL input", 0);
    Parser p(lex(sql), schema);
    p.set_order(order);
    return p.run(order);
}

}  // namespace sql_detail

// ---------------------------------------------------------------------------
// Public parsing interface

inline ParseResult parse_written(const std::string& sql, const Schema& s) {
    return sql_detail::parse_text(sql, s, ClauseOrder::Written);
}

inline ParseResult parse_exec(const std::string& line, const Schema& s) {
    return sql_detail::parse_text(line, s, ClauseOrder::Exec);
}

// Strict parse: scope issues are errors.
inline Query parse(const std::string& sql, const Schema& s) {
    ParseResult r = parse_written(sql, s);
    if (!r.scope_issues.empty())
        throw ParseError(r.scope_issues.front().message,
                         r.tokens[r.scope_issues.front().token_index].pos);
    return std::move(r.query);
}

// Every token of the query classified per the reserved/table/field/value/
// number trichotomy used by the token-transition lemma.
inline std::vector<SqlToken> tokenize_sql(const std::string& sql, const Schema& s) {
    return parse_written(sql, s).tokens;
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderOpts {
    bool keep_aliases = false;  // preserve AS bindings and written ref forms
};

namespace sql_detail {

class Renderer {
public:
    Renderer(const Schema& s, RenderOpts opts, ClauseOrder order)
        : schema_(s), opts_(opts), order_(order) {}

    std::vector<SqlToken> render(const Query& q) {
        emit_query(q);
        return std::move(out_);
    }

private:
    const Schema& schema_;
    RenderOpts opts_;
    ClauseOrder order_;
    std::vector<SqlToken> out_;

    void kw(std::string_view s) { out_.push_back({TokKind::reserved, std::string(s), -1, -1, 0}); }

    void emit_query(const Query& q) {
        emit_core(q.core);
        if (q.set_op != SetOp::none) {
            kw(q.set_op == SetOp::union_ ? "UNION"
               : q.set_op == SetOp::intersect_ ? "INTERSECT"
                                               : "EXCEPT");
            emit_query(*q.rhs);
        }
    }

    void emit_core(const QueryCore& c) {
        if (order_ == ClauseOrder::Written) {
            emit_select(c);
            emit_from(c);
            emit_filters(c);
            emit_tail(c);
        } else {
            emit_from(c);
            emit_filters(c);
            emit_select(c);
            emit_tail(c);
        }
    }

    void emit_select(const QueryCore& c) {
        kw("SELECT");
        if (c.select_distinct) kw("DISTINCT");
        for (size_t i = 0; i < c.select.size(); ++i) {
            if (i) kw(",");
            emit_val_unit(c.select[i]);
        }
    }

    void emit_from(const QueryCore& c) {
        kw("FROM");
        for (size_t i = 0; i < c.from_tables.size(); ++i) {
            if (i) kw("JOIN");
            TableId t = c.from_tables[i];
            out_.push_back({TokKind::table, schema_.tables[t].name, t, -1, 0});
            if (opts_.keep_aliases && !c.from_aliases[i].empty()) {
                kw("AS");
                out_.push_back({TokKind::table, c.from_aliases[i], t, -1, 0});
            }
            if (i && i - 1 < c.joins.size()) {
                kw("ON");
                const auto& conds = c.joins[i - 1];
                for (size_t k = 0; k < conds.size(); ++k) {
                    if (k) kw("AND");
                    emit_col(conds[k].left);
                    kw("=");
                    emit_col(conds[k].right);
                }
            }
        }
    }

    void emit_filters(const QueryCore& c) {
        if (c.where) {
            kw("WHERE");
            emit_cond_list(*c.where);
        }
        if (!c.group_by.empty()) {
            kw("GROUP");
            kw("BY");
            for (size_t i = 0; i < c.group_by.size(); ++i) {
                if (i) kw(",");
                emit_col(c.group_by[i]);
            }
        }
        if (c.having) {
            kw("HAVING");
            emit_cond_list(*c.having);
        }
    }

    void emit_tail(const QueryCore& c) {
        if (!c.order_by.empty()) {
            kw("ORDER");
            kw("BY");
            for (size_t i = 0; i < c.order_by.size(); ++i) {
                if (i) kw(",");
                emit_val_unit(c.order_by[i].expr);
                if (c.order_by[i].desc) kw("DESC");
            }
        }
        if (c.limit) {
            kw("LIMIT");
            out_.push_back({TokKind::number, std::to_string(*c.limit), -1, -1, 0});
        }
    }

    void emit_val_unit(const ValUnit& u) {
        static const char* names[] = {"", "COUNT", "SUM", "AVG", "MIN", "MAX"};
        if (u.agg != AggOp::none) {
            kw(names[static_cast<int>(u.agg)]);
            kw("(");
            if (u.distinct_inside) kw("DISTINCT");
            emit_col(u.col);
            kw(")");
        } else {
            emit_col(u.col);
        }
    }

    void emit_col(const ColRef& c) {
        if (c.star) {
            kw("*");
            return;
        }
        std::string surface = opts_.keep_aliases && !c.orig.empty()
                                  ? c.orig
                                  : schema_.qualified_name(c.field);
        out_.push_back({TokKind::field, std::move(surface), c.table, c.field, 0});
    }

    void emit_cond_list(const CondList& l) {
        for (size_t i = 0; i < l.conds.size(); ++i) {
            if (i) kw(l.or_connector[i - 1] ? "OR" : "AND");
            emit_cond(l.conds[i]);
        }
    }

    void emit_cond(const Condition& c) {
        emit_val_unit(c.lhs);
        if (c.negated) kw("NOT");
        switch (c.op) {
            case CmpOp::in:
                kw("IN");
                emit_value(c.rhs);
                return;
            case CmpOp::like:
                kw("LIKE");
                emit_value(c.rhs);
                return;
            case CmpOp::between:
                kw("BETWEEN");
                emit_value(c.rhs);
                kw("AND");
                emit_value(c.rhs2);
                return;
            case CmpOp::eq: kw("="); break;
            case CmpOp::ne: kw("!="); break;
            case CmpOp::lt: kw("<"); break;
            case CmpOp::gt: kw(">"); break;
            case CmpOp::le: kw("<="); break;
            case CmpOp::ge: kw(">="); break;
        }
        emit_value(c.rhs);
    }

    void emit_value(const SqlValue& v) {
        switch (v.kind) {
            case SqlValue::subquery:
                kw("(");
                emit_query(*v.sub);
                kw(")");
                break;
            case SqlValue::number:
                if (!v.surface.empty() && v.surface[0] == '-') {
                    kw("-");
                    out_.push_back({TokKind::number, v.surface.substr(1), -1, -1, 0});
                } else {
                    out_.push_back({TokKind::number, v.surface, -1, -1, 0});
                }
                break;
            case SqlValue::text:
                out_.push_back({TokKind::value, v.surface, -1, -1, 0});
                break;
        }
    }
};

}  // namespace sql_detail

// Linearize with clauses in execution order (FROM WHERE GROUP BY HAVING
// SELECT ORDER BY LIMIT), sub-queries and set-operation sides included.
inline std::vector<SqlToken> to_exec_order(const Query& q, const Schema& s,
                                           RenderOpts opts = {}) {
    return sql_detail::Renderer(s, opts, ClauseOrder::Exec).render(q);
}

inline std::vector<SqlToken> render_written_tokens(const Query& q, const Schema& s,
                                                   RenderOpts opts = {}) {
    return sql_detail::Renderer(s, opts, ClauseOrder::Written).render(q);
}

// Token sequence to text. Values are single-quoted, everything else prints
// its surface.
inline std::string tokens_to_text(const std::vector<SqlToken>& toks) {
    std::string out;
    for (const auto& t : toks) {
        if (!out.empty()) out += ' ';
        if (t.kind == TokKind::value)
            out += "'" + t.surface + "'";
        else
            out += t.surface;
    }
    return out;
}

inline std::string render_written(const Query& q, const Schema& s,
                                  RenderOpts opts = {}) {
    return tokens_to_text(render_written_tokens(q, s, opts));
}

// Reconstruct standard written-order SQL from an execution-order sequence.
inline std::string to_written(const std::vector<SqlToken>& exec_tokens,
                              const Schema& s) {
    if (exec_tokens.empty()) throw ParseError("empty execution-order sequence", 0);
    ParseResult r = parse_exec(tokens_to_text(exec_tokens), s);
    return render_written(r.query, s);
}

inline std::string to_written(const std::string& exec_line, const Schema& s) {
    ParseResult r = parse_exec(exec_line, s);
    return render_written(r.query, s);
}

}  // namespace bridge
