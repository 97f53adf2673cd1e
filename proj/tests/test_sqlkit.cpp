#include <catch2/catch_amalgamated.hpp>

#include "bridge/sqlkit.hpp"
#include "support/helpers.hpp"

using namespace bridge;
using testsupport::corpus_schema;

namespace {

// token-for-token comparison modulo whitespace, case and value quoting;
// qualified names a.b fold into one token to match the field-token view
void check_tokens_match(const std::vector<SqlToken>& got, const std::string& expected) {
    auto raw = sql_detail::lex(expected);
    std::vector<sql_detail::RawTok> want;
    for (size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].kind == sql_detail::RawTok::word && i + 2 < raw.size() &&
            raw[i + 1].kind == sql_detail::RawTok::op && raw[i + 1].text == "." &&
            raw[i + 2].kind == sql_detail::RawTok::word) {
            want.push_back({sql_detail::RawTok::word,
                            raw[i].text + "." + raw[i + 2].text, raw[i].pos});
            i += 2;
        } else {
            want.push_back(raw[i]);
        }
    }
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
        INFO("token " << i << ": got '" << got[i].surface << "' want '"
                      << want[i].text << "'");
        if (got[i].kind == TokKind::value || want[i].kind == sql_detail::RawTok::str)
            CHECK(value_text_equal(got[i].surface, want[i].text));
        else
            CHECK(iequals(got[i].surface, want[i].text));
    }
}

}  // namespace

TEST_CASE("basic parse produces resolved AST") {
    const Schema& s = corpus_schema("properties");
    Query q = parse("SELECT COUNT(*) FROM Properties", s);
    REQUIRE(q.core.select.size() == 1);
    CHECK(q.core.select[0].agg == AggOp::count);
    CHECK(q.core.select[0].col.star);
    REQUIRE(q.core.from_tables.size() == 1);
    CHECK(s.tables[q.core.from_tables[0]].name == "Properties");
}

TEST_CASE("nested subquery parses recursively") {
    const Schema& s = corpus_schema("college_1");
    Query q = parse(
        "SELECT COUNT(DISTINCT state) FROM college WHERE enr < (SELECT AVG(enr) FROM college)",
        s);
    REQUIRE(q.core.where);
    REQUIRE(q.core.where->conds.size() == 1);
    const auto& cond = q.core.where->conds[0];
    CHECK(cond.op == CmpOp::lt);
    REQUIRE(cond.rhs.kind == SqlValue::subquery);
    CHECK(cond.rhs.sub->core.select[0].agg == AggOp::avg);
}

TEST_CASE("grammar errors carry positions") {
    const Schema& s = corpus_schema("properties");
    CHECK_THROWS_AS(parse("SELECT x FROM", s), ParseError);
    CHECK_THROWS_AS(parse("", s), ParseError);
    CHECK_THROWS_AS(parse("SELECT Price FROM Nowhere", s), ParseError);
    CHECK_THROWS_AS(parse("SELECT Missing_Field FROM Properties", s), ParseError);
}

TEST_CASE("execution order of the footnote example") {
    const Schema& s = corpus_schema("properties");
    auto toks = to_exec_order(parse("SELECT COUNT(*) FROM Properties", s), s);
    check_tokens_match(toks, "FROM Properties SELECT COUNT ( * )");
}

TEST_CASE("execution order matches the published pairs") {
    for (const auto& p : testsupport::load_exec_pairs()) {
        const Schema& s = corpus_schema(p.db_id);
        INFO(p.written);
        Query q = parse(p.written, s);
        auto toks = to_exec_order(q, s, {.keep_aliases = true});
        check_tokens_match(toks, p.exec);
    }
}

TEST_CASE("to_written inverts the published exec lines") {
    for (const auto& p : testsupport::load_exec_pairs()) {
        const Schema& s = corpus_schema(p.db_id);
        INFO(p.exec);
        std::string written = to_written(p.exec, s);
        // normalized comparison: both sides parse to equal ASTs
        Query direct = parse(p.written, s);
        Query round = parse(written, s);
        CHECK(ast_equal(direct, round));
    }
}

TEST_CASE("empty exec sequence is an error") {
    const Schema& s = corpus_schema("properties");
    CHECK_THROWS_AS(to_written(std::vector<SqlToken>{}, s), ParseError);
    CHECK_THROWS_AS(to_written(std::string(""), s), ParseError);
}

TEST_CASE("round trip over the whole corpus") {
    auto corpus = testsupport::load_corpus_queries();
    REQUIRE(corpus.size() >= 50);
    for (const auto& cq : corpus) {
        const Schema& s = corpus_schema(cq.db_id);
        INFO(cq.sql);
        Query q = parse(cq.sql, s);
        auto exec = to_exec_order(q, s);
        Query back = sql_detail::parse_text(tokens_to_text(exec), s, ClauseOrder::Exec).query;
        CHECK(ast_equal(q, back));
        // and again through written rendering
        Query q2 = parse(to_written(exec, s), s);
        CHECK(ast_equal(q, q2));
    }
}

TEST_CASE("token classification follows the trichotomy") {
    const Schema& s = corpus_schema("voter_club");
    auto toks = tokenize_sql("SELECT LName FROM STUDENT WHERE LName = \"Kyle\"", s);
    REQUIRE(toks.size() == 8);
    CHECK(toks[0].kind == TokKind::reserved);
    CHECK(toks[1].kind == TokKind::field);
    CHECK(toks[1].surface == "STUDENT.LName");
    CHECK(toks[2].kind == TokKind::reserved);
    CHECK(toks[3].kind == TokKind::table);
    CHECK(toks[4].kind == TokKind::reserved);
    CHECK(toks[5].kind == TokKind::field);
    CHECK(toks[6].kind == TokKind::reserved);
    CHECK(toks[7].kind == TokKind::value);
    CHECK(toks[7].surface == "Kyle");
}

TEST_CASE("limit tokens classify as numbers") {
    const Schema& s = corpus_schema("college_1");
    auto toks = tokenize_sql("SELECT cName FROM college LIMIT 1", s);
    CHECK(toks.back().kind == TokKind::number);
    CHECK(toks.back().surface == "1");
    CHECK(toks[toks.size() - 2].kind == TokKind::reserved);
}

TEST_CASE("alias references resolve to schema fields") {
    const Schema& s = corpus_schema("voter_club");
    auto toks = tokenize_sql("SELECT T1.LName FROM STUDENT AS T1", s);
    bool found = false;
    for (const auto& t : toks)
        if (t.kind == TokKind::field) {
            found = true;
            CHECK(t.surface == "STUDENT.LName");
            CHECK(s.fields[t.field_ref].name == "LName");
        }
    CHECK(found);
}

TEST_CASE("unknown identifiers are rejected") {
    const Schema& s = corpus_schema("college_1");
    CHECK_THROWS_AS(tokenize_sql("SELECT frobnicate FROM college", s), ParseError);
}
