#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include <sqlite3.h>

#include "bridge/evalkit.hpp"
#include "support/helpers.hpp"

using namespace bridge;
using testsupport::corpus_schema;

TEST_CASE("exact match normalizes surface but not structure") {
    const Schema& s = corpus_schema("college_1");
    CHECK(exact_match("SELECT cName FROM college", "SELECT cName FROM college", s));
    // case folding and alias resolution
    CHECK(exact_match("select CNAME from COLLEGE", "SELECT cName FROM college", s));
    // different group keys differ
    const Schema& p = corpus_schema("poker_player");
    CHECK_FALSE(exact_match(
        "SELECT Nationality, COUNT(*) FROM People GROUP BY Nationality",
        "SELECT Nationality, COUNT(*) FROM People GROUP BY Name", p));
    // unparseable prediction scores false
    CHECK_FALSE(exact_match("SELECT FROM WHERE", "SELECT cName FROM college", s));
}

TEST_CASE("exact set match ignores ordering and literal values") {
    const Schema& s = corpus_schema("college_1");
    SECTION("reordered projections") {
        CHECK(exact_set_match("SELECT state, cName FROM college",
                              "SELECT cName, state FROM college", s));
        CHECK_FALSE(exact_match("SELECT state, cName FROM college",
                                "SELECT cName, state FROM college", s));
    }
    SECTION("values are placeholders") {
        const Schema& v = corpus_schema("voter_club");
        CHECK(exact_set_match("SELECT LName FROM STUDENT WHERE LName = 'Kyle'",
                              "SELECT LName FROM STUDENT WHERE LName = 'Bob'", v));
        CHECK(exact_set_match("SELECT cName FROM college WHERE enr > 5",
                              "SELECT cName FROM college WHERE enr > 900", s));
    }
    SECTION("reordered conjuncts") {
        CHECK(exact_set_match(
            "SELECT cName FROM college WHERE enr > 5 AND state = 'FL'",
            "SELECT cName FROM college WHERE state = 'AZ' AND enr > 9", s));
    }
    SECTION("missing clause fails") {
        CHECK_FALSE(exact_set_match(
            "SELECT cName FROM college",
            "SELECT cName FROM college WHERE enr > 5", s));
    }
    SECTION("and/or are not interchangeable") {
        CHECK_FALSE(exact_set_match(
            "SELECT cName FROM college WHERE enr > 5 OR state = 'FL'",
            "SELECT cName FROM college WHERE enr > 5 AND state = 'FL'", s));
    }
    SECTION("nested subqueries compare recursively") {
        CHECK(exact_set_match(
            "SELECT COUNT(DISTINCT state) FROM college WHERE enr < (SELECT AVG(enr) FROM college)",
            "SELECT COUNT(DISTINCT state) FROM college WHERE enr < (SELECT AVG(enr) FROM college)",
            s));
        CHECK_FALSE(exact_set_match(
            "SELECT COUNT(DISTINCT state) FROM college WHERE enr < (SELECT MAX(enr) FROM college)",
            "SELECT COUNT(DISTINCT state) FROM college WHERE enr < (SELECT AVG(enr) FROM college)",
            s));
    }
}

TEST_CASE("EM implies E-SM across the corpus") {
    for (const auto& cq : testsupport::load_corpus_queries()) {
        const Schema& s = corpus_schema(cq.db_id);
        REQUIRE(exact_match(cq.sql, cq.sql, s));
        REQUIRE(exact_set_match(cq.sql, cq.sql, s));
    }
}

namespace {

std::string make_college_db() {
    std::string path = "ea_test.sqlite";
    std::remove(path.c_str());
    sqlite3* db = nullptr;
    REQUIRE(sqlite3_open(path.c_str(), &db) == SQLITE_OK);
    const char* ddl =
        "CREATE TABLE college (cName text, state text, enr int);"
        "INSERT INTO college VALUES ('ASU','AZ',12000);"
        "INSERT INTO college VALUES ('FSU','FL',19050);"
        "INSERT INTO college VALUES ('GT','GA',23000);"
        "INSERT INTO college VALUES ('LSU','LA',18000);";
    REQUIRE(sqlite3_exec(db, ddl, nullptr, nullptr, nullptr) == SQLITE_OK);
    sqlite3_close(db);
    return path;
}

}  // namespace

TEST_CASE("execution accuracy compares result sets") {
    const Schema& s = corpus_schema("college_1");
    std::string db = make_college_db();

    SECTION("identical queries match") {
        auto r = execution_accuracy("SELECT cName FROM college WHERE enr > 15000",
                                    "SELECT cName FROM college WHERE enr > 15000",
                                    db, s);
        REQUIRE(r);
        CHECK(*r);
    }
    SECTION("different queries with equal results match") {
        auto r = execution_accuracy(
            "SELECT cName FROM college WHERE enr > 15000",
            "SELECT cName FROM college WHERE enr >= 18000", db, s);
        REQUIRE(r);
        CHECK(*r);
    }
    SECTION("row order ignored without ORDER BY") {
        auto r = execution_accuracy(
            "SELECT cName FROM college ORDER BY cName",
            "SELECT cName FROM college", db, s);
        REQUIRE(r);
        CHECK(*r);
    }
    SECTION("sequences compared when both sides order") {
        auto r = execution_accuracy(
            "SELECT cName FROM college ORDER BY enr",
            "SELECT cName FROM college ORDER BY enr DESC", db, s);
        REQUIRE(r);
        CHECK_FALSE(*r);
    }
    SECTION("execution errors score false") {
        auto r = execution_accuracy("SELECT nope FROM college",
                                    "SELECT cName FROM college", db, s);
        REQUIRE(r);
        CHECK_FALSE(*r);
    }
    SECTION("broken gold yields no verdict") {
        auto r = execution_accuracy("SELECT cName FROM college",
                                    "SELECT nope FROM college", db, s);
        CHECK_FALSE(r.has_value());
    }
    std::remove(db.c_str());
}

TEST_CASE("aggregates compute percentages") {
    EvalResult r;
    r.verdicts = {{true, true, true}, {false, true, std::nullopt},
                  {false, false, false}, {true, true, true}};
    r.aggregate();
    CHECK(r.em_pct == 50.0);
    CHECK(r.esm_pct == 75.0);
    REQUIRE(r.ea_pct);
    CHECK(std::abs(*r.ea_pct - 200.0 / 3.0) < 1e-9);
}
