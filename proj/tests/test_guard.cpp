#include <catch2/catch_amalgamated.hpp>

#include "bridge/guard.hpp"
#include "support/helpers.hpp"

using namespace bridge;
using testsupport::corpus_schema;

namespace {

const char* kTableA2 =
    "FROM STUDENT JOIN VOTING_RECORD ON STUDENT.StuID = VOTING_RECORD.PRESIDENT_Vote "
    "SELECT DISTINCT STUDENT.LName EXCEPT FROM STUDENT WHERE STUDENT.Advisor = 2192 "
    "SELECT DISTINCT VOTING_RECORD.PRESIDENT_Vote";

Schema mini_schema() {
    Schema s;
    s.db_id = "mini";
    s.tables = {{"a", {0, 1}}, {"b", {2}}};
    s.fields.resize(3);
    s.fields[0] = {"x", 0, DataType::number, false, false, {}};
    s.fields[1] = {"y", 0, DataType::text, false, false, {}};
    s.fields[2] = {"z", 1, DataType::number, false, false, {}};
    return s;
}

}  // namespace

TEST_CASE("field mask starts closed and opens per table") {
    Schema s = mini_schema();
    auto h = serialize(tokenize_words("how many"), s, {}, SchemaView::identity(s));
    auto view = pointable_view(h);
    FieldMask xi = FieldMask::initial(view);
    for (size_t i = 0; i < view.items.size(); ++i) {
        if (view.items[i].kind == Pointable::field)
            CHECK_FALSE(xi.allowed[i]);
        else
            CHECK(xi.allowed[i]);
    }
    // reserved token leaves the mask unchanged
    FieldMask same = update_field_mask(xi, TokClass::reserved, -1, view, s);
    CHECK(same.allowed == xi.allowed);
    // emitting table a opens exactly a's fields
    FieldMask opened = update_field_mask(xi, TokClass::table, 0, view, s);
    for (size_t i = 0; i < view.items.size(); ++i) {
        if (view.items[i].kind != Pointable::field) continue;
        bool owned_by_a = s.fields[view.items[i].field_ref].table == 0;
        CHECK(static_cast<bool>(opened.allowed[i]) == owned_by_a);
    }
}

TEST_CASE("apply_masks zeroes and renormalizes") {
    Schema s = mini_schema();
    auto h = serialize(tokenize_words("hi"), s, {}, SchemaView::identity(s));
    auto view = pointable_view(h);
    SupportLayout layout{kVocabSize, &view};
    FieldMask xi = FieldMask::initial(view);
    for (auto& b : xi.allowed) b = 1;
    TransitionMask all;

    Eigen::VectorXd dist = Eigen::VectorXd::Constant(layout.size(),
                                                     1.0 / double(layout.size()));
    SECTION("all-ones masks keep the distribution") {
        auto out = apply_masks(dist, xi, all, layout);
        REQUIRE_FALSE(out.all_masked);
        CHECK((out.probs - dist).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("masked mass rescales the survivors") {
        // after a table token only reserved symbols survive
        TransitionMask tm = TransitionMask::after(TokClass::table);
        auto out = apply_masks(dist, xi, tm, layout);
        REQUIRE_FALSE(out.all_masked);
        CHECK(std::abs(out.probs.sum() - 1.0) < 1e-9);
        for (size_t i = kVocabSize; i < layout.size(); ++i)
            CHECK(out.probs[i] == 0.0);
        // survivors scaled by 1/(kept mass)
        double kept = double(kNumReserved) / double(layout.size());
        CHECK(std::abs(out.probs[0] - (1.0 / layout.size()) / kept) < 1e-12);
    }
    SECTION("everything masked raises the flag") {
        Eigen::VectorXd zeros = Eigen::VectorXd::Zero(layout.size());
        auto out = apply_masks(zeros, xi, all, layout);
        CHECK(out.all_masked);
    }
    SECTION("mask order commutes") {
        TransitionMask tm = TransitionMask::after(TokClass::value);
        FieldMask closed = FieldMask::initial(view);
        auto once = apply_masks(dist, closed, tm, layout);
        // applying xi first (tm all-open), then tm, matches the joint result
        TransitionMask open;
        auto step1 = apply_masks(dist, closed, open, layout);
        FieldMask all_open = closed;
        for (auto& b : all_open.allowed) b = 1;
        auto step2 = apply_masks(step1.probs, all_open, tm, layout);
        CHECK((step2.probs - once.probs).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("dimension mismatch throws") {
        Eigen::VectorXd bad = Eigen::VectorXd::Zero(3);
        CHECK_THROWS_AS(apply_masks(bad, xi, all, layout), std::invalid_argument);
    }
}

TEST_CASE("transition mask encodes the token transition lemma") {
    auto start = TransitionMask::after(std::nullopt);
    CHECK((start.allow_reserved && start.allow_table && start.allow_field &&
           start.allow_value));
    auto after_res = TransitionMask::after(TokClass::reserved);
    CHECK((after_res.allow_table && after_res.allow_field && after_res.allow_value));
    auto after_tab = TransitionMask::after(TokClass::table);
    CHECK(after_tab.allow_reserved);
    CHECK_FALSE(after_tab.allow_table);
    CHECK_FALSE(after_tab.allow_field);
    CHECK_FALSE(after_tab.allow_value);
    auto after_val = TransitionMask::after(TokClass::value);
    CHECK(after_val.allow_reserved);
    CHECK(after_val.allow_value);
    CHECK_FALSE(after_val.allow_table);
}

TEST_CASE("static check flags the published counterexample as out of scope") {
    const Schema& s = corpus_schema("voter_club");
    auto violations = static_check_line(kTableA2, s);
    REQUIRE_FALSE(violations.empty());
    bool scope_hit = false;
    for (const auto& v : violations) {
        if (v.kind == ViolationKind::scope) {
            scope_hit = true;
            CHECK(v.message.find("PRESIDENT_Vote") != std::string::npos);
        }
        CHECK(v.kind != ViolationKind::lemma1);  // the sequence satisfies lemma 1
        CHECK(v.kind != ViolationKind::lemma2);
    }
    CHECK(scope_hit);
}

TEST_CASE("published exec lines pass the static check") {
    for (const auto& p : testsupport::load_exec_pairs()) {
        const Schema& s = corpus_schema(p.db_id);
        Query q = parse(p.written, s);
        auto toks = to_exec_order(q, s);
        INFO(p.exec);
        CHECK(static_check(toks, s).empty());
    }
}

TEST_CASE("out-of-scope field in a flat query") {
    Schema s = mini_schema();
    auto violations = static_check_line("FROM a SELECT b.z", s);
    bool scope_hit = false;
    for (const auto& v : violations) scope_hit |= v.kind == ViolationKind::scope;
    CHECK(scope_hit);
}

TEST_CASE("lemma scans catch ordering and transition mutants") {
    const Schema& s = corpus_schema("college_1");
    Query q = parse("SELECT cName FROM college WHERE enr > 10000", s);
    auto good = to_exec_order(q, s);
    REQUIRE(static_check(good, s).empty());

    SECTION("SELECT moved before FROM") {
        // FROM college WHERE ... SELECT cName -> SELECT cName FROM college ...
        std::vector<SqlToken> bad;
        bad.push_back({TokKind::reserved, "SELECT", -1, -1, 0});
        bad.push_back(good[good.size() - 1]);  // cName
        for (size_t i = 0; i + 2 < good.size(); ++i) bad.push_back(good[i]);
        auto violations = static_check(bad, s);
        bool lemma1_or_syntax = false;
        for (const auto& v : violations)
            lemma1_or_syntax |= v.kind == ViolationKind::lemma1 ||
                                v.kind == ViolationKind::syntax;
        CHECK(lemma1_or_syntax);
    }
    SECTION("field directly after another field") {
        std::vector<SqlToken> bad = good;
        for (size_t i = 0; i < bad.size(); ++i) {
            if (bad[i].kind == TokKind::field) {
                bad.insert(bad.begin() + i, bad[i]);
                break;
            }
        }
        auto violations = static_check(bad, s);
        bool lemma2_hit = false;
        for (const auto& v : violations) lemma2_hit |= v.kind == ViolationKind::lemma2;
        CHECK(lemma2_hit);
    }
}

TEST_CASE("lemma 1 scan reports fields before their tables") {
    Schema s = mini_schema();
    // z belongs to table b which never appears
    auto toks = classify_exec_line("FROM a WHERE z = 1 SELECT x", s);
    auto violations = lemma1_scan(toks, s);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].kind == ViolationKind::lemma1);
}

TEST_CASE("sketch check accepts the WikiSQL shape only") {
    const Schema& s = corpus_schema("college_1");
    CHECK(sketch_check(parse("SELECT COUNT(cName) FROM college WHERE state = 'FL' AND enr > 3", s)));
    CHECK(sketch_check(parse("SELECT cName FROM college", s)));
    CHECK_FALSE(sketch_check(parse("SELECT cName, state FROM college", s)));
    CHECK_FALSE(sketch_check(parse("SELECT cName FROM college GROUP BY cName", s)));
    CHECK_FALSE(sketch_check(parse("SELECT cName FROM college ORDER BY enr", s)));
    CHECK_FALSE(sketch_check(
        parse("SELECT cName FROM college WHERE enr > 3 OR enr < 1", s)));
    const Schema& v = corpus_schema("voter_club");
    CHECK_FALSE(sketch_check(parse(
        "SELECT LName FROM STUDENT JOIN VOTING_RECORD ON STUDENT.StuID = VOTING_RECORD.StuID",
        v)));
}
