#include <catch2/catch_amalgamated.hpp>

#include "bridge/anchor.hpp"
#include "support/oracles.hpp"

using namespace bridge;

namespace {

Schema fig2_schema() {
    Schema s;
    s.db_id = "fig2";
    s.tables = {{"Properties", {0, 1}}, {"Reference_Types", {2}}};
    s.fields.resize(3);
    s.fields[0] = {"Property_Type_Code", 0, DataType::text, false, false,
                   {"Apartment", "Field", "House", "Shop", "Other"}};
    s.fields[1] = {"Price", 0, DataType::number, false, false, {"300000", "50"}};
    s.fields[2] = {"Other_Type_Code", 1, DataType::text, false, false,
                   {"House", "Apartment", "Garage"}};
    return s;
}

}  // namespace

TEST_CASE("boundary match accepts plural variation") {
    auto m = longest_boundary_match("how many students keep cats as pets?", "cat");
    REQUIRE(m);
    CHECK(m->sm_len == 3);
    std::string q = "how many students keep cats as pets?";
    CHECK(q.substr(m->sq_begin, m->sq_end - m->sq_begin) == "cats");
}

TEST_CASE("boundary match rejects substrings of longer words") {
    CHECK_FALSE(longest_boundary_match("the category page", "cat"));
}

TEST_CASE("exact match spans the whole word") {
    std::string q = "nationality is not russia";
    auto m = longest_boundary_match(q, "Russia");
    REQUIRE(m);
    CHECK(q.substr(m->sq_begin, m->sq_end - m->sq_begin) == "russia");
    CHECK(m->sm_len == 6);
    auto [bq, bc] = score(*m, "Russia");
    CHECK(bq == 1.0);
    CHECK(bc == 1.0);
}

TEST_CASE("score arithmetic from the definitions") {
    SECTION("cat in cats") {
        auto m = longest_boundary_match("keep cats here", "cat");
        REQUIRE(m);
        auto [bq, bc] = score(*m, "cat");
        CHECK(bq == 0.75);
        CHECK(bc == 0.75);
    }
    SECTION("long cell value") {
        auto m = longest_boundary_match("flights from los angeles today",
                                        "Los Angeles International Airport");
        REQUIRE(m);
        std::string q = "flights from los angeles today";
        CHECK(q.substr(m->sq_begin, m->sq_end - m->sq_begin) == "los angeles");
        auto [bq, bc] = score(*m, "Los Angeles International Airport");
        CHECK(bq == 1.0);
        CHECK(bc == 3.0);
    }
}

TEST_CASE("select_anchors keeps all fields a phrase matches") {
    Schema s = fig2_schema();
    auto anchors = select_anchors("list houses and apartments available", s);
    REQUIRE(anchors.size() == 4);
    int field0 = 0, field2 = 0;
    for (const auto& a : anchors) {
        CHECK(a.beta_q >= 0.5);
        CHECK(a.beta_q <= 1.0);
        // the match covers at least theta_c of the cell
        CHECK(a.matched.size() >= 0.8 * a.cell_value.size());
        if (a.field == 0) ++field0;
        if (a.field == 2) ++field2;
        CHECK((a.cell_value == "House" || a.cell_value == "Apartment"));
    }
    CHECK(field0 == 2);
    CHECK(field2 == 2);
    // result ordering: field order, then question position
    CHECK(anchors[0].field == 0);
    CHECK(anchors[0].q_span == "houses");
    CHECK(anchors[1].q_span == "apartments");
}

TEST_CASE("number mentions are excluded by default") {
    Schema s;
    s.db_id = "nums";
    s.tables = {{"shoes", {0}}};
    s.fields = {{"price", 0, DataType::number, false, false, {"50"}}};
    auto anchors = select_anchors("price lower than 50", s);
    CHECK(anchors.empty());
    MatchConfig keep;
    keep.exclude_numbers = false;
    auto kept = select_anchors("price lower than 50", s, keep);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].cell_value == "50");
    CHECK(kept[0].q_span == "50");
}

TEST_CASE("empty picklists produce no anchors") {
    Schema s = fig2_schema();
    for (auto& f : s.fields) f.picklist.clear();
    CHECK(select_anchors("show the houses", s).empty());
}

TEST_CASE("per-field cap k is respected") {
    Schema s = fig2_schema();
    s.fields[0].picklist = {"House", "Houses", "Housed"};
    MatchConfig cfg;
    cfg.k = 1;
    auto anchors = select_anchors("are there houses", s, cfg);
    int per_field0 = 0;
    for (const auto& a : anchors) per_field0 += a.field == 0;
    CHECK(per_field0 <= 1);
}

TEST_CASE("raising theta_q never adds matches") {
    Schema s = fig2_schema();
    std::string q = "list houses and apartments available";
    MatchConfig lo, hi;
    lo.theta_q = 0.3;
    hi.theta_q = 0.9;
    auto a_lo = select_anchors(q, s, lo);
    auto a_hi = select_anchors(q, s, hi);
    CHECK(a_hi.size() <= a_lo.size());
    for (const auto& h : a_hi) {
        bool present = false;
        for (const auto& l : a_lo)
            present |= l.field == h.field && l.cell_value == h.cell_value &&
                       l.q_begin == h.q_begin;
        CHECK(present);
    }
}

TEST_CASE("matcher agrees with the brute-force oracle") {
    Schema s = fig2_schema();
    MatchConfig cfg;
    std::vector<std::string> questions = {
        "show the houses and apartments available",
        "how many shops are there",
        "list everything in the garage or the field",
        "what is the other type",
        "nothing matches here at all",
        "house",
        "the category page has houses",
    };
    for (const auto& q : questions) {
        INFO(q);
        auto got = select_anchors(q, s, cfg);
        auto want = testsupport::brute_select_anchors(q, s, cfg);
        CHECK(testsupport::anchors_equal(got, want));
        // determinism
        CHECK(testsupport::anchors_equal(got, select_anchors(q, s, cfg)));
    }
}

TEST_CASE("approximated precision and recall") {
    using V = std::vector<std::vector<std::string>>;
    SECTION("perfect") {
        auto [p, r] = approx_precision_recall(V{{"Russia"}}, V{{"Russia"}});
        CHECK(p == 100.0);
        CHECK(r == 100.0);
    }
    SECTION("over-matching halves precision") {
        auto [p, r] = approx_precision_recall(V{{"Russia", "House"}}, V{{"Russia"}});
        CHECK(p == 50.0);
        CHECK(r == 100.0);
    }
    SECTION("no anchors") {
        auto [p, r] = approx_precision_recall(V{{}}, V{{"Russia"}});
        CHECK(p == 0.0);
        CHECK(r == 0.0);
    }
    SECTION("length mismatch is an error") {
        CHECK_THROWS(approx_precision_recall(V{{}}, V{}));
    }
}
