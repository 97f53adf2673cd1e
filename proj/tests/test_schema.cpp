#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include <sqlite3.h>

#include "bridge/schema.hpp"
#include "support/helpers.hpp"

using namespace bridge;

TEST_CASE("spider format schema loads with keys resolved") {
    const Schema& s = testsupport::corpus_schema("poker_player");
    REQUIRE(s.tables.size() == 2);
    REQUIRE(s.fields.size() == 8);
    REQUIRE(s.foreign_keys.size() == 1);
    auto from = s.foreign_keys[0].from;
    auto to = s.foreign_keys[0].to;
    CHECK(s.qualified_name(from) == "Poker_Player.People_ID");
    CHECK(s.qualified_name(to) == "People.People_ID");
    CHECK(s.fields[to].is_primary_key);
    CHECK(s.fields[from].in_foreign_pair);
    CHECK(s.fields[to].in_foreign_pair);
}

TEST_CASE("single table without keys") {
    auto j = R"([{"db_id":"mini","table_names_original":["t"],
        "column_names_original":[[-1,"*"],[0,"x"]],
        "column_types":["text","number"]}])";
    std::string path = "mini_tables_test.json";
    {
        std::ofstream out(path);
        out << j;
    }
    Schema s = load_schema(path);
    std::remove(path.c_str());
    CHECK(s.tables.size() == 1);
    CHECK(s.fields.size() == 1);
    CHECK(s.foreign_keys.empty());
}

TEST_CASE("dangling key reference is reported") {
    auto j = R"([{"db_id":"bad","table_names_original":["t","u"],
        "column_names_original":[[-1,"*"],[0,"x"],[1,"y"]],
        "column_types":["text","number","number"],
        "primary_keys":[1],"foreign_keys":[[2,9]]}])";
    std::string path = "bad_tables_test.json";
    {
        std::ofstream out(path);
        out << j;
    }
    REQUIRE_THROWS_WITH(load_schema(path), Catch::Matchers::ContainsSubstring("dangling"));
    std::remove(path.c_str());
}

static Schema two_table_schema() {
    Schema s;
    s.db_id = "aug";
    s.tables = {{"A", {0, 1}}, {"B", {2, 3}}};
    s.fields.resize(4);
    s.fields[0] = {"song_id", 0, DataType::number, true, false, {}};
    s.fields[1] = {"title", 0, DataType::text, false, false, {}};
    s.fields[2] = {"song_id", 1, DataType::number, false, false, {}};
    s.fields[3] = {"length", 1, DataType::number, false, false, {}};
    return s;
}

TEST_CASE("foreign key augmentation derives same-name pairs") {
    Schema s = two_table_schema();
    Schema out = augment_foreign_keys(s);
    REQUIRE(out.foreign_keys.size() == 1);
    CHECK(out.foreign_keys[0].from == 2);
    CHECK(out.foreign_keys[0].to == 0);
    CHECK(out.fields[2].in_foreign_pair);

    SECTION("idempotent") {
        Schema again = augment_foreign_keys(out);
        CHECK(again.foreign_keys == out.foreign_keys);
    }
    SECTION("existing pairs survive") {
        s.foreign_keys.push_back({3, 0});
        s.refresh_foreign_flags();
        Schema with = augment_foreign_keys(s);
        CHECK(with.has_pair(3, 0));
        CHECK(with.has_pair(2, 0));
    }
}

TEST_CASE("excluded common names never pair") {
    Schema s = two_table_schema();
    s.fields[0].name = "id";
    s.fields[2].name = "ID";
    Schema out = augment_foreign_keys(s);
    CHECK(out.foreign_keys.empty());
}

TEST_CASE("no same-named fields leaves keys unchanged") {
    Schema s = two_table_schema();
    s.fields[2].name = "track_id";
    Schema out = augment_foreign_keys(s);
    CHECK(out.foreign_keys.empty());
}

TEST_CASE("derived pairs satisfy the rule predicate exactly") {
    // brute force over all field pairs of a corpus schema
    Schema s = testsupport::corpus_schema("voter_club");
    Schema out = augment_foreign_keys(s);
    std::set<std::string> excl = {"name", "id", "code"};
    for (FieldId a = 0; a < (FieldId)s.fields.size(); ++a) {
        for (FieldId b = 0; b < (FieldId)s.fields.size(); ++b) {
            if (a >= b) continue;
            bool rule = s.fields[a].table != s.fields[b].table &&
                        iequals(s.fields[a].name, s.fields[b].name) &&
                        (s.fields[a].is_primary_key || s.fields[b].is_primary_key) &&
                        !excl.count(to_lower(trim(s.fields[a].name)));
            bool present = out.has_pair(a, b);
            bool pre_existing = s.has_pair(a, b);
            if (rule) CHECK(present);
            if (!rule && !pre_existing) CHECK(!present);
        }
    }
    // STUDENT.StuID / VOTING_RECORD.StuID already paired; no duplicates added
    size_t count = 0;
    for (const auto& fk : out.foreign_keys) {
        auto f = out.qualified_name(fk.from), t = out.qualified_name(fk.to);
        if ((f == "VOTING_RECORD.StuID" && t == "STUDENT.StuID") ||
            (f == "STUDENT.StuID" && t == "VOTING_RECORD.StuID"))
            ++count;
    }
    CHECK(count == 1);
}

TEST_CASE("picklists load from sidecar values file") {
    std::string vpath = "values_test.json";
    {
        std::ofstream out(vpath);
        out << R"({"Properties.Property_Type_Code":
                   ["Apartment","Field","House","Shop","Other","House"]})";
    }
    Schema s = load_schema(testsupport::data_dir() + "/corpus/tables.json",
                           "properties", {.values_path = vpath});
    std::remove(vpath.c_str());
    auto f = s.find_field(*s.find_table("Properties"), "Property_Type_Code");
    REQUIRE(f);
    CHECK(picklist(s, *f) ==
          std::vector<std::string>{"Apartment", "Field", "House", "Shop", "Other"});
    // fields with no content stay empty
    auto price = s.find_field(*s.find_table("Properties"), "Price");
    CHECK(picklist(s, *price).empty());
}

TEST_CASE("picklists load from a sqlite content file") {
    std::string dbpath = "picklist_test.sqlite";
    std::remove(dbpath.c_str());
    sqlite3* db = nullptr;
    REQUIRE(sqlite3_open(dbpath.c_str(), &db) == SQLITE_OK);
    const char* ddl =
        "CREATE TABLE Properties (Property_ID int, Property_Type_Code text,"
        " Date_on_Market text, Price real);"
        "INSERT INTO Properties VALUES (1,'House','2010-01-01',500000);"
        "INSERT INTO Properties VALUES (2,'Apartment','2011-02-02',300000);"
        "INSERT INTO Properties VALUES (3,'House','2012-03-03',450000);";
    REQUIRE(sqlite3_exec(db, ddl, nullptr, nullptr, nullptr) == SQLITE_OK);
    sqlite3_close(db);

    Schema s = load_schema(testsupport::data_dir() + "/corpus/tables.json",
                           "properties", {.sqlite_path = dbpath});
    auto tc = s.find_field(*s.find_table("Properties"), "Property_Type_Code");
    CHECK(picklist(s, *tc) == std::vector<std::string>{"House", "Apartment"});
    // numeric columns come back as text renderings
    auto price = s.find_field(*s.find_table("Properties"), "Price");
    REQUIRE(picklist(s, *price).size() == 3);
    CHECK(picklist(s, *price)[0] == "500000.0");
    std::remove(dbpath.c_str());
}
