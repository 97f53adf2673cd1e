#pragma once

// Deterministic generator for the bundled toy corpus: six two-table schemas
// with picklists, templated question/SQL pairs (five training schemas, one
// held-out), and the anchor micro-corpus.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridge/records.hpp"
#include "bridge/rng.hpp"
#include "bridge/schema.hpp"
#include "bridge/sqlkit.hpp"
#include "bridge/text.hpp"

namespace bridge {

struct ToyCorpus {
    std::map<std::string, Schema> schemas;  // all six, picklists attached
    std::vector<ExampleRecord> train;       // five schemas
    std::vector<ExampleRecord> dev;         // held-out schema
    std::string heldout_db;
};

namespace toygen_detail {

struct FieldSpec {
    std::string name;
    DataType type;
    bool pk = false;
    std::vector<std::string> values;
};

struct TableSpec {
    std::string name;
    std::vector<FieldSpec> fields;
};

struct DbSpec {
    std::string db_id;
    std::vector<TableSpec> tables;
    // join: tables[1].fields[fk] references tables[0].fields[pk]
    int fk_field = 1;  // index within tables[1]
    int pk_field = 0;  // index within tables[0]
};

inline std::vector<DbSpec> toy_specs() {
    using F = FieldSpec;
    auto num = [](int lo, int hi, int stepv) {
        std::vector<std::string> v;
        for (int x = lo; x <= hi; x += stepv) v.push_back(std::to_string(x));
        return v;
    };
    std::vector<DbSpec> dbs;
    dbs.push_back(
        {"concert_hall",
         {{"stadium",
           {F{"stadium_id", DataType::number, true, {}},
            F{"venue_name", DataType::text, false,
              {"Harbor Arena", "Sunset Dome", "Civic Hall", "Grand Pavilion", "North Bowl"}},
            F{"city", DataType::text, false,
              {"Boston", "Chicago", "Denver", "Portland", "Atlanta"}},
            F{"capacity", DataType::number, false, num(3000, 9000, 1500)}}},
          {"concert",
           {F{"concert_id", DataType::number, true, {}},
            F{"stadium_id", DataType::number, false, {}},
            F{"theme", DataType::text, false,
              {"Rock", "Jazz", "Folk", "Hip Hop", "Blues"}},
            F{"attendance", DataType::number, false, num(200, 1000, 200)}}}},
         1,
         0});
    dbs.push_back(
        {"pet_home",
         {{"student",
           {F{"student_id", DataType::number, true, {}},
            F{"last_name", DataType::text, false,
              {"Smith", "Jones", "Lee", "Brown", "Garcia"}},
            F{"major", DataType::text, false,
              {"Biology", "History", "Physics", "Chemistry", "Economics"}},
            F{"age", DataType::number, false, num(18, 30, 3)}}},
          {"has_pet",
           {F{"pet_id", DataType::number, true, {}},
            F{"student_id", DataType::number, false, {}},
            F{"pet_type", DataType::text, false,
              {"Cat", "Dog", "Bird", "Hamster", "Snake"}},
            F{"weight", DataType::number, false, num(2, 20, 4)}}}},
         1,
         0});
    dbs.push_back(
        {"retail",
         {{"shop",
           {F{"shop_id", DataType::number, true, {}},
            F{"shop_name", DataType::text, false,
              {"Corner Mart", "Blue Bazaar", "Daily Depot", "Fresh Fare", "City Goods"}},
            F{"district", DataType::text, false,
              {"Riverside", "Downtown", "Hillcrest", "East Side", "Lakeview"}},
            F{"open_year", DataType::number, false, num(1990, 2014, 6)}}},
          {"employee",
           {F{"employee_id", DataType::number, true, {}},
            F{"shop_id", DataType::number, false, {}},
            F{"role", DataType::text, false,
              {"Cashier", "Manager", "Stocker", "Greeter", "Courier"}},
            F{"salary", DataType::number, false, num(20000, 60000, 10000)}}}},
         1,
         0});
    dbs.push_back(
        {"airline",
         {{"airport",
           {F{"airport_id", DataType::number, true, {}},
            F{"airport_name", DataType::text, false,
              {"Kestrel Field", "Harbor International", "Plateau Regional",
               "Meadow Strip", "Summit Hub"}},
            F{"country", DataType::text, false,
              {"France", "Brazil", "Canada", "Japan", "South Korea"}},
            F{"elevation", DataType::number, false, num(100, 2100, 500)}}},
          {"flight",
           {F{"flight_id", DataType::number, true, {}},
            F{"airport_id", DataType::number, false, {}},
            F{"airline", DataType::text, false,
              {"Lufthansa", "Delta", "Qantas", "Emirates", "Ryanair"}},
            F{"distance", DataType::number, false, num(400, 2400, 500)}}}},
         1,
         0});
    dbs.push_back(
        {"housing",
         {{"property",
           {F{"property_id", DataType::number, true, {}},
            F{"type_code", DataType::text, false,
              {"Apartment", "House", "Shop", "Field", "Other"}},
            F{"city", DataType::text, false,
              {"Madrid", "Lisbon", "Oslo", "Dublin", "Los Angeles"}},
            F{"price", DataType::number, false, num(100000, 500000, 100000)}}},
          {"viewing",
           {F{"viewing_id", DataType::number, true, {}},
            F{"property_id", DataType::number, false, {}},
            F{"visitor", DataType::text, false,
              {"Alice", "Bruno", "Carol", "Dmitri", "Elena"}},
            F{"rating", DataType::number, false, num(1, 9, 2)}}}},
         1,
         0});
    // held-out schema
    dbs.push_back(
        {"library",
         {{"author",
           {F{"author_id", DataType::number, true, {}},
            F{"author_name", DataType::text, false,
              {"Moravia", "Kadare", "Lem", "Mahfouz", "Bolano"}},
            F{"country", DataType::text, false,
              {"Italy", "Spain", "Norway", "Egypt", "Chile"}},
            F{"birth_year", DataType::number, false, num(1900, 1960, 15)}}},
          {"book",
           {F{"book_id", DataType::number, true, {}},
            F{"author_id", DataType::number, false, {}},
            F{"genre", DataType::text, false,
              {"Mystery", "Poetry", "Fantasy", "Science Fiction", "Romance"}},
            F{"pages", DataType::number, false, num(100, 600, 125)}}}},
         1,
         0});
    return dbs;
}

inline Schema schema_of(const DbSpec& spec) {
    Schema s;
    s.db_id = spec.db_id;
    for (size_t ti = 0; ti < spec.tables.size(); ++ti) {
        Table t;
        t.name = spec.tables[ti].name;
        for (const auto& f : spec.tables[ti].fields) {
            t.fields.push_back(static_cast<FieldId>(s.fields.size()));
            s.fields.push_back({f.name, static_cast<TableId>(ti), f.type, f.pk,
                                false, f.values});
        }
        s.tables.push_back(std::move(t));
    }
    FieldId pk = s.tables[0].fields[spec.pk_field];
    FieldId fk = s.tables[1].fields[spec.fk_field];
    s.foreign_keys.push_back({fk, pk});
    s.refresh_foreign_flags();
    return s;
}

inline nlohmann::json spider_json(const std::vector<DbSpec>& specs) {
    nlohmann::json all = nlohmann::json::array();
    for (const auto& spec : specs) {
        nlohmann::json j;
        j["db_id"] = spec.db_id;
        nlohmann::json tnames = nlohmann::json::array();
        nlohmann::json cols = nlohmann::json::array();
        nlohmann::json types = nlohmann::json::array();
        cols.push_back({-1, "*"});
        types.push_back("text");
        std::vector<int> pks;
        std::map<std::pair<int, int>, int> col_index;  // (table, field) -> idx
        int idx = 1;
        for (size_t ti = 0; ti < spec.tables.size(); ++ti) {
            tnames.push_back(spec.tables[ti].name);
            for (size_t fi = 0; fi < spec.tables[ti].fields.size(); ++fi) {
                const auto& f = spec.tables[ti].fields[fi];
                cols.push_back({static_cast<int>(ti), f.name});
                types.push_back(data_type_name(f.type));
                if (f.pk) pks.push_back(idx);
                col_index[{static_cast<int>(ti), static_cast<int>(fi)}] = idx;
                ++idx;
            }
        }
        j["table_names_original"] = tnames;
        j["column_names_original"] = cols;
        j["column_types"] = types;
        j["primary_keys"] = pks;
        j["foreign_keys"] = nlohmann::json::array();
        j["foreign_keys"].push_back(
            {col_index[{1, spec.fk_field}], col_index[{0, spec.pk_field}]});
        all.push_back(std::move(j));
    }
    return all;
}

struct Slot {
    std::string question;
    std::string sql;
};

// Candidate (question, SQL) pairs for one schema, every value mentioned in
// the question verbatim (lowercased) so the pointer can copy it.
inline std::vector<Slot> candidates(const Schema& s) {
    std::vector<Slot> out;
    auto words = [](const std::string& name) {
        return join(split_name_words(name), " ");
    };
    auto add = [&](std::string q, std::string sql) {
        out.push_back({std::move(q), std::move(sql)});
    };
    for (TableId ti = 0; ti < static_cast<TableId>(s.tables.size()); ++ti) {
        const Table& t = s.tables[ti];
        std::string tw = words(t.name);
        add("how many " + tw + " rows are there ?",
            "SELECT COUNT(*) FROM " + t.name);
        std::vector<FieldId> text_fields, num_fields, all_fields;
        for (FieldId f : t.fields) {
            all_fields.push_back(f);
            if (s.fields[f].type == DataType::text && !s.fields[f].picklist.empty())
                text_fields.push_back(f);
            if (s.fields[f].type == DataType::number && !s.fields[f].is_primary_key &&
                !s.fields[f].in_foreign_pair && !s.fields[f].picklist.empty())
                num_fields.push_back(f);
        }
        for (FieldId f : all_fields) {
            if (s.fields[f].is_primary_key || s.fields[f].in_foreign_pair) continue;
            std::string fw = words(s.fields[f].name);
            add("list the " + fw + " of all " + tw + " rows",
                "SELECT " + s.fields[f].name + " FROM " + t.name);
            add("list the distinct " + fw + " of " + tw + " rows",
                "SELECT DISTINCT " + s.fields[f].name + " FROM " + t.name);
            add("count the distinct " + fw + " values of " + tw + " rows",
                "SELECT COUNT(DISTINCT " + s.fields[f].name + ") FROM " + t.name);
            add("for each " + fw + " of " + tw + " count the rows",
                "SELECT " + s.fields[f].name + ", COUNT(*) FROM " + t.name +
                    " GROUP BY " + s.fields[f].name);
        }
        for (FieldId f : text_fields) {
            std::string fw = words(s.fields[f].name);
            for (const auto& val : s.fields[f].picklist) {
                std::string v = to_lower(val);
                add("how many " + tw + " rows have " + fw + " equal to " + v + " ?",
                    "SELECT COUNT(*) FROM " + t.name + " WHERE " +
                        s.fields[f].name + " = '" + v + "'");
            }
            // pairwise OR over the first two values
            if (s.fields[f].picklist.size() >= 2) {
                std::string v1 = to_lower(s.fields[f].picklist[0]);
                std::string v2 = to_lower(s.fields[f].picklist[1]);
                add("how many " + tw + " rows have " + fw + " " + v1 + " or " +
                        fw + " " + v2 + " ?",
                    "SELECT COUNT(*) FROM " + t.name + " WHERE " +
                        s.fields[f].name + " = '" + v1 + "' OR " +
                        s.fields[f].name + " = '" + v2 + "'");
            }
            // projection under a value filter, for every other plain field
            for (FieldId g : all_fields) {
                if (g == f || s.fields[g].is_primary_key ||
                    s.fields[g].in_foreign_pair)
                    continue;
                std::string gw = words(s.fields[g].name);
                const auto& vals = s.fields[f].picklist;
                std::string v = to_lower(vals[(f + g) % vals.size()]);
                add("what is the " + gw + " of the " + tw + " row with " + fw +
                        " " + v + " ?",
                    "SELECT " + s.fields[g].name + " FROM " + t.name + " WHERE " +
                        s.fields[f].name + " = '" + v + "'");
            }
        }
        for (FieldId f : num_fields) {
            std::string fw = words(s.fields[f].name);
            add("what is the average " + fw + " of " + tw + " rows ?",
                "SELECT AVG(" + s.fields[f].name + ") FROM " + t.name);
            add("what is the largest " + fw + " of " + tw + " rows ?",
                "SELECT MAX(" + s.fields[f].name + ") FROM " + t.name);
            add("what is the smallest " + fw + " of " + tw + " rows ?",
                "SELECT MIN(" + s.fields[f].name + ") FROM " + t.name);
            const auto& vals = s.fields[f].picklist;
            std::string v = vals[vals.size() / 2];
            add("how many " + tw + " rows have " + fw + " larger than " + v + " ?",
                "SELECT COUNT(*) FROM " + t.name + " WHERE " + s.fields[f].name +
                    " > " + v);
            add("how many " + tw + " rows have " + fw + " smaller than " + v + " ?",
                "SELECT COUNT(*) FROM " + t.name + " WHERE " + s.fields[f].name +
                    " < " + v);
            for (FieldId g : all_fields) {
                if (g == f || s.fields[g].is_primary_key ||
                    s.fields[g].in_foreign_pair)
                    continue;
                std::string gw = words(s.fields[g].name);
                add("list the " + gw + " of " + tw + " rows ordered by " + fw,
                    "SELECT " + s.fields[g].name + " FROM " + t.name +
                        " ORDER BY " + s.fields[f].name);
                add("which " + tw + " row has the largest " + fw +
                        " ? give the " + gw,
                    "SELECT " + s.fields[g].name + " FROM " + t.name +
                        " ORDER BY " + s.fields[f].name + " DESC LIMIT 1");
            }
        }
    }
    // joins through the foreign key
    if (!s.foreign_keys.empty()) {
        const ForeignKeyPair& fk = s.foreign_keys[0];
        const Field& child = s.fields[fk.from];
        const Field& parent = s.fields[fk.to];
        const Table& ct = s.tables[child.table];
        const Table& pt = s.tables[parent.table];
        std::string join = " FROM " + ct.name + " JOIN " + pt.name + " ON " +
                           ct.name + "." + child.name + " = " + pt.name + "." +
                           parent.name;
        for (FieldId f : pt.fields) {
            if (s.fields[f].type != DataType::text || s.fields[f].picklist.empty())
                continue;
            std::string fw = words(s.fields[f].name);
            for (FieldId g : ct.fields) {
                if (s.fields[g].is_primary_key || s.fields[g].in_foreign_pair)
                    continue;
                std::string gw = words(s.fields[g].name);
                const auto& vals = s.fields[f].picklist;
                std::string v = to_lower(vals[(f + g) % vals.size()]);
                add("show the " + gw + " of each " + words(ct.name) + " whose " +
                        words(pt.name) + " has " + fw + " " + v,
                    "SELECT " + ct.name + "." + s.fields[g].name + join +
                        " WHERE " + pt.name + "." + s.fields[f].name + " = '" +
                        v + "'");
            }
        }
        // count children per parent attribute
        for (FieldId f : pt.fields) {
            if (s.fields[f].type != DataType::text || s.fields[f].picklist.empty())
                continue;
            add("for each " + words(s.fields[f].name) + " count the " +
                    words(ct.name) + " rows",
                "SELECT " + pt.name + "." + s.fields[f].name + ", COUNT(*)" +
                    join + " GROUP BY " + pt.name + "." + s.fields[f].name);
        }
    }
    return out;
}

}  // namespace toygen_detail

inline ToyCorpus make_toy_corpus(uint64_t seed = 13, size_t train_per_db = 60,
                                 size_t dev_count = 50) {
    using namespace toygen_detail;
    ToyCorpus corpus;
    auto specs = toy_specs();
    corpus.heldout_db = specs.back().db_id;
    Rng rng(seed);
    for (const auto& spec : specs) {
        Schema s = schema_of(spec);
        auto pool = candidates(s);
        std::vector<size_t> idx(pool.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        bool heldout = spec.db_id == corpus.heldout_db;
        size_t want = heldout ? dev_count : train_per_db;
        if (want > pool.size()) want = pool.size();
        for (size_t k = 0; k < want; ++k) {
            const Slot& slot = pool[idx[k]];
            ExampleRecord r{spec.db_id, slot.question, slot.sql};
            (heldout ? corpus.dev : corpus.train).push_back(std::move(r));
        }
        corpus.schemas.emplace(spec.db_id, std::move(s));
    }
    return corpus;
}

// Textual values of a gold query (for the anchor micro-corpus).
inline std::vector<std::string> gold_text_values(const Query& q) {
    std::vector<std::string> out;
    auto walk_conds = [&](const std::optional<CondList>& conds, auto&& self) -> void {
        if (!conds) return;
        for (const auto& c : conds->conds) {
            if (c.rhs.kind == SqlValue::text) out.push_back(c.rhs.surface);
            if (c.rhs.kind == SqlValue::subquery) {
                if (c.rhs.sub->core.where)
                    self(c.rhs.sub->core.where, self);
                if (c.rhs.sub->core.having)
                    self(c.rhs.sub->core.having, self);
            }
            if (c.op == CmpOp::between && c.rhs2.kind == SqlValue::text)
                out.push_back(c.rhs2.surface);
        }
    };
    walk_conds(q.core.where, walk_conds);
    walk_conds(q.core.having, walk_conds);
    if (q.set_op != SetOp::none) {
        auto rest = gold_text_values(*q.rhs);
        out.insert(out.end(), rest.begin(), rest.end());
    }
    return out;
}

inline void write_toy_corpus(const ToyCorpus& corpus, const std::string& dir,
                             size_t micro_count = 50) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::create_directories(dir + "/values");
    {
        std::ofstream out(dir + "/tables.json");
        out << toygen_detail::spider_json(toygen_detail::toy_specs()).dump(1);
    }
    for (const auto& [db_id, s] : corpus.schemas) {
        nlohmann::json vals;
        for (TableId t = 0; t < static_cast<TableId>(s.tables.size()); ++t)
            for (FieldId f : s.tables[t].fields)
                if (!s.fields[f].picklist.empty())
                    vals[s.tables[t].name + "." + s.fields[f].name] =
                        s.fields[f].picklist;
        std::ofstream out(dir + "/values/" + db_id + ".values.json");
        out << vals.dump(1);
    }
    write_examples(corpus.train, dir + "/train.jsonl");
    write_examples(corpus.dev, dir + "/dev.jsonl");

    // anchor micro-corpus: mixed examples with their gold textual values
    std::ofstream micro(dir + "/anchor_micro.jsonl");
    micro << nlohmann::json{{"format", "bridge.anchor_micro.v1"}}.dump() << "\n";
    size_t written = 0;
    for (size_t i = 0; written < micro_count; ++i) {
        const auto& src = i % 2 == 0 ? corpus.train : corpus.dev;
        size_t at = (i * 7919) % src.size();
        const ExampleRecord& r = src[at];
        const Schema& s = corpus.schemas.at(r.db_id);
        auto values = gold_text_values(parse(r.gold_sql, s));
        micro << nlohmann::json{{"db_id", r.db_id},
                                {"question", r.question},
                                {"gold_values", values}}
                     .dump()
              << "\n";
        ++written;
    }
}

}  // namespace bridge
