#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <sqlite3.h>

#include <json.hpp>

#include "bridge/text.hpp"

namespace bridge {

using TableId = int;
using FieldId = int;

enum class DataType { number, text, time, boolean, others };

inline DataType data_type_from_string(std::string_view s) {
    if (iequals(s, "number")) return DataType::number;
    if (iequals(s, "text")) return DataType::text;
    if (iequals(s, "time")) return DataType::time;
    if (iequals(s, "boolean")) return DataType::boolean;
    return DataType::others;
}

inline const char* data_type_name(DataType t) {
    switch (t) {
        case DataType::number: return "number";
        case DataType::text: return "text";
        case DataType::time: return "time";
        case DataType::boolean: return "boolean";
        default: return "others";
    }
}

struct Field {
    std::string name;
    TableId table = -1;
    DataType type = DataType::others;
    bool is_primary_key = false;
    bool in_foreign_pair = false;
    std::vector<std::string> picklist;  // distinct values, source casing
};

struct Table {
    std::string name;
    std::vector<FieldId> fields;
};

struct ForeignKeyPair {
    FieldId from = -1;
    FieldId to = -1;
    bool operator==(const ForeignKeyPair&) const = default;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Schema {
    std::string db_id;
    std::vector<Table> tables;
    std::vector<Field> fields;
    std::vector<ForeignKeyPair> foreign_keys;

    const Table& table(TableId t) const {
        if (t < 0 || t >= static_cast<int>(tables.size()))
            throw SchemaError(db_id + ": invalid table id " + std::to_string(t));
        return tables[t];
    }
    const Field& field(FieldId f) const {
        if (f < 0 || f >= static_cast<int>(fields.size()))
            throw SchemaError(db_id + ": invalid field id " + std::to_string(f));
        return fields[f];
    }
    std::string qualified_name(FieldId f) const {
        return tables[field(f).table].name + "." + field(f).name;
    }

    std::optional<TableId> find_table(std::string_view name) const {
        for (size_t i = 0; i < tables.size(); ++i)
            if (iequals(tables[i].name, name)) return static_cast<TableId>(i);
        return std::nullopt;
    }
    std::optional<FieldId> find_field(TableId t, std::string_view name) const {
        for (FieldId f : table(t).fields)
            if (iequals(fields[f].name, name)) return f;
        return std::nullopt;
    }

    bool has_pair(FieldId a, FieldId b) const {
        for (const auto& fk : foreign_keys)
            if ((fk.from == a && fk.to == b) || (fk.from == b && fk.to == a))
                return true;
        return false;
    }

    void refresh_foreign_flags() {
        for (auto& f : fields) f.in_foreign_pair = false;
        for (const auto& fk : foreign_keys) {
            fields[fk.from].in_foreign_pair = true;
            fields[fk.to].in_foreign_pair = true;
        }
    }
};

// The distinct value set of a field.
inline const std::vector<std::string>& picklist(const Schema& s, FieldId f) {
    return s.field(f).picklist;
}

// Foreign-key repair heuristic: two fields of different tables with identical
// names where at least one is a primary key form a pair, except for the
// common-name exclusion set. Idempotent; never removes existing pairs.
inline Schema augment_foreign_keys(
    const Schema& s,
    const std::set<std::string>& exclude = {"name", "id", "code"}) {
    Schema out = s;
    auto excluded = [&](const std::string& name) {
        return exclude.count(to_lower(trim(name))) > 0;
    };
    for (FieldId a = 0; a < static_cast<int>(s.fields.size()); ++a) {
        for (FieldId b = a + 1; b < static_cast<int>(s.fields.size()); ++b) {
            const Field& fa = s.fields[a];
            const Field& fb = s.fields[b];
            if (fa.table == fb.table) continue;
            if (!iequals(trim(fa.name), trim(fb.name))) continue;
            if (!fa.is_primary_key && !fb.is_primary_key) continue;
            if (excluded(fa.name)) continue;
            if (out.has_pair(a, b)) continue;
            // orient towards the primary key, matching Spider's convention
            if (fb.is_primary_key)
                out.foreign_keys.push_back({a, b});
            else
                out.foreign_keys.push_back({b, a});
        }
    }
    out.refresh_foreign_flags();
    return out;
}

// ---------------------------------------------------------------------------
// Loading: Spider tables.json layout, values sidecar, SQLite content files.

struct PicklistSource {
    // sidecar JSON mapping "table.column" -> [values]; wins over the db file
    std::string values_path;
    std::string sqlite_path;
};

namespace detail {

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return j;
}

inline Schema schema_from_json(const nlohmann::json& j) {
    Schema s;
    try {
        s.db_id = j.at("db_id").get<std::string>();
        const auto& tnames = j.at("table_names_original");
        for (const auto& t : tnames) {
            Table tab;
            tab.name = t.get<std::string>();
            s.tables.push_back(std::move(tab));
        }
        const auto& cols = j.at("column_names_original");
        const auto& types = j.at("column_types");
        if (cols.size() != types.size())
            throw SchemaError(s.db_id + ": column_names/column_types size mismatch");
        // Spider reserves index 0 for the [-1, "*"] pseudo column.
        std::vector<int> col_remap(cols.size(), -1);
        for (size_t i = 0; i < cols.size(); ++i) {
            int ti = cols[i].at(0).get<int>();
            std::string name = cols[i].at(1).get<std::string>();
            if (ti < 0) continue;  // "*"
            if (ti >= static_cast<int>(s.tables.size()))
                throw SchemaError(s.db_id + ": column " + name +
                                  " references missing table index " +
                                  std::to_string(ti));
            Field f;
            f.name = name;
            f.table = ti;
            f.type = data_type_from_string(types[i].get<std::string>());
            col_remap[i] = static_cast<int>(s.fields.size());
            s.tables[ti].fields.push_back(static_cast<FieldId>(s.fields.size()));
            s.fields.push_back(std::move(f));
        }
        if (j.contains("primary_keys")) {
            for (const auto& pk : j.at("primary_keys")) {
                int raw = pk.get<int>();
                if (raw < 0 || raw >= static_cast<int>(col_remap.size()) ||
                    col_remap[raw] < 0)
                    throw SchemaError(s.db_id + ": dangling key reference (primary key " +
                                      std::to_string(raw) + ")");
                s.fields[col_remap[raw]].is_primary_key = true;
            }
        }
        if (j.contains("foreign_keys")) {
            for (const auto& fk : j.at("foreign_keys")) {
                int a = fk.at(0).get<int>();
                int b = fk.at(1).get<int>();
                auto remap = [&](int raw) {
                    if (raw < 0 || raw >= static_cast<int>(col_remap.size()) ||
                        col_remap[raw] < 0)
                        throw SchemaError(s.db_id + ": dangling key reference (foreign key " +
                                          std::to_string(raw) + ")");
                    return col_remap[raw];
                };
                ForeignKeyPair pair{remap(a), remap(b)};
                if (pair.from == pair.to ||
                    s.fields[pair.from].table == s.fields[pair.to].table)
                    throw SchemaError(s.db_id + ": foreign key endpoints must lie in different tables");
                s.foreign_keys.push_back(pair);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("malformed schema document: " + std::string(e.what()));
    }
    for (const auto& t : s.tables)
        if (t.fields.empty())
            throw SchemaError(s.db_id + ": table " + t.name + " has no fields");
    s.refresh_foreign_flags();
    return s;
}

inline void dedup_preserving_order(std::vector<std::string>& vals) {
    std::unordered_set<std::string> seen;
    std::vector<std::string> out;
    out.reserve(vals.size());
    for (auto& v : vals)
        if (seen.insert(v).second) out.push_back(std::move(v));
    vals = std::move(out);
}

inline void load_picklists_from_values_file(Schema& s, const std::string& path) {
    nlohmann::json j = read_json_file(path);
    for (TableId t = 0; t < static_cast<int>(s.tables.size()); ++t) {
        for (FieldId f : s.tables[t].fields) {
            std::string key = s.tables[t].name + "." + s.fields[f].name;
            auto it = j.find(key);
            if (it == j.end()) {
                // tolerate lowercase keys
                it = j.find(to_lower(key));
                if (it == j.end()) continue;
            }
            std::vector<std::string> vals;
            for (const auto& v : *it) {
                if (v.is_string())
                    vals.push_back(v.get<std::string>());
                else if (v.is_number_integer())
                    vals.push_back(std::to_string(v.get<long long>()));
                else if (v.is_number())
                    vals.push_back(nlohmann::json(v.get<double>()).dump());
                else if (!v.is_null())
                    vals.push_back(v.dump());
            }
            dedup_preserving_order(vals);
            s.fields[f].picklist = std::move(vals);
        }
    }
}

inline void load_picklists_from_sqlite(Schema& s, const std::string& path) {
    sqlite3* db = nullptr;
    if (sqlite3_open_v2(path.c_str(), &db, SQLITE_OPEN_READONLY, nullptr) != SQLITE_OK) {
        std::string msg = db ? sqlite3_errmsg(db) : "open failed";
        sqlite3_close(db);
        throw SchemaError(path + ": " + msg);
    }
    for (TableId t = 0; t < static_cast<int>(s.tables.size()); ++t) {
        for (FieldId f : s.tables[t].fields) {
            std::string sql = "SELECT DISTINCT \"" + s.fields[f].name +
                              "\" FROM \"" + s.tables[t].name + "\"";
            sqlite3_stmt* stmt = nullptr;
            if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
                sqlite3_finalize(stmt);
                continue;  // table/column absent from the content file
            }
            std::vector<std::string> vals;
            while (sqlite3_step(stmt) == SQLITE_ROW) {
                if (sqlite3_column_type(stmt, 0) == SQLITE_NULL) continue;
                const unsigned char* txt = sqlite3_column_text(stmt, 0);
                if (txt) vals.emplace_back(reinterpret_cast<const char*>(txt));
            }
            sqlite3_finalize(stmt);
            dedup_preserving_order(vals);
            s.fields[f].picklist = std::move(vals);
        }
    }
    sqlite3_close(db);
}

}  // namespace detail

inline void attach_picklists(Schema& s, const PicklistSource& src) {
    if (!src.values_path.empty()) {
        std::ifstream probe(src.values_path);
        if (probe) {
            detail::load_picklists_from_values_file(s, src.values_path);
            return;
        }
    }
    if (!src.sqlite_path.empty()) {
        std::ifstream probe(src.sqlite_path);
        if (probe) detail::load_picklists_from_sqlite(s, src.sqlite_path);
    }
}

// tables.json may hold one schema object or a Spider-style array of them.
inline std::vector<Schema> load_schemas(const std::string& path) {
    nlohmann::json j = detail::read_json_file(path);
    std::vector<Schema> out;
    if (j.is_array()) {
        for (const auto& entry : j) out.push_back(detail::schema_from_json(entry));
    } else {
        out.push_back(detail::schema_from_json(j));
    }
    return out;
}

inline Schema load_schema(const std::string& path, const std::string& db_id = "",
                          const PicklistSource& src = {}) {
    auto all = load_schemas(path);
    for (auto& s : all) {
        if (db_id.empty() || s.db_id == db_id) {
            attach_picklists(s, src);
            return s;
        }
    }
    throw SchemaError(path + ": no schema with db_id '" + db_id + "'");
}

}  // namespace bridge
