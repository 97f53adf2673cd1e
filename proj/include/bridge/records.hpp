#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridge/anchor.hpp"
#include "bridge/schema.hpp"

namespace bridge {

// Raw dataset record (Spider-style example file line).
struct ExampleRecord {
    std::string db_id;
    std::string question;
    std::string gold_sql;  // empty when unlabeled
};

// Output of the preprocess stage: tokenized question plus anchor matches.
struct PreprocessedRecord {
    std::string db_id;
    std::string question;
    std::vector<std::string> question_tokens;
    std::vector<AnchorMatch> anchors;
    std::string gold_sql;
};

inline constexpr const char* kExamplesFormat = "bridge.examples.v1";
inline constexpr const char* kPreprocessedFormat = "bridge.preprocessed.v1";
inline constexpr const char* kPredictionsFormat = "bridge.predictions.v1";

namespace records_detail {

inline bool is_header(const nlohmann::json& j) { return j.contains("format"); }

}  // namespace records_detail

inline std::vector<ExampleRecord> read_examples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<ExampleRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (records_detail::is_header(j)) continue;
        ExampleRecord r;
        r.db_id = j.at("db_id");
        r.question = j.at("question");
        r.gold_sql = j.value("gold_sql", j.value("query", ""));
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_examples(const std::vector<ExampleRecord>& recs,
                           const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << nlohmann::json{{"format", kExamplesFormat}}.dump() << "\n";
    for (const auto& r : recs) {
        nlohmann::json j{{"db_id", r.db_id}, {"question", r.question}};
        if (!r.gold_sql.empty()) j["gold_sql"] = r.gold_sql;
        out << j.dump() << "\n";
    }
}

inline nlohmann::json anchor_to_json(const AnchorMatch& a, const Schema& s) {
    return {{"field", a.field},
            {"field_name", s.qualified_name(a.field)},
            {"value", a.cell_value},
            {"span", {a.q_begin, a.q_end}},
            {"q_span", a.q_span},
            {"matched", a.matched},
            {"beta_q", a.beta_q},
            {"beta_c", a.beta_c}};
}

inline AnchorMatch anchor_from_json(const nlohmann::json& j) {
    AnchorMatch a;
    a.field = j.at("field");
    a.cell_value = j.at("value");
    a.q_begin = j.at("span")[0];
    a.q_end = j.at("span")[1];
    a.q_span = j.at("q_span");
    a.matched = j.at("matched");
    a.beta_q = j.at("beta_q");
    a.beta_c = j.at("beta_c");
    return a;
}

inline void write_preprocessed(const std::vector<PreprocessedRecord>& recs,
                               const std::map<std::string, Schema>& schemas,
                               const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << nlohmann::json{{"format", kPreprocessedFormat}}.dump() << "\n";
    for (const auto& r : recs) {
        nlohmann::json anchors = nlohmann::json::array();
        for (const auto& a : r.anchors)
            anchors.push_back(anchor_to_json(a, schemas.at(r.db_id)));
        nlohmann::json j{{"db_id", r.db_id},
                         {"question", r.question},
                         {"question_tokens", r.question_tokens},
                         {"anchors", anchors}};
        if (!r.gold_sql.empty()) j["gold_sql"] = r.gold_sql;
        out << j.dump() << "\n";
    }
}

inline std::vector<PreprocessedRecord> read_preprocessed(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<PreprocessedRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (records_detail::is_header(j)) continue;
        PreprocessedRecord r;
        r.db_id = j.at("db_id");
        r.question = j.at("question");
        for (const auto& t : j.at("question_tokens"))
            r.question_tokens.push_back(t.get<std::string>());
        for (const auto& a : j.at("anchors"))
            r.anchors.push_back(anchor_from_json(a));
        r.gold_sql = j.value("gold_sql", "");
        out.push_back(std::move(r));
    }
    return out;
}

// Schemas of a tables.json, keyed by db_id, with picklists attached from
// per-database sidecar files (<dir>/<db>.values.json) or SQLite content
// files (<dir>/<db>/<db>.sqlite, the Spider layout).
inline std::map<std::string, Schema> load_schema_map(
    const std::string& tables_path, const std::string& values_dir = "",
    const std::string& db_dir = "") {
    std::map<std::string, Schema> out;
    for (auto& s : load_schemas(tables_path)) {
        PicklistSource src;
        if (!values_dir.empty())
            src.values_path = values_dir + "/" + s.db_id + ".values.json";
        if (!db_dir.empty())
            src.sqlite_path = db_dir + "/" + s.db_id + "/" + s.db_id + ".sqlite";
        attach_picklists(s, src);
        out.emplace(s.db_id, std::move(s));
    }
    return out;
}

}  // namespace bridge
