#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bridge/schema.hpp"

namespace testsupport {

inline std::string data_dir() {
#ifdef BRIDGE_DATA_DIR
    return BRIDGE_DATA_DIR;
#else
    return "data";
#endif
}

struct CorpusQuery {
    std::string db_id;
    std::string sql;
};

inline std::vector<CorpusQuery> load_corpus_queries() {
    std::ifstream in(data_dir() + "/corpus/queries.txt");
    if (!in) throw std::runtime_error("missing corpus/queries.txt");
    std::vector<CorpusQuery> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        out.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return out;
}

struct ExecPair {
    std::string db_id, written, exec;
};

inline std::vector<ExecPair> load_exec_pairs() {
    std::ifstream in(data_dir() + "/corpus/exec_pairs.txt");
    if (!in) throw std::runtime_error("missing corpus/exec_pairs.txt");
    std::vector<ExecPair> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        ExecPair p;
        std::getline(ss, p.db_id, '\t');
        std::getline(ss, p.written, '\t');
        std::getline(ss, p.exec, '\t');
        out.push_back(std::move(p));
    }
    return out;
}

// Schemas from the bundled corpus, loaded once.
inline const bridge::Schema& corpus_schema(const std::string& db_id) {
    static std::map<std::string, bridge::Schema> cache = [] {
        std::map<std::string, bridge::Schema> m;
        for (auto& s : bridge::load_schemas(data_dir() + "/corpus/tables.json"))
            m.emplace(s.db_id, std::move(s));
        return m;
    }();
    return cache.at(db_id);
}

}  // namespace testsupport
