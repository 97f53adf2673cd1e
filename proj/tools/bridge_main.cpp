// bridge: value-aware cross-database text-to-SQL toolchain.
//
// Subcommands: preprocess, match-anchors, normalize-sql, check, train,
// decode, eval, gen-toy. Exit codes: 0 ok, 1 runtime error, 2 usage.

#include <atomic>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "bridge/decoder.hpp"
#include "bridge/evalkit.hpp"
#include "bridge/guard.hpp"
#include "bridge/records.hpp"
#include "bridge/toygen.hpp"
#include "bridge/trainer.hpp"

using namespace bridge;

namespace {

struct SchemaArgs {
    std::string tables, values_dir, db_dir;
    void attach(CLI::App* cmd, bool required = true) {
        auto* t = cmd->add_option("--tables", tables, "schema file (tables.json)");
        if (required) t->required();
        cmd->add_option("--values-dir", values_dir,
                        "directory of <db>.values.json picklist files");
        cmd->add_option("--db-dir", db_dir,
                        "directory of <db>/<db>.sqlite content files");
    }
    std::map<std::string, Schema> load() const {
        return load_schema_map(tables, values_dir, db_dir);
    }
};

struct MatchArgs {
    int k = 2;
    double theta_q = 0.5, theta_c = 0.8;
    bool keep_numbers = false, theta_c_ceiling = false;
    void attach(CLI::App* cmd) {
        cmd->add_option("--k", k, "max matches per field")->capture_default_str();
        cmd->add_option("--theta-q", theta_q, "question match threshold")
            ->capture_default_str();
        cmd->add_option("--theta-c", theta_c, "cell match threshold")
            ->capture_default_str();
        cmd->add_flag("--keep-numbers", keep_numbers,
                      "do not exclude numeric matches");
        cmd->add_flag("--theta-c-ceiling", theta_c_ceiling,
                      "treat theta-c as an upper bound instead of a lower bound");
    }
    MatchConfig config() const {
        return {k, theta_q, theta_c, !keep_numbers, theta_c_ceiling};
    }
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::vector<std::string> lines;
    std::string line;
    if (path.empty() || path == "-") {
        while (std::getline(std::cin, line)) lines.push_back(line);
    } else {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open " + path);
        while (std::getline(in, line)) lines.push_back(line);
    }
    return lines;
}

// Deterministic example-level parallelism: results land by index.
template <typename Fn>
void parallel_for(size_t count, int jobs, Fn&& fn) {
    if (jobs <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

int cmd_gen_toy(const std::string& out_dir, uint64_t seed) {
    ToyCorpus corpus = make_toy_corpus(seed);
    write_toy_corpus(corpus, out_dir);
    std::cout << "wrote " << corpus.train.size() << " train / " << corpus.dev.size()
              << " dev examples for " << corpus.schemas.size() << " schemas to "
              << out_dir << "\n";
    return 0;
}

int cmd_match_anchors(const SchemaArgs& sa, const MatchArgs& ma,
                      const std::string& examples, const std::string& out_path) {
    auto schemas = sa.load();
    auto recs = read_examples(examples);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << nlohmann::json{{"format", "bridge.anchors.v1"}}.dump() << "\n";
    MatchConfig cfg = ma.config();
    for (const auto& r : recs) {
        const Schema& s = schemas.at(r.db_id);
        nlohmann::json anchors = nlohmann::json::array();
        for (const auto& a : select_anchors(r.question, s, cfg))
            anchors.push_back(anchor_to_json(a, s));
        out << nlohmann::json{{"db_id", r.db_id},
                              {"question", r.question},
                              {"anchors", anchors}}
                   .dump()
            << "\n";
    }
    return 0;
}

int cmd_preprocess(const SchemaArgs& sa, const MatchArgs& ma,
                   const std::string& examples, const std::string& out_path,
                   bool no_bridging) {
    auto schemas = sa.load();
    auto recs = read_examples(examples);
    std::vector<PreprocessedRecord> pre;
    MatchConfig cfg = ma.config();
    for (const auto& r : recs) {
        const Schema& s = schemas.at(r.db_id);
        PreprocessedRecord p;
        p.db_id = r.db_id;
        p.question = r.question;
        p.question_tokens = tokenize_words(r.question);
        if (!no_bridging) p.anchors = select_anchors(r.question, s, cfg);
        p.gold_sql = r.gold_sql;
        pre.push_back(std::move(p));
    }
    write_preprocessed(pre, schemas, out_path);
    std::cout << "preprocessed " << pre.size() << " examples -> " << out_path
              << "\n";
    return 0;
}

int cmd_normalize_sql(const SchemaArgs& sa, const std::string& db_id,
                      const std::string& in_path, bool written, bool keep_aliases,
                      bool check_lemmas) {
    auto schemas = sa.load();
    const Schema& s = schemas.at(db_id);
    int rc = 0;
    for (const auto& line : read_lines(in_path)) {
        if (trim(line).empty()) continue;
        try {
            if (written) {
                std::cout << to_written(line, s) << "\n";
                continue;
            }
            Query q = parse(line, s);
            auto exec = to_exec_order(q, s, {.keep_aliases = keep_aliases});
            if (check_lemmas) {
                auto l1 = lemma1_scan(exec, s);
                auto l2 = lemma2_scan(exec);
                nlohmann::json j{{"sql", line},
                                 {"lemma1_ok", l1.empty()},
                                 {"lemma2_ok", l2.empty()}};
                std::cout << j.dump() << "\n";
            } else {
                std::cout << tokens_to_text(exec) << "\n";
            }
        } catch (const ParseError& e) {
            std::cerr << "error: " << e.what() << "\n";
            rc = 1;
        }
    }
    return rc;
}

int cmd_check(const SchemaArgs& sa, const std::string& db_id,
              const std::string& in_path) {
    auto schemas = sa.load();
    const Schema& s = schemas.at(db_id);
    bool any = false;
    for (const auto& line : read_lines(in_path)) {
        if (trim(line).empty()) continue;
        nlohmann::json out{{"sequence", line}};
        nlohmann::json vio = nlohmann::json::array();
        for (const auto& v : static_check_line(line, s)) {
            vio.push_back({{"kind", violation_kind_name(v.kind)},
                           {"position", v.position},
                           {"message", v.message}});
            any = true;
        }
        out["violations"] = vio;
        std::cout << out.dump() << "\n";
    }
    return any ? 1 : 0;
}

std::vector<TrainExample> to_train_examples(
    const std::vector<PreprocessedRecord>& recs,
    const std::map<std::string, Schema>& schemas, bool strip_anchors) {
    std::vector<TrainExample> out;
    for (const auto& r : recs) {
        if (r.gold_sql.empty()) continue;
        const Schema& s = schemas.at(r.db_id);
        out.push_back(make_train_example(
            s, r.question, strip_anchors ? std::vector<AnchorMatch>{} : r.anchors,
            r.gold_sql));
    }
    return out;
}

int cmd_train(const SchemaArgs& sa, const std::string& train_path,
              const std::string& dev_path, const std::string& out_path,
              const std::string& metrics_path, ModelConfig mcfg, TrainConfig tcfg,
              const std::string& ablate) {
    bool strip_anchors = false;
    for (const auto& a : split_list(ablate)) {
        if (a == "bridging") strip_anchors = true;
        else if (a == "metadata") mcfg.use_metadata = false;
        else if (a == "shuffle-drop") tcfg.shuffle_drop = false;
        else if (a == "value-marker-only") mcfg.value_marker_only = true;
        else if (a == "sc-decoding" || a == "static-check") {
            // decode-time ablations, handled by the decode command's flags
        } else {
            throw std::runtime_error("unknown ablation '" + a + "'");
        }
    }
    auto schemas = sa.load();
    auto train_recs = read_preprocessed(train_path);
    std::vector<PreprocessedRecord> dev_recs;
    if (!dev_path.empty()) dev_recs = read_preprocessed(dev_path);
    auto corpus = to_train_examples(train_recs, schemas, strip_anchors);
    auto dev = to_train_examples(dev_recs, schemas, strip_anchors);

    TrainOutcome outcome = train(corpus, dev, mcfg, tcfg);
    save_checkpoint(outcome.best, out_path);
    if (!metrics_path.empty()) {
        std::ofstream m(metrics_path);
        m << "step,lr,loss,dev_em,dev_esm\n";
        for (const auto& row : outcome.log)
            m << row.step << "," << row.lr << "," << row.loss << "," << row.dev_em
              << "," << row.dev_esm << "\n";
    }
    std::cout << "trained " << outcome.steps_run << " steps";
    if (outcome.best_esm >= 0) std::cout << ", best dev E-SM " << outcome.best_esm;
    if (outcome.skipped_examples)
        std::cout << ", skipped " << outcome.skipped_examples << " examples";
    std::cout << "; checkpoint -> " << out_path << "\n";
    return 0;
}

int cmd_decode(const SchemaArgs& sa, const std::string& examples_path,
               const std::string& models_csv, const std::string& out_path,
               DecodeOptions opts, int jobs) {
    auto schemas = sa.load();
    auto recs = read_preprocessed(examples_path);
    std::vector<Model> models;
    for (const auto& path : split_list(models_csv))
        models.push_back(load_checkpoint(path));
    if (models.empty()) throw std::runtime_error("no model checkpoints given");
    std::vector<const Model*> model_ptrs;
    for (const auto& m : models) model_ptrs.push_back(&m);

    std::vector<nlohmann::json> results(recs.size());
    parallel_for(recs.size(), jobs, [&](size_t i) {
        const auto& r = recs[i];
        const Schema& s = schemas.at(r.db_id);
        SerializeOpts so;
        so.value_marker_only = models[0].cfg.value_marker_only;
        HybridSequence h = serialize(r.question_tokens, s, r.anchors,
                                     SchemaView::identity(s), so);
        PointableView view = pointable_view(h);
        std::vector<EncodeCache> encs;
        for (const auto& m : models) encs.push_back(encode(h, s, m));
        DecodeResult res =
            beam_search(std::span<const Model* const>(model_ptrs.data(),
                                                      model_ptrs.size()),
                        encs, view, s, opts);
        results[i] = {{"db_id", r.db_id},
                      {"question", r.question},
                      {"predicted_sql", res.sql},
                      {"beam_rank", res.beam_rank},
                      {"fell_back", res.fell_back}};
    });
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << nlohmann::json{{"format", kPredictionsFormat}}.dump() << "\n";
    for (const auto& j : results) out << j.dump() << "\n";
    std::cout << "decoded " << results.size() << " examples -> " << out_path
              << "\n";
    return 0;
}

int cmd_eval(const SchemaArgs& sa, const std::string& pred_path,
             const std::string& gold_path, const std::string& out_path) {
    auto schemas = sa.load();
    auto gold = read_examples(gold_path);
    std::vector<std::pair<std::string, std::string>> preds;  // db_id, sql
    for (const auto& line : read_lines(pred_path)) {
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.contains("format")) continue;
        preds.emplace_back(j.at("db_id"), j.at("predicted_sql"));
    }
    if (preds.size() != gold.size())
        throw std::runtime_error("prediction/gold count mismatch");

    EvalResult result;
    std::ofstream out;
    if (!out_path.empty()) {
        out.open(out_path);
        out << nlohmann::json{{"format", "bridge.verdicts.v1"}}.dump() << "\n";
    }
    for (size_t i = 0; i < gold.size(); ++i) {
        const Schema& s = schemas.at(gold[i].db_id);
        EvalVerdict v;
        v.em = exact_match(preds[i].second, gold[i].gold_sql, s);
        v.esm = exact_set_match(preds[i].second, gold[i].gold_sql, s);
        if (!sa.db_dir.empty()) {
            std::string db = sa.db_dir + "/" + gold[i].db_id + "/" +
                             gold[i].db_id + ".sqlite";
            if (std::ifstream(db).good())
                v.ea = execution_accuracy(preds[i].second, gold[i].gold_sql, db, s);
        }
        if (out.is_open()) {
            nlohmann::json j{{"db_id", gold[i].db_id},
                             {"question", gold[i].question},
                             {"predicted_sql", preds[i].second},
                             {"gold_sql", gold[i].gold_sql},
                             {"em", v.em},
                             {"esm", v.esm}};
            if (v.ea) j["ea"] = *v.ea;
            out << j.dump() << "\n";
        }
        result.verdicts.push_back(v);
    }
    result.aggregate();
    std::cout << "examples: " << result.verdicts.size() << "\n";
    std::cout << "EM:   " << result.em_pct << "\n";
    std::cout << "E-SM: " << result.esm_pct << "\n";
    if (result.ea_pct) std::cout << "EA:   " << *result.ea_pct << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BRIDGE-style text-to-SQL toolchain"};
    app.require_subcommand(1);
    app.fallthrough();
    uint64_t seed = 1;
    app.add_option("--seed", seed, "global random seed")->capture_default_str();

    // gen-toy
    auto* gen = app.add_subcommand("gen-toy", "write the bundled toy corpus");
    std::string gen_out = "data/toy";
    gen->add_option("--out", gen_out, "output directory")->capture_default_str();

    // match-anchors
    auto* ma_cmd = app.add_subcommand("match-anchors",
                                      "fuzzy-match questions against picklists");
    SchemaArgs ma_schema;
    MatchArgs ma_match;
    std::string ma_examples, ma_out = "anchors.jsonl";
    ma_schema.attach(ma_cmd);
    ma_match.attach(ma_cmd);
    ma_cmd->add_option("--examples", ma_examples, "examples JSONL")->required();
    ma_cmd->add_option("--out", ma_out, "output JSONL")->capture_default_str();

    // preprocess
    auto* pp_cmd = app.add_subcommand("preprocess",
                                      "tokenize questions and attach anchors");
    SchemaArgs pp_schema;
    MatchArgs pp_match;
    std::string pp_examples, pp_out = "preprocessed.jsonl";
    bool pp_no_bridging = false;
    pp_schema.attach(pp_cmd);
    pp_match.attach(pp_cmd);
    pp_cmd->add_option("--examples", pp_examples, "examples JSONL")->required();
    pp_cmd->add_option("--out", pp_out, "output JSONL")->capture_default_str();
    pp_cmd->add_flag("--no-bridging", pp_no_bridging, "emit no anchor matches");

    // normalize-sql
    auto* ns_cmd = app.add_subcommand("normalize-sql",
                                      "written/execution clause-order transforms");
    SchemaArgs ns_schema;
    std::string ns_db, ns_in;
    bool ns_written = false, ns_keep_aliases = false, ns_lemmas = false;
    ns_schema.attach(ns_cmd);
    ns_cmd->add_option("--db", ns_db, "database id")->required();
    ns_cmd->add_option("--in", ns_in, "input file of SQL lines (default stdin)");
    ns_cmd->add_flag("--written", ns_written,
                     "input is execution-order; print written SQL");
    ns_cmd->add_flag("--keep-aliases", ns_keep_aliases, "preserve AS bindings");
    ns_cmd->add_flag("--check-lemmas", ns_lemmas,
                     "print per-line lemma verdicts instead of tokens");

    // check
    auto* ck_cmd = app.add_subcommand("check",
                                      "static SQL correctness check on sequences");
    SchemaArgs ck_schema;
    std::string ck_db, ck_in;
    ck_schema.attach(ck_cmd);
    ck_cmd->add_option("--db", ck_db, "database id")->required();
    ck_cmd->add_option("--in", ck_in, "input file of sequences (default stdin)");

    // train
    auto* tr_cmd = app.add_subcommand("train", "train a model");
    SchemaArgs tr_schema;
    std::string tr_train, tr_dev, tr_out = "model.json", tr_metrics, tr_ablate;
    ModelConfig mcfg;
    TrainConfig tcfg;
    tr_schema.attach(tr_cmd);
    tr_cmd->add_option("--train", tr_train, "preprocessed training JSONL")
        ->required();
    tr_cmd->add_option("--dev", tr_dev, "preprocessed dev JSONL");
    tr_cmd->add_option("--out", tr_out, "checkpoint path")->capture_default_str();
    tr_cmd->add_option("--metrics", tr_metrics, "metrics CSV path");
    tr_cmd->add_option("--steps", tcfg.n_max, "total steps")->capture_default_str();
    tr_cmd->add_option("--warmup", tcfg.warmup_steps, "warmup steps")
        ->capture_default_str();
    tr_cmd->add_option("--gamma0", tcfg.gamma0, "base learning rate")
        ->capture_default_str();
    tr_cmd->add_option("--batch", tcfg.batch_size, "batch size")
        ->capture_default_str();
    tr_cmd->add_option("--p-drop", tcfg.p_drop, "table drop probability")
        ->capture_default_str();
    tr_cmd->add_option("--eval-every", tcfg.eval_every, "dev eval interval")
        ->capture_default_str();
    tr_cmd->add_option("--early-stop-esm", tcfg.early_stop_dev_esm,
                       "stop when dev E-SM reaches this value");
    tr_cmd->add_option("--dev-beam", tcfg.dev_beam, "beam width for dev decoding")
        ->capture_default_str();
    tr_cmd->add_flag("--paper-beta", tcfg.use_paper_beta,
                     "use the literal published L-inv beta");
    tr_cmd->add_option("--n", mcfg.n, "hidden dimension")->capture_default_str();
    tr_cmd->add_option("--d", mcfg.d, "embedding dimension")->capture_default_str();
    tr_cmd->add_option("--heads", mcfg.heads, "attention heads")
        ->capture_default_str();
    tr_cmd->add_option("--buckets", mcfg.buckets, "embedding hash buckets")
        ->capture_default_str();
    tr_cmd->add_option("--ablate", tr_ablate,
                       "comma list: bridging,metadata,shuffle-drop,"
                       "value-marker-only,sc-decoding,static-check");

    // decode
    auto* dc_cmd = app.add_subcommand("decode", "beam-search decoding");
    SchemaArgs dc_schema;
    std::string dc_examples, dc_models, dc_out = "predictions.jsonl";
    DecodeOptions dc_opts;
    int dc_jobs = 1;
    bool dc_no_sc = false, dc_no_static = false;
    dc_schema.attach(dc_cmd);
    dc_cmd->add_option("--examples", dc_examples, "preprocessed JSONL")->required();
    dc_cmd->add_option("--model", dc_models,
                       "checkpoint path, or comma list for an ensemble")
        ->required();
    dc_cmd->add_option("--out", dc_out, "predictions JSONL")->capture_default_str();
    dc_cmd->add_option("--beam", dc_opts.beam, "beam width")->capture_default_str();
    dc_cmd->add_option("--max-len", dc_opts.max_len, "max decode length")
        ->capture_default_str();
    dc_cmd->add_flag("--no-sc-guided", dc_no_sc,
                     "disable schema-consistency guided decoding");
    dc_cmd->add_flag("--no-static-check", dc_no_static,
                     "disable the static SQL correctness check");
    dc_cmd->add_flag("--wikisql", dc_opts.wikisql_sketch,
                     "require the WikiSQL sketch");
    dc_cmd->add_option("--jobs", dc_jobs, "example-level parallelism")
        ->capture_default_str();

    // eval
    auto* ev_cmd = app.add_subcommand("eval", "official metrics");
    SchemaArgs ev_schema;
    std::string ev_pred, ev_gold, ev_out;
    ev_schema.attach(ev_cmd);
    ev_cmd->add_option("--pred", ev_pred, "predictions JSONL")->required();
    ev_cmd->add_option("--gold", ev_gold, "gold examples JSONL")->required();
    ev_cmd->add_option("--out", ev_out, "per-example verdicts JSONL");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_toy(gen_out, seed);
        if (ma_cmd->parsed())
            return cmd_match_anchors(ma_schema, ma_match, ma_examples, ma_out);
        if (pp_cmd->parsed())
            return cmd_preprocess(pp_schema, pp_match, pp_examples, pp_out,
                                  pp_no_bridging);
        if (ns_cmd->parsed())
            return cmd_normalize_sql(ns_schema, ns_db, ns_in, ns_written,
                                     ns_keep_aliases, ns_lemmas);
        if (ck_cmd->parsed()) return cmd_check(ck_schema, ck_db, ck_in);
        if (tr_cmd->parsed()) {
            tcfg.seed = seed;
            return cmd_train(tr_schema, tr_train, tr_dev, tr_out, tr_metrics,
                             mcfg, tcfg, tr_ablate);
        }
        if (dc_cmd->parsed()) {
            dc_opts.sc_guided = !dc_no_sc;
            dc_opts.run_static_check = !dc_no_static;
            return cmd_decode(dc_schema, dc_examples, dc_models, dc_out, dc_opts,
                              dc_jobs);
        }
        if (ev_cmd->parsed()) return cmd_eval(ev_schema, ev_pred, ev_gold, ev_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
