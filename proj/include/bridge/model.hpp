#pragma once

#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridge/nn.hpp"
#include "bridge/text.hpp"
#include "bridge/vocab.hpp"

namespace bridge {

struct ModelConfig {
    int d = 64;             // embedding dim
    int n = 64;             // hidden dim (even; n/H per attention head)
    int heads = 2;
    int buckets = 1024;     // hash buckets for word embeddings
    uint64_t hash_seed = 0x9e3779b97f4a7c15ull;
    bool use_metadata = true;
    bool value_marker_only = false;
    int vocab_version = kVocabVersion;
};

struct EncoderParams {
    Mat word_emb;     // buckets x d
    Mat special_emb;  // 5 x d
    BiLstmParams pre;  // d -> n, stand-in for the pretrained contextualizer
    BiLstmParams ctx;  // n -> n, the post-encoder bi-LSTM
    BiLstmParams q;    // n -> n, question re-encoder (decoder init)
    Mat f_pri, f_for, f_type;  // 2 x n, 2 x n, 5 x n
    Mat W_g;  // n x 4n
    Vec b_g;  // n
};

struct DecoderParams {
    LstmParams cell;          // 2n -> n
    std::vector<Mat> W_U;     // heads x (n x n/H)
    std::vector<Mat> W_V;     // heads x (n x n/H)
    Mat W_vocab;              // V x 2n
    Vec b_vocab;              // V
    Vec w_gen_s, w_gen_z;     // n
    Vec b_gen;                // 1
    Mat copy_kind;            // 3 x n: copied table / field / question token
    Mat dec_emb;              // V x n
    Vec go_emb;               // n
};

struct Model {
    ModelConfig cfg;
    EncoderParams enc;
    DecoderParams dec;
};

// Every learnable block, by name. Grads / Adam moments share the structure,
// so the same visitor drives updates, checkpoints and gradient checks.
template <typename F>
void visit_params(Model& m, F&& f) {
    auto lstm = [&](const std::string& name, LstmParams& p) {
        f(name + ".Wx", p.Wx);
        f(name + ".Wh", p.Wh);
        f(name + ".b", p.b);
    };
    auto bilstm = [&](const std::string& name, BiLstmParams& p) {
        lstm(name + ".fwd", p.fwd);
        lstm(name + ".bwd", p.bwd);
    };
    f("enc.word_emb", m.enc.word_emb);
    f("enc.special_emb", m.enc.special_emb);
    bilstm("enc.pre", m.enc.pre);
    bilstm("enc.ctx", m.enc.ctx);
    bilstm("enc.q", m.enc.q);
    f("enc.f_pri", m.enc.f_pri);
    f("enc.f_for", m.enc.f_for);
    f("enc.f_type", m.enc.f_type);
    f("enc.W_g", m.enc.W_g);
    f("enc.b_g", m.enc.b_g);
    lstm("dec.cell", m.dec.cell);
    for (size_t h = 0; h < m.dec.W_U.size(); ++h) {
        f("dec.W_U." + std::to_string(h), m.dec.W_U[h]);
        f("dec.W_V." + std::to_string(h), m.dec.W_V[h]);
    }
    f("dec.W_vocab", m.dec.W_vocab);
    f("dec.b_vocab", m.dec.b_vocab);
    f("dec.w_gen_s", m.dec.w_gen_s);
    f("dec.w_gen_z", m.dec.w_gen_z);
    f("dec.b_gen", m.dec.b_gen);
    f("dec.copy_kind", m.dec.copy_kind);
    f("dec.dec_emb", m.dec.dec_emb);
    f("dec.go_emb", m.dec.go_emb);
}

inline Model init_model(const ModelConfig& cfg, uint64_t seed) {
    if (cfg.n % 2 != 0 || cfg.n % cfg.heads != 0)
        throw std::invalid_argument("hidden dim must be even and divisible by heads");
    Rng rng(seed);
    Model m;
    m.cfg = cfg;
    const int d = cfg.d, n = cfg.n;
    m.enc.word_emb = uniform_init(cfg.buckets, d, 0.1, rng);
    m.enc.special_emb = uniform_init(5, d, 0.1, rng);
    m.enc.pre = bilstm_init(d, n, rng);
    m.enc.ctx = bilstm_init(n, n, rng);
    m.enc.q = bilstm_init(n, n, rng);
    m.enc.f_pri = uniform_init(2, n, 0.1, rng);
    m.enc.f_for = uniform_init(2, n, 0.1, rng);
    m.enc.f_type = uniform_init(5, n, 0.1, rng);
    m.enc.W_g = xavier(n, 4 * n, rng);
    m.enc.b_g = Vec::Zero(n);
    m.dec.cell = lstm_init(2 * n, n, rng);
    const int hd = n / cfg.heads;
    for (int h = 0; h < cfg.heads; ++h) {
        m.dec.W_U.push_back(xavier(n, hd, rng));
        m.dec.W_V.push_back(xavier(n, hd, rng));
    }
    m.dec.W_vocab = xavier(static_cast<int>(kVocabSize), 2 * n, rng);
    m.dec.b_vocab = Vec::Zero(static_cast<int>(kVocabSize));
    m.dec.w_gen_s = uniform_init(n, 1, 0.1, rng).col(0);
    m.dec.w_gen_z = uniform_init(n, 1, 0.1, rng).col(0);
    m.dec.b_gen = Vec::Zero(1);
    m.dec.copy_kind = uniform_init(3, n, 0.1, rng);
    m.dec.dec_emb = uniform_init(static_cast<int>(kVocabSize), n, 0.1, rng);
    m.dec.go_emb = uniform_init(1, n, 0.1, rng).row(0).transpose();
    return m;
}

inline Model zeros_like(const Model& src) {
    Model z = src;
    visit_params(z, [](const std::string&, auto& t) { t.setZero(); });
    return z;
}

// ---------------------------------------------------------------------------
// Adam with an externally scheduled learning rate.

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long long t = 0;
    Model m, v;

    explicit Adam(const Model& model) : m(zeros_like(model)), v(zeros_like(model)) {}

    void step(Model& params, Model& grads, double lr) {
        ++t;
        double bc1 = 1.0 - std::pow(beta1, double(t));
        double bc2 = 1.0 - std::pow(beta2, double(t));
        // walk the four models in lockstep by name
        std::vector<std::pair<std::string, Eigen::Map<Mat>>> ps, gs, ms, vs;
        auto collect = [](Model& mod, auto& out) {
            visit_params(mod, [&](const std::string& name, auto& t) {
                out.emplace_back(name,
                                 Eigen::Map<Mat>(t.data(), t.rows(), t.cols()));
            });
        };
        collect(params, ps);
        collect(grads, gs);
        collect(m, ms);
        collect(v, vs);
        for (size_t i = 0; i < ps.size(); ++i) {
            auto& P = ps[i].second;
            auto& G = gs[i].second;
            auto& M = ms[i].second;
            auto& V = vs[i].second;
            M = beta1 * M + (1.0 - beta1) * G;
            V = beta2 * V + (1.0 - beta2) * G.cwiseProduct(G);
            P.array() -= lr * (M.array() / bc1) /
                         ((V.array() / bc2).sqrt() + eps);
        }
    }
};

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON tensor dump with named blocks.

inline void save_checkpoint(const Model& model, const std::string& path) {
    nlohmann::json j;
    j["format"] = "bridge.checkpoint.v1";
    j["config"] = {{"d", model.cfg.d},
                   {"n", model.cfg.n},
                   {"heads", model.cfg.heads},
                   {"buckets", model.cfg.buckets},
                   {"hash_seed", model.cfg.hash_seed},
                   {"use_metadata", model.cfg.use_metadata},
                   {"value_marker_only", model.cfg.value_marker_only},
                   {"vocab_version", model.cfg.vocab_version}};
    nlohmann::json blocks;
    Model& m = const_cast<Model&>(model);
    visit_params(m, [&](const std::string& name, auto& t) {
        std::vector<double> data(t.data(), t.data() + t.size());
        blocks[name] = {{"rows", t.rows()}, {"cols", t.cols()}, {"data", data}};
    });
    j["blocks"] = std::move(blocks);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << j.dump();
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "bridge.checkpoint.v1")
        throw std::runtime_error(path + ": not a checkpoint file");
    ModelConfig cfg;
    const auto& c = j.at("config");
    cfg.d = c.at("d");
    cfg.n = c.at("n");
    cfg.heads = c.at("heads");
    cfg.buckets = c.at("buckets");
    cfg.hash_seed = c.at("hash_seed");
    cfg.use_metadata = c.at("use_metadata");
    cfg.value_marker_only = c.at("value_marker_only");
    cfg.vocab_version = c.at("vocab_version");
    if (cfg.vocab_version != kVocabVersion)
        throw std::runtime_error("checkpoint built against another vocabulary");
    Model model = init_model(cfg, 0);
    const auto& blocks = j.at("blocks");
    visit_params(model, [&](const std::string& name, auto& t) {
        const auto& b = blocks.at(name);
        if (b.at("rows").get<long>() != t.rows() ||
            b.at("cols").get<long>() != t.cols())
            throw std::runtime_error("checkpoint block " + name + " has wrong shape");
        const auto& data = b.at("data");
        for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = data[k];
    });
    return model;
}

inline int word_bucket(const ModelConfig& cfg, std::string_view word) {
    return static_cast<int>(fnv1a64(to_lower(word), cfg.hash_seed) %
                            static_cast<uint64_t>(cfg.buckets));
}

}  // namespace bridge
