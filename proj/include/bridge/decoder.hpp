#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bridge/encoder.hpp"
#include "bridge/guard.hpp"
#include "bridge/hybrid.hpp"
#include "bridge/model.hpp"
#include "bridge/sqlkit.hpp"
#include "bridge/vocab.hpp"

namespace bridge {

// One decoded token: generated vocabulary symbol or a copy of a pointable.
// Question words whose surface coincides with a vocabulary symbol (digits,
// the occasional keyword-shaped word) canonicalize to the generated form, so
// token identity matches the summation in the output mixture.
struct DecTok {
    enum Kind { gen, table, field, word } kind = gen;
    int vocab = -1;
    TableId tref = -1;
    FieldId fref = -1;
    std::string wordv;  // lowercased question word

    TokClass cls() const {
        switch (kind) {
            case gen: return vocab_id_is_digit(vocab) ? TokClass::value
                                                      : TokClass::reserved;
            case table: return TokClass::table;
            case field: return TokClass::field;
            default: return TokClass::value;
        }
    }
    std::string key() const {
        switch (kind) {
            case gen: return "g" + std::to_string(vocab);
            case table: return "t" + std::to_string(tref);
            case field: return "f" + std::to_string(fref);
            default: return "w" + wordv;
        }
    }
    bool is_eos() const { return kind == gen && vocab == eos_id(); }

    static DecTok make_gen(int v) {
        DecTok t;
        t.kind = gen;
        t.vocab = v;
        return t;
    }
};

// All pointable positions sharing the token's identity (Eq. 6 / Eq. 9 sums).
inline std::vector<int> match_positions(const PointableView& view, const DecTok& t) {
    std::vector<int> out;
    for (size_t j = 0; j < view.items.size(); ++j) {
        const Pointable& p = view.items[j];
        switch (t.kind) {
            case DecTok::gen:
                if (p.kind == Pointable::question &&
                    iequals(p.word, vocab_surface(t.vocab)))
                    out.push_back(static_cast<int>(j));
                break;
            case DecTok::table:
                if (p.kind == Pointable::table && p.table_ref == t.tref)
                    out.push_back(static_cast<int>(j));
                break;
            case DecTok::field:
                if (p.kind == Pointable::field && p.field_ref == t.fref)
                    out.push_back(static_cast<int>(j));
                break;
            case DecTok::word:
                if (p.kind == Pointable::question && p.word == t.wordv)
                    out.push_back(static_cast<int>(j));
                break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// One decoder step (Eq. 3-6 with the selective-read input extension).

struct StepDistribution {
    Vec p_out;                // V + P, sums to 1 pre-mask
    double p_gen = 0.0;
    std::vector<Vec> alpha;   // per head, length P
};

struct DecoderState {
    Vec h, c;
    double prev_pgen = 1.0;  // makes the selective-read input zero at t=1
    Vec prev_zeta;
};

struct StepCache {
    Vec e_prev;
    Vec y;
    LstmStepCache lstm;
    std::vector<Vec> sWU, att_e, alpha;
    Vec z, sz;
    double pgen = 0.0;
    Vec PV;
    DecoderState state_in;  // for the recurrent part of backprop
};

inline DecoderState initial_decoder_state(const EncodeCache& enc, int n) {
    DecoderState st;
    st.h = enc.init_h;
    st.c = enc.init_c;
    st.prev_pgen = 1.0;
    st.prev_zeta = Vec::Zero(n);
    return st;
}

inline std::vector<Mat> precompute_attention_values(const Model& m, const Mat& M) {
    std::vector<Mat> MV;
    for (int h = 0; h < m.cfg.heads; ++h) MV.push_back(M * m.dec.W_V[h]);
    return MV;
}

inline Vec token_embedding(const Model& m, const DecTok& t) {
    switch (t.kind) {
        case DecTok::gen: return m.dec.dec_emb.row(t.vocab).transpose();
        case DecTok::table: return m.dec.copy_kind.row(0).transpose();
        case DecTok::field: return m.dec.copy_kind.row(1).transpose();
        default: return m.dec.copy_kind.row(2).transpose();
    }
}

// Advance the LSTM on [e_prev; (1-p_gen)*zeta] and produce the mixture
// distribution over the generation vocabulary and the pointable positions.
inline StepDistribution decoder_step(const Model& m, const Mat& M,
                                     const std::vector<Mat>& MV,
                                     const DecoderState& st, const Vec& e_prev,
                                     DecoderState& st_out, StepCache* cache) {
    const int n = m.cfg.n;
    const int H = m.cfg.heads;
    const int hd = n / H;
    const int P = static_cast<int>(M.rows());

    Vec y(2 * n);
    y << e_prev, (1.0 - st.prev_pgen) * st.prev_zeta;

    LstmStepCache lc;
    lstm_step(m.dec.cell, y, st.h, st.c, lc);
    const Vec& s = lc.h;

    StepDistribution dist;
    dist.alpha.resize(H);
    Vec z(n);
    std::vector<Vec> sWU(H), att_e(H);
    const double scale = 1.0 / std::sqrt(double(n) / double(H));
    for (int h = 0; h < H; ++h) {
        sWU[h] = m.dec.W_U[h].transpose() * s;       // hd
        att_e[h] = (MV[h] * sWU[h]) * scale;         // P
        dist.alpha[h] = softmax(att_e[h]);
        z.segment(h * hd, hd) = MV[h].transpose() * dist.alpha[h];
    }

    double pgen_pre = m.dec.w_gen_s.dot(s) + m.dec.w_gen_z.dot(z) + m.dec.b_gen[0];
    dist.p_gen = 1.0 / (1.0 + std::exp(-pgen_pre));

    Vec sz(2 * n);
    sz << s, z;
    Vec PV = softmax(m.dec.W_vocab * sz + m.dec.b_vocab);

    dist.p_out.resize(static_cast<Eigen::Index>(kVocabSize) + P);
    dist.p_out.head(kVocabSize) = dist.p_gen * PV;
    dist.p_out.tail(P) = (1.0 - dist.p_gen) * dist.alpha[H - 1];

    st_out.h = s;
    st_out.c = lc.c;
    st_out.prev_pgen = dist.p_gen;       // zeta set by the caller per token
    st_out.prev_zeta = Vec::Zero(n);

    if (cache) {
        cache->e_prev = e_prev;
        cache->y = std::move(y);
        cache->lstm = std::move(lc);
        cache->sWU = std::move(sWU);
        cache->att_e = std::move(att_e);
        cache->alpha = dist.alpha;
        cache->z = z;
        cache->sz = std::move(sz);
        cache->pgen = dist.p_gen;
        cache->PV = PV;
        cache->state_in = st;
    }
    return dist;
}

// Eq. 9: weighted sum of encoder states at the positions the emitted token
// matches; zero for purely generated tokens.
inline Vec selective_read(const Mat& M, const Vec& alpha_last,
                          const std::vector<int>& positions) {
    Vec zeta = Vec::Zero(M.cols());
    if (positions.empty()) return zeta;
    double K = 0.0;
    for (int j : positions) K += alpha_last[j];
    if (K < 1e-300) return zeta;
    for (int j : positions) zeta += (alpha_last[j] / K) * M.row(j).transpose();
    return zeta;
}

// Average of per-member output distributions; members must share support.
inline Vec ensemble_step(const std::vector<Vec>& member_p_out) {
    if (member_p_out.empty()) throw std::invalid_argument("empty ensemble");
    for (const auto& p : member_p_out)
        if (p.size() != member_p_out[0].size())
            throw std::invalid_argument("ensemble support mismatch");
    Vec mean = Vec::Zero(member_p_out[0].size());
    for (const auto& p : member_p_out) mean += p;
    return mean / double(member_p_out.size());
}

// ---------------------------------------------------------------------------
// Decoded-token stream -> SQL token stream. Digit runs merge into numbers,
// quoted word runs merge into value literals. Returns nothing when the
// stream cannot form a token-level valid sequence (unbalanced quotes etc.).
inline std::optional<std::vector<SqlToken>> merge_decoded(
    const std::vector<DecTok>& toks, const Schema& s) {
    std::vector<SqlToken> out;
    const int quote = *vocab_id("'");
    const int dot = *vocab_id(".");
    size_t i = 0;
    auto digit_char = [](const DecTok& t) -> std::optional<char> {
        if (t.kind == DecTok::gen && vocab_id_is_digit(t.vocab))
            return vocab_surface(t.vocab)[0];
        return std::nullopt;
    };
    while (i < toks.size()) {
        const DecTok& t = toks[i];
        if (t.is_eos()) break;
        if (t.kind == DecTok::table) {
            out.push_back({TokKind::table, s.tables[t.tref].name, t.tref, -1, i});
            ++i;
        } else if (t.kind == DecTok::field) {
            out.push_back({TokKind::field, s.qualified_name(t.fref),
                           s.fields[t.fref].table, t.fref, i});
            ++i;
        } else if (t.kind == DecTok::gen && t.vocab == quote) {
            // string literal: words and digits until the closing quote
            size_t j = i + 1;
            std::vector<std::string> words;
            bool closed = false;
            for (; j < toks.size(); ++j) {
                if (toks[j].kind == DecTok::word) {
                    words.push_back(toks[j].wordv);
                } else if (auto d = digit_char(toks[j])) {
                    words.push_back(std::string(1, *d));
                } else if (toks[j].kind == DecTok::gen && toks[j].vocab == quote) {
                    closed = true;
                    break;
                } else {
                    return std::nullopt;
                }
            }
            if (!closed) return std::nullopt;
            out.push_back({TokKind::value, join(words, " "), -1, -1, i});
            i = j + 1;
        } else if (digit_char(t)) {
            // number: digits with at most one interior decimal point
            std::string num;
            bool dotted = false;
            while (i < toks.size()) {
                if (auto d = digit_char(toks[i])) {
                    num.push_back(*d);
                    ++i;
                } else if (!dotted && toks[i].kind == DecTok::gen &&
                           toks[i].vocab == dot && i + 1 < toks.size() &&
                           digit_char(toks[i + 1])) {
                    num.push_back('.');
                    dotted = true;
                    ++i;
                } else {
                    break;
                }
            }
            out.push_back({TokKind::number, num, -1, -1, i});
        } else if (t.kind == DecTok::word) {
            // bare copied word outside quotes: number if it looks like one
            out.push_back({parses_as_number(t.wordv) ? TokKind::number
                                                     : TokKind::value,
                           t.wordv, -1, -1, i});
            ++i;
        } else {
            out.push_back({TokKind::reserved, std::string(vocab_surface(t.vocab)),
                           -1, -1, i});
            ++i;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Guarded beam search with static-check filtering and the fallback query.

struct DecodeOptions {
    int beam = 16;
    int max_len = 200;
    bool sc_guided = true;        // field mask + token transition mask
    bool run_static_check = true;
    bool wikisql_sketch = false;
    bool renormalize = true;      // renormalize after masking
};

struct BeamEntry {
    std::vector<DecTok> toks;
    double logp = 0.0;
};

struct DecodeResult {
    std::string sql;
    int beam_rank = -1;
    bool fell_back = false;
    std::vector<BeamEntry> finished;  // ranked, best first
};

inline std::string fallback_query(const Schema& s) {
    Query q;
    ValUnit u;
    u.agg = AggOp::count;
    u.col.star = true;
    q.core.select.push_back(u);
    q.core.from_tables.push_back(0);
    q.core.from_aliases.push_back("");
    return render_written(q, s);
}

inline DecodeResult beam_search(std::span<const Model* const> models,
                                const std::vector<EncodeCache>& encs,
                                const PointableView& view, const Schema& schema,
                                const DecodeOptions& opts) {
    const size_t n_members = models.size();
    if (n_members == 0 || encs.size() != n_members)
        throw std::invalid_argument("beam_search needs one encoding per model");
    std::vector<std::vector<Mat>> MV(n_members);
    for (size_t k = 0; k < n_members; ++k)
        MV[k] = precompute_attention_values(*models[k], encs[k].M);

    SupportLayout layout{kVocabSize, &view};

    struct Hyp {
        std::vector<DecTok> toks;
        double logp = 0.0;
        std::vector<DecoderState> states;
        FieldMask xi;
        std::optional<TokClass> last;
    };

    Hyp root;
    for (size_t k = 0; k < n_members; ++k)
        root.states.push_back(initial_decoder_state(encs[k], models[k]->cfg.n));
    root.xi = FieldMask::initial(view);

    std::vector<Hyp> live{std::move(root)};
    std::vector<BeamEntry> finished;

    for (int step = 0; step < opts.max_len && !live.empty(); ++step) {
        struct Extension {
            size_t parent;
            DecTok tok;
            double logp;
            std::vector<DecoderState> states;  // states after the LSTM advance
            std::vector<Vec> alpha_last;       // per member
            std::vector<double> pgen;          // per member
        };
        std::vector<Extension> pool;
        for (size_t pi = 0; pi < live.size(); ++pi) {
            Hyp& hyp = live[pi];
            std::vector<Vec> member_out(n_members);
            std::vector<DecoderState> advanced(n_members);
            std::vector<Vec> alpha_last(n_members);
            std::vector<double> pgens(n_members);
            bool dead = false;
            for (size_t k = 0; k < n_members; ++k) {
                Vec e_prev = hyp.toks.empty()
                                 ? models[k]->dec.go_emb
                                 : token_embedding(*models[k], hyp.toks.back());
                StepDistribution d =
                    decoder_step(*models[k], encs[k].M, MV[k], hyp.states[k],
                                 e_prev, advanced[k], nullptr);
                alpha_last[k] = d.alpha.back();
                pgens[k] = d.p_gen;
                if (opts.sc_guided) {
                    TransitionMask tm = TransitionMask::after(hyp.last);
                    MaskedDistribution md =
                        apply_masks(d.p_out, hyp.xi, tm, layout, opts.renormalize);
                    if (md.all_masked) {
                        dead = true;
                        break;
                    }
                    member_out[k] = std::move(md.probs);
                } else {
                    member_out[k] = std::move(d.p_out);
                }
            }
            if (dead) continue;
            Vec mean = ensemble_step(member_out);

            // merge support entries into token candidates
            std::map<std::string, std::pair<DecTok, double>> cands;
            for (size_t v = 0; v < kVocabSize; ++v) {
                if (mean[v] <= 0.0) continue;
                DecTok t = DecTok::make_gen(static_cast<int>(v));
                cands.emplace(t.key(), std::make_pair(t, 0.0)).first->second.second +=
                    mean[v];
            }
            for (size_t j = 0; j < view.items.size(); ++j) {
                double p = mean[kVocabSize + j];
                if (p <= 0.0) continue;
                const Pointable& item = view.items[j];
                DecTok t;
                if (item.kind == Pointable::table) {
                    t.kind = DecTok::table;
                    t.tref = item.table_ref;
                } else if (item.kind == Pointable::field) {
                    t.kind = DecTok::field;
                    t.fref = item.field_ref;
                } else if (auto vid = vocab_id(item.word)) {
                    t = DecTok::make_gen(*vid);  // canonicalize to generation
                } else {
                    t.kind = DecTok::word;
                    t.wordv = item.word;
                }
                cands.emplace(t.key(), std::make_pair(t, 0.0)).first->second.second +=
                    p;
            }
            std::vector<std::pair<DecTok, double>> ranked;
            ranked.reserve(cands.size());
            for (auto& [key, tp] : cands) ranked.push_back(std::move(tp));
            std::sort(ranked.begin(), ranked.end(),
                      [](const auto& a, const auto& b) { return a.second > b.second; });
            size_t take = std::min<size_t>(ranked.size(), opts.beam);
            for (size_t r = 0; r < take; ++r) {
                Extension ext;
                ext.parent = pi;
                ext.tok = ranked[r].first;
                ext.logp = hyp.logp + std::log(ranked[r].second);
                ext.states = advanced;
                ext.alpha_last = alpha_last;
                ext.pgen = pgens;
                pool.push_back(std::move(ext));
            }
        }
        if (pool.empty()) break;
        std::sort(pool.begin(), pool.end(),
                  [](const Extension& a, const Extension& b) { return a.logp > b.logp; });
        size_t width = std::min<size_t>(pool.size(), opts.beam);

        std::vector<Hyp> next;
        for (size_t r = 0; r < width; ++r) {
            Extension& ext = pool[r];
            const Hyp& parent = live[ext.parent];
            Hyp child;
            child.toks = parent.toks;
            child.toks.push_back(ext.tok);
            child.logp = ext.logp;
            child.xi = update_field_mask(parent.xi, ext.tok.cls(), ext.tok.tref,
                                         view, schema);
            child.last = ext.tok.cls();
            child.states = std::move(ext.states);
            auto positions = match_positions(view, ext.tok);
            for (size_t k = 0; k < n_members; ++k) {
                child.states[k].prev_pgen = ext.pgen[k];
                child.states[k].prev_zeta =
                    selective_read(encs[k].M, ext.alpha_last[k], positions);
            }
            if (ext.tok.is_eos()) {
                finished.push_back({std::move(child.toks), child.logp});
            } else {
                next.push_back(std::move(child));
            }
        }
        live = std::move(next);
        if (finished.size() >= static_cast<size_t>(opts.beam) && live.empty()) break;
    }
    // hypotheses still alive at max_len participate in ranking as they are
    for (auto& hyp : live) finished.push_back({std::move(hyp.toks), hyp.logp});
    std::sort(finished.begin(), finished.end(),
              [](const BeamEntry& a, const BeamEntry& b) { return a.logp > b.logp; });

    DecodeResult result;
    result.finished = finished;
    for (size_t rank = 0; rank < finished.size(); ++rank) {
        auto merged = merge_decoded(finished[rank].toks, schema);
        if (!merged || merged->empty()) continue;
        if (opts.run_static_check) {
            if (!static_check(*merged, schema).empty()) continue;
            if (opts.wikisql_sketch) {
                try {
                    ParseResult pr = parse_exec(tokens_to_text(*merged), schema);
                    if (!sketch_check(pr.query)) continue;
                } catch (const ParseError&) {
                    continue;
                }
            }
            result.sql = to_written(*merged, schema);
        } else {
            // even unchecked output must render; fall through otherwise
            try {
                result.sql = to_written(*merged, schema);
            } catch (const ParseError&) {
                continue;
            }
        }
        result.beam_rank = static_cast<int>(rank);
        return result;
    }
    result.sql = fallback_query(schema);
    result.fell_back = true;
    return result;
}

inline DecodeResult beam_search(const Model& model, const EncodeCache& enc,
                                const PointableView& view, const Schema& schema,
                                const DecodeOptions& opts) {
    const Model* ptr = &model;
    return beam_search(std::span<const Model* const>(&ptr, 1), {enc}, view, schema,
                       opts);
}

}  // namespace bridge
