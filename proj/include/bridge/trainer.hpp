#pragma once

#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridge/decoder.hpp"
#include "bridge/encoder.hpp"
#include "bridge/evalkit.hpp"
#include "bridge/hybrid.hpp"
#include "bridge/model.hpp"
#include "bridge/sqlkit.hpp"

namespace bridge {

// ---------------------------------------------------------------------------
// Targets: execution-order token sequences decomposed into decoder steps,
// each resolvable to a generation symbol and/or pointable positions.

struct TargetError : std::runtime_error {
    size_t step;
    TargetError(const std::string& msg, size_t at)
        : std::runtime_error(msg + " (target step " + std::to_string(at) + ")"),
          step(at) {}
};

struct TargetStep {
    DecTok tok;
    std::optional<int> vocab;    // generation route
    std::vector<int> positions;  // pointable routes (same identity)
};

struct TrainTarget {
    std::vector<TargetStep> steps;
};

namespace trainer_detail {

inline TargetStep make_step(DecTok tok, const PointableView& view) {
    TargetStep st;
    st.tok = tok;
    if (tok.kind == DecTok::gen) st.vocab = tok.vocab;
    st.positions = match_positions(view, tok);
    return st;
}

}  // namespace trainer_detail

// Decompose a canonical execution-order sequence against a pointable view.
// Numbers split into digits unless the question mentions them verbatim;
// string values copy word by word between quote symbols.
inline TrainTarget build_target(const std::vector<SqlToken>& exec_tokens,
                                const PointableView& view) {
    using trainer_detail::make_step;
    TrainTarget t;
    auto add = [&](DecTok tok) {
        TargetStep st = make_step(tok, view);
        if (tok.kind == DecTok::word && st.positions.empty())
            throw TargetError("value word '" + tok.wordv + "' not in the question",
                              t.steps.size());
        if (!st.vocab && st.positions.empty())
            throw TargetError("token not reachable", t.steps.size());
        t.steps.push_back(std::move(st));
    };
    auto add_word_or_gen = [&](const std::string& w, size_t) {
        if (auto vid = vocab_id(w)) {
            add(DecTok::make_gen(*vid));
        } else {
            DecTok tok;
            tok.kind = DecTok::word;
            tok.wordv = to_lower(w);
            add(tok);
        }
    };
    const int quote = *vocab_id("'");
    for (size_t i = 0; i < exec_tokens.size(); ++i) {
        const SqlToken& tok = exec_tokens[i];
        switch (tok.kind) {
            case TokKind::reserved: {
                auto vid = vocab_id(tok.surface);
                if (!vid)
                    throw TargetError("reserved token '" + tok.surface +
                                          "' missing from the vocabulary",
                                      t.steps.size());
                add(DecTok::make_gen(*vid));
                break;
            }
            case TokKind::table: {
                DecTok d;
                d.kind = DecTok::table;
                d.tref = tok.table_ref;
                add(d);
                break;
            }
            case TokKind::field: {
                DecTok d;
                d.kind = DecTok::field;
                d.fref = tok.field_ref;
                add(d);
                break;
            }
            case TokKind::number: {
                bool in_question = false;
                for (const auto& item : view.items)
                    in_question |= item.kind == Pointable::question &&
                                   item.word == to_lower(tok.surface);
                if (in_question) {
                    DecTok d;
                    d.kind = DecTok::word;
                    d.wordv = to_lower(tok.surface);
                    add(d);
                } else {
                    for (char c : tok.surface) {
                        auto vid = vocab_id(std::string(1, c));
                        if (!vid)
                            throw TargetError("number digit not representable",
                                              t.steps.size());
                        add(DecTok::make_gen(*vid));
                    }
                }
                break;
            }
            case TokKind::value: {
                add(DecTok::make_gen(quote));
                for (const auto& w : tokenize_words(tok.surface))
                    add_word_or_gen(w, i);
                add(DecTok::make_gen(quote));
                break;
            }
        }
    }
    add(DecTok::make_gen(eos_id()));
    return t;
}

// Eq. 6 probability of a target step under a step distribution.
inline double target_step_prob(const StepDistribution& dist, const TargetStep& st) {
    double p = 0.0;
    if (st.vocab) p += dist.p_out[*st.vocab];
    for (int j : st.positions) p += dist.p_out[kVocabSize + j];
    return p;
}

// Cross-entropy over a sequence of step distributions (testing surface; the
// training path computes the same quantity with cached activations).
inline double sequence_loss(const std::vector<StepDistribution>& dists,
                            const TrainTarget& target) {
    if (dists.size() != target.steps.size())
        throw std::invalid_argument("distribution/target length mismatch");
    double loss = 0.0;
    for (size_t t = 0; t < dists.size(); ++t) {
        double p = target_step_prob(dists[t], target.steps[t]);
        if (!(p > 0.0))
            throw TargetError("zero-probability target", t);
        loss -= std::log(p);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Teacher-forced forward/backward for one example.

struct ExampleForward {
    EncodeCache enc;
    std::vector<Mat> MV;  // per head
    std::vector<StepCache> steps;
    std::vector<double> step_p;  // target probabilities
    std::vector<Vec> zetas;      // zeta_t after each step
    double loss = 0.0;
};

inline ExampleForward teacher_forward(const Model& m, const HybridSequence& h,
                                      const Schema& s, const TrainTarget& target) {
    ExampleForward f;
    f.enc = encode(h, s, m);
    f.MV = precompute_attention_values(m, f.enc.M);
    const size_t L = target.steps.size();
    f.steps.resize(L);
    f.step_p.resize(L);
    f.zetas.resize(L);
    DecoderState st = initial_decoder_state(f.enc, m.cfg.n);
    for (size_t t = 0; t < L; ++t) {
        Vec e_prev = t == 0 ? m.dec.go_emb : token_embedding(m, target.steps[t - 1].tok);
        DecoderState next;
        StepDistribution dist =
            decoder_step(m, f.enc.M, f.MV, st, e_prev, next, &f.steps[t]);
        double p = target_step_prob(dist, target.steps[t]);
        if (!(p > 1e-300)) throw TargetError("zero-probability target", t);
        f.step_p[t] = p;
        f.loss -= std::log(p);
        f.zetas[t] = selective_read(f.enc.M, dist.alpha.back(),
                                    target.steps[t].positions);
        next.prev_zeta = f.zetas[t];
        st = std::move(next);
    }
    return f;
}

// Backpropagate the cross-entropy loss through decoder and encoder.
inline void teacher_backward(const Model& m, const TrainTarget& target,
                             const ExampleForward& f, Model& grads) {
    const int n = m.cfg.n;
    const int H = m.cfg.heads;
    const int hd = n / H;
    const int P = static_cast<int>(f.enc.M.rows());
    const size_t L = target.steps.size();
    const double scale = 1.0 / std::sqrt(double(n) / double(H));

    Mat dM = Mat::Zero(P, n);
    std::vector<Mat> dMV(H, Mat::Zero(P, hd));
    Vec ds_carry = Vec::Zero(n), dc_carry = Vec::Zero(n);
    Vec dy_next_tail;  // d of (1 - pgen_t) * zeta_t, from step t+1

    for (size_t ti = L; ti-- > 0;) {
        const StepCache& sc = f.steps[ti];
        const TargetStep& st = target.steps[ti];
        const Vec& s_t = sc.lstm.h;
        double pgen = sc.pgen;
        double dp = -1.0 / f.step_p[ti];

        double dpgen = 0.0;
        Vec dalpha_last = Vec::Zero(P);
        Vec dPV = Vec::Zero(kVocabSize);
        // loss at this step
        double copy_sum = 0.0;
        for (int j : st.positions) copy_sum += sc.alpha[H - 1][j];
        if (st.vocab) {
            dpgen += dp * sc.PV[*st.vocab];
            dPV[*st.vocab] += dp * pgen;
        }
        dpgen -= dp * copy_sum;
        for (int j : st.positions) dalpha_last[j] += dp * (1.0 - pgen);

        // influence on the next step's input through (1-pgen)*zeta
        if (ti + 1 < L && dy_next_tail.size()) {
            const Vec& zeta = f.zetas[ti];
            dpgen -= zeta.dot(dy_next_tail);
            Vec dzeta = (1.0 - pgen) * dy_next_tail;
            double K = 0.0;
            for (int j : st.positions) K += sc.alpha[H - 1][j];
            if (!st.positions.empty() && K > 1e-300) {
                for (int j : st.positions) {
                    double a = sc.alpha[H - 1][j];
                    dalpha_last[j] +=
                        dzeta.dot(f.enc.M.row(j).transpose() - zeta) / K;
                    dM.row(j) += (a / K) * dzeta.transpose();
                }
            }
        }

        Vec ds = ds_carry;
        Vec dz = Vec::Zero(n);

        // p_gen = sigmoid(s.w_s + z.w_z + b)
        double du = dpgen * pgen * (1.0 - pgen);
        grads.dec.w_gen_s += du * s_t;
        grads.dec.w_gen_z += du * sc.z;
        grads.dec.b_gen[0] += du;
        ds += du * m.dec.w_gen_s;
        dz += du * m.dec.w_gen_z;

        // vocabulary softmax over [s; z]
        if (st.vocab) {
            Vec dlogits = softmax_backward(sc.PV, dPV);
            grads.dec.W_vocab.noalias() += dlogits * sc.sz.transpose();
            grads.dec.b_vocab += dlogits;
            Vec dsz = m.dec.W_vocab.transpose() * dlogits;
            ds += dsz.head(n);
            dz += dsz.tail(n);
        }

        // multi-head attention
        for (int hh = 0; hh < H; ++hh) {
            Vec dz_h = dz.segment(hh * hd, hd);
            Vec dalpha = f.MV[hh] * dz_h;  // z_h = MV^T alpha
            if (hh == H - 1) dalpha += dalpha_last;
            dMV[hh].noalias() += sc.alpha[hh] * dz_h.transpose();
            Vec de = softmax_backward(sc.alpha[hh], dalpha);
            Vec dsWU = scale * (f.MV[hh].transpose() * de);
            dMV[hh].noalias() += scale * de * sc.sWU[hh].transpose();
            grads.dec.W_U[hh].noalias() += s_t * dsWU.transpose();
            ds += m.dec.W_U[hh] * dsWU;
        }

        // LSTM cell
        Vec dy(2 * n), dhp(n), dcp(n);
        lstm_step_backward(m.dec.cell, sc.lstm, ds, dc_carry, grads.dec.cell, dy,
                           dhp, dcp);
        ds_carry = dhp;
        dc_carry = dcp;

        // head of dy: embedding of the previous token
        Vec de_prev = dy.head(n);
        if (ti == 0) {
            grads.dec.go_emb += de_prev;
        } else {
            const DecTok& prev = target.steps[ti - 1].tok;
            switch (prev.kind) {
                case DecTok::gen: grads.dec.dec_emb.row(prev.vocab) += de_prev.transpose(); break;
                case DecTok::table: grads.dec.copy_kind.row(0) += de_prev.transpose(); break;
                case DecTok::field: grads.dec.copy_kind.row(1) += de_prev.transpose(); break;
                default: grads.dec.copy_kind.row(2) += de_prev.transpose(); break;
            }
        }
        // tail of dy feeds the previous step's pgen/zeta
        dy_next_tail = dy.tail(n);
    }

    // attention value projections accumulate into M
    for (int hh = 0; hh < H; ++hh) {
        dM.noalias() += dMV[hh] * m.dec.W_V[hh].transpose();
        grads.dec.W_V[hh].noalias() += f.enc.M.transpose() * dMV[hh];
    }
    encode_backward(f.enc, m, dM, ds_carry, dc_carry, grads);
}

// ---------------------------------------------------------------------------
// L-inv learning rate: linear warmup to gamma_0, then gamma_0/sqrt(m) - beta*m
// clamped at zero. beta ties the zero crossing to the final step; the paper's
// literal beta = gamma_0/sqrt(n_max) is available behind a flag.

struct TrainConfig {
    double gamma0 = 5e-4;
    long long warmup_steps = 100;
    long long n_max = 5000;
    int batch_size = 8;
    double p_drop = 0.3;
    uint64_t seed = 1;
    bool shuffle_drop = true;
    bool use_paper_beta = false;
    long long eval_every = 250;
    double early_stop_dev_esm = -1.0;  // stop once reached (<=0: disabled)
    int dev_beam = 1;
};

inline double linv_lr(long long step, const TrainConfig& c) {
    if (step < 1 || step > c.n_max)
        throw std::out_of_range("scheduler step outside [1, n_max]");
    if (c.warmup_steps > 0 && step <= c.warmup_steps)
        return c.gamma0 * double(step) / double(c.warmup_steps);
    double m = double(step - c.warmup_steps);
    double M = double(c.n_max - c.warmup_steps);
    double beta = c.use_paper_beta ? c.gamma0 / std::sqrt(double(c.n_max))
                                   : c.gamma0 * std::pow(M, -1.5);
    return std::max(0.0, c.gamma0 / std::sqrt(m) - beta * m);
}

// ---------------------------------------------------------------------------
// Training on a preprocessed corpus.

struct TrainExample {
    const Schema* schema = nullptr;
    std::vector<std::string> question_tokens;
    std::vector<AnchorMatch> anchors;
    std::string gold_sql;
    std::vector<SqlToken> gold_exec;
    std::set<TableId> gold_tables;
};

inline void collect_gold_tables(const Query& q, std::set<TableId>& out) {
    for (TableId t : q.core.from_tables) out.insert(t);
    auto walk_conds = [&](const std::optional<CondList>& conds) {
        if (!conds) return;
        for (const auto& c : conds->conds) {
            if (c.rhs.kind == SqlValue::subquery) collect_gold_tables(*c.rhs.sub, out);
            if (c.op == CmpOp::between && c.rhs2.kind == SqlValue::subquery)
                collect_gold_tables(*c.rhs2.sub, out);
        }
    };
    walk_conds(q.core.where);
    walk_conds(q.core.having);
    if (q.set_op != SetOp::none) collect_gold_tables(*q.rhs, out);
}

inline TrainExample make_train_example(const Schema& schema,
                                       const std::string& question,
                                       const std::vector<AnchorMatch>& anchors,
                                       const std::string& gold_sql) {
    TrainExample ex;
    ex.schema = &schema;
    ex.question_tokens = tokenize_words(question);
    ex.anchors = anchors;
    ex.gold_sql = gold_sql;
    Query q = parse(gold_sql, schema);
    ex.gold_exec = to_exec_order(q, schema);
    collect_gold_tables(q, ex.gold_tables);
    return ex;
}

struct MetricsRow {
    long long step = 0;
    double lr = 0.0, loss = 0.0;
    double dev_em = -1.0, dev_esm = -1.0;
};

struct TrainOutcome {
    Model model;       // final parameters
    Model best;        // best dev E-SM checkpoint (== model when no dev set)
    double best_esm = -1.0;
    std::vector<MetricsRow> log;
    long long steps_run = 0;
    size_t skipped_examples = 0;
};

inline DecodeResult decode_example(const Model& m, const TrainExample& ex,
                                   const DecodeOptions& opts) {
    SerializeOpts so;
    so.value_marker_only = m.cfg.value_marker_only;
    HybridSequence h = serialize(ex.question_tokens, *ex.schema, ex.anchors,
                                 SchemaView::identity(*ex.schema), so);
    PointableView view = pointable_view(h);
    EncodeCache enc = encode(h, *ex.schema, m);
    return beam_search(m, enc, view, *ex.schema, opts);
}

inline std::pair<double, double> evaluate_em_esm(const Model& m,
                                                 const std::vector<TrainExample>& dev,
                                                 const DecodeOptions& opts) {
    if (dev.empty()) return {-1.0, -1.0};
    double em = 0, esm = 0;
    for (const auto& ex : dev) {
        DecodeResult r = decode_example(m, ex, opts);
        em += exact_match(r.sql, ex.gold_sql, *ex.schema);
        esm += exact_set_match(r.sql, ex.gold_sql, *ex.schema);
    }
    return {100.0 * em / dev.size(), 100.0 * esm / dev.size()};
}

inline TrainOutcome train(const std::vector<TrainExample>& corpus,
                          const std::vector<TrainExample>& dev,
                          const ModelConfig& mcfg, const TrainConfig& cfg) {
    if (corpus.empty()) throw std::invalid_argument("empty training corpus");
    TrainOutcome out;
    out.model = init_model(mcfg, cfg.seed);
    Adam adam(out.model);
    Rng aug_rng(cfg.seed ^ 0x5851f42d4c957f2dull);
    Rng order_rng(cfg.seed ^ 0x14057b7ef767814full);

    std::vector<size_t> order(corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    size_t cursor = 0;

    DecodeOptions dev_opts;
    dev_opts.beam = cfg.dev_beam;

    Model grads = zeros_like(out.model);
    for (long long step = 1; step <= cfg.n_max; ++step) {
        visit_params(grads, [](const std::string&, auto& t) { t.setZero(); });
        double batch_loss = 0.0;
        int batch_n = 0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            const TrainExample& ex = corpus[order[cursor++]];
            SchemaView view = cfg.shuffle_drop
                                  ? shuffle_and_drop(*ex.schema, ex.gold_tables,
                                                     cfg.p_drop, aug_rng)
                                  : SchemaView::identity(*ex.schema);
            SerializeOpts so;
            so.value_marker_only = mcfg.value_marker_only;
            HybridSequence h =
                serialize(ex.question_tokens, *ex.schema, ex.anchors, view, so);
            PointableView pv = pointable_view(h);
            try {
                TrainTarget target = build_target(ex.gold_exec, pv);
                ExampleForward f = teacher_forward(out.model, h, *ex.schema, target);
                teacher_backward(out.model, target, f, grads);
                batch_loss += f.loss;
                ++batch_n;
            } catch (const TargetError&) {
                ++out.skipped_examples;
            }
        }
        if (batch_n == 0) continue;
        if (!std::isfinite(batch_loss))
            throw std::runtime_error("non-finite loss at step " +
                                     std::to_string(step));
        visit_params(grads, [&](const std::string&, auto& t) {
            t /= double(batch_n);
        });
        double lr = linv_lr(step, cfg);
        adam.step(out.model, grads, lr);
        out.steps_run = step;

        MetricsRow row{step, lr, batch_loss / batch_n, -1.0, -1.0};
        if (!dev.empty() &&
            (step % cfg.eval_every == 0 || step == cfg.n_max)) {
            auto [em, esm] = evaluate_em_esm(out.model, dev, dev_opts);
            row.dev_em = em;
            row.dev_esm = esm;
            if (esm > out.best_esm) {
                out.best_esm = esm;
                out.best = out.model;
            }
            out.log.push_back(row);
            if (cfg.early_stop_dev_esm > 0 && esm >= cfg.early_stop_dev_esm) break;
        } else {
            out.log.push_back(row);
        }
    }
    if (out.best_esm < 0) out.best = out.model;
    return out;
}

// ---------------------------------------------------------------------------
// Gradient verification: analytic vs. central finite differences on sampled
// entries of every parameter block.

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_block;
};

inline GradCheckResult grad_check(Model& model, const TrainExample& ex,
                                  double eps = 1e-4, int samples_per_block = 4) {
    SchemaView view = SchemaView::identity(*ex.schema);
    SerializeOpts so;
    so.value_marker_only = model.cfg.value_marker_only;
    HybridSequence h =
        serialize(ex.question_tokens, *ex.schema, ex.anchors, view, so);
    PointableView pv = pointable_view(h);
    TrainTarget target = build_target(ex.gold_exec, pv);

    auto loss_of = [&]() {
        return teacher_forward(model, h, *ex.schema, target).loss;
    };
    Model grads = zeros_like(model);
    ExampleForward f = teacher_forward(model, h, *ex.schema, target);
    teacher_backward(model, target, f, grads);

    GradCheckResult result;
    // walk params and grads in lockstep via the visit index
    size_t idx = 0;
    std::vector<std::function<void(int)>> checkers;
    visit_params(model, [&](const std::string& name, auto& tensor) {
        size_t my = idx++;
        checkers.push_back([&, name, my](int) {
            auto& t = tensor;
            // locate the matching grad tensor by walking grads in the same order
            size_t j = 0;
            double* gdata = nullptr;
            Eigen::Index gsize = 0;
            visit_params(grads, [&](const std::string&, auto& g) {
                if (j++ == my) {
                    gdata = g.data();
                    gsize = g.size();
                }
            });
            Rng rng(fnv1a64(name, 17));
            int k = std::min<Eigen::Index>(samples_per_block, t.size());
            for (int s = 0; s < k; ++s) {
                Eigen::Index at = static_cast<Eigen::Index>(rng.uniform(t.size()));
                double orig = t.data()[at];
                t.data()[at] = orig + eps;
                double lp = loss_of();
                t.data()[at] = orig - eps;
                double lm = loss_of();
                t.data()[at] = orig;
                double fd = (lp - lm) / (2 * eps);
                double an = gdata[at];
                double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
                double rel = std::abs(fd - an) / denom;
                if (rel > result.max_rel_err) {
                    result.max_rel_err = rel;
                    result.worst_block = name;
                }
            }
        });
    });
    for (auto& c : checkers) c(0);
    return result;
}

}  // namespace bridge
