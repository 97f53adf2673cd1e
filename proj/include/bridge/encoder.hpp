#pragma once

#include <vector>

#include "bridge/hybrid.hpp"
#include "bridge/model.hpp"
#include "bridge/schema.hpp"

namespace bridge {

// Forward activations kept for backpropagation.
struct EncodeCache {
    // embedding row per X position: (is_special, row index)
    std::vector<std::pair<bool, int>> emb_rows;
    Mat E;   // |X| x d
    BiLstmCache pre_cache;
    Mat U;   // |X| x n
    BiLstmCache ctx_cache;
    Mat hX;  // |X| x n
    BiLstmCache q_cache;
    Mat hQ;  // |Q| x n

    struct FuseCache {
        size_t x_pos = 0;
        int u = -1, v = -1, w = -1;  // -1: zero placeholder block (tables)
        Vec input;                   // 4n
        Vec pre;                     // n, pre-ReLU
    };
    std::vector<FuseCache> fuse;  // one per h_S row (tables then fields)
    Mat hS;  // (|T|+|C|) x n

    Vec init_h, init_c;  // decoder initial state (question encoder finals)
    Mat M;               // (|Q|+|S|) x n = [hQ; hS]

    size_t question_begin = 0, question_len = 0;
};

// g([h; f_pri(u); f_for(v); f_type(w)]) with ReLU; tables pass zero blocks.
inline Vec fuse_metadata(const EncoderParams& p, const Vec& base, int u, int v,
                         int w, EncodeCache::FuseCache* cache = nullptr) {
    const int n = static_cast<int>(base.size());
    Vec input = Vec::Zero(4 * n);
    input.segment(0, n) = base;
    if (u >= 0) input.segment(n, n) = p.f_pri.row(u).transpose();
    if (v >= 0) input.segment(2 * n, n) = p.f_for.row(v).transpose();
    if (w >= 0) input.segment(3 * n, n) = p.f_type.row(w).transpose();
    Vec pre = p.W_g * input + p.b_g;
    if (cache) {
        cache->u = u;
        cache->v = v;
        cache->w = w;
        cache->input = input;
        cache->pre = pre;
    }
    return pre.cwiseMax(0.0);
}

inline EncodeCache encode(const HybridSequence& h, const Schema& s,
                          const Model& model) {
    const ModelConfig& cfg = model.cfg;
    const EncoderParams& p = model.enc;
    const int len = static_cast<int>(h.tokens.size());
    if (len == 0) throw std::invalid_argument("empty hybrid sequence");
    EncodeCache c;
    c.question_begin = h.question_begin;
    c.question_len = h.question_len();

    c.E.resize(len, cfg.d);
    c.emb_rows.resize(len);
    for (int i = 0; i < len; ++i) {
        const XToken& t = h.tokens[i];
        if (t.kind == XKind::special) {
            int row = static_cast<int>(t.special);
            c.emb_rows[i] = {true, row};
            c.E.row(i) = p.special_emb.row(row);
        } else {
            int row = word_bucket(cfg, t.surface);
            c.emb_rows[i] = {false, row};
            c.E.row(i) = p.word_emb.row(row);
        }
    }

    c.U = bilstm_forward(p.pre, c.E, c.pre_cache).states;
    c.hX = bilstm_forward(p.ctx, c.U, c.ctx_cache).states;

    Mat q_in = c.hX.middleRows(h.question_begin, h.question_len());
    BiLstmOut q_out = bilstm_forward(p.q, q_in, c.q_cache);
    c.hQ = q_out.states;
    c.init_h = q_out.final_h;
    c.init_c = q_out.final_c;

    const size_t n_slots = h.tables.size() + h.fields.size();
    c.hS.resize(n_slots, cfg.n);
    c.fuse.resize(n_slots);
    size_t row = 0;
    for (size_t k = 0; k < h.tables.size(); ++k, ++row) {
        c.fuse[row].x_pos = h.t_positions[k];
        Vec base = c.hX.row(h.t_positions[k]).transpose();
        c.hS.row(row) = fuse_metadata(p, base, -1, -1, -1, &c.fuse[row]).transpose();
    }
    for (size_t k = 0; k < h.fields.size(); ++k, ++row) {
        const Field& f = s.fields[h.fields[k]];
        c.fuse[row].x_pos = h.c_positions[k];
        Vec base = c.hX.row(h.c_positions[k]).transpose();
        int u = -1, v = -1, w = -1;
        if (cfg.use_metadata) {
            u = f.is_primary_key ? 1 : 0;
            v = f.in_foreign_pair ? 1 : 0;
            w = static_cast<int>(f.type);
        }
        c.hS.row(row) = fuse_metadata(p, base, u, v, w, &c.fuse[row]).transpose();
    }

    c.M.resize(c.hQ.rows() + c.hS.rows(), cfg.n);
    c.M << c.hQ, c.hS;
    return c;
}

// dM covers [hQ; hS]; dinit_h/dinit_c flow into the question encoder finals.
inline void encode_backward(const EncodeCache& c, const Model& model,
                            const Mat& dM, const Vec& dinit_h, const Vec& dinit_c,
                            Model& grads) {
    const EncoderParams& p = model.enc;
    EncoderParams& g = grads.enc;
    const int n = model.cfg.n;
    const int len = static_cast<int>(c.hX.rows());

    Mat dhQ = dM.topRows(c.hQ.rows());
    Mat dhS = dM.bottomRows(c.hS.rows());

    Mat dhX = Mat::Zero(len, n);
    // metadata fusion backward
    for (Eigen::Index r = 0; r < dhS.rows(); ++r) {
        const auto& fc = c.fuse[r];
        Vec dout = dhS.row(r).transpose();
        Vec dpre = (fc.pre.array() > 0.0).select(dout, 0.0);
        g.W_g.noalias() += dpre * fc.input.transpose();
        g.b_g += dpre;
        Vec dinput = p.W_g.transpose() * dpre;
        dhX.row(fc.x_pos) += dinput.segment(0, n).transpose();
        if (fc.u >= 0) g.f_pri.row(fc.u) += dinput.segment(n, n).transpose();
        if (fc.v >= 0) g.f_for.row(fc.v) += dinput.segment(2 * n, n).transpose();
        if (fc.w >= 0) g.f_type.row(fc.w) += dinput.segment(3 * n, n).transpose();
    }

    // question re-encoder backward
    Mat dq_in = bilstm_backward(p.q, c.q_cache, dhQ, dinit_h, dinit_c, g.q);
    dhX.middleRows(c.question_begin, c.question_len) += dq_in;

    Mat dU = bilstm_backward(p.ctx, c.ctx_cache, dhX, Vec(), Vec(), g.ctx);
    Mat dE = bilstm_backward(p.pre, c.pre_cache, dU, Vec(), Vec(), g.pre);

    for (int i = 0; i < len; ++i) {
        auto [is_special, row] = c.emb_rows[i];
        if (is_special)
            g.special_emb.row(row) += dE.row(i);
        else
            g.word_emb.row(row) += dE.row(i);
    }
}

}  // namespace bridge
