#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "bridge/rng.hpp"

namespace bridge {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Vec sigmoid(const Vec& x) {
    return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline Vec softmax(const Vec& x) {
    Vec e = (x.array() - x.maxCoeff()).exp();
    return e / e.sum();
}

// d(softmax)/dx pullback: given y = softmax(x) and dy, return dx.
inline Vec softmax_backward(const Vec& y, const Vec& dy) {
    double dot = y.dot(dy);
    return y.array() * (dy.array() - dot);
}

// ---------------------------------------------------------------------------
// LSTM cell. Gate layout in the stacked preactivation: [i; f; g; o].

struct LstmParams {
    Mat Wx;  // 4h x in
    Mat Wh;  // 4h x h
    Vec b;   // 4h

    int hidden() const { return static_cast<int>(Wh.cols()); }
    int input() const { return static_cast<int>(Wx.cols()); }
};

struct LstmStepCache {
    Vec x, h_prev, c_prev;
    Vec i, f, g, o, c, h;
};

inline void lstm_step(const LstmParams& p, const Vec& x, const Vec& h_prev,
                      const Vec& c_prev, LstmStepCache& cache) {
    const int h = p.hidden();
    Vec a = p.Wx * x + p.Wh * h_prev + p.b;
    cache.x = x;
    cache.h_prev = h_prev;
    cache.c_prev = c_prev;
    cache.i = sigmoid(a.segment(0, h));
    cache.f = sigmoid(a.segment(h, h));
    cache.g = a.segment(2 * h, h).array().tanh();
    cache.o = sigmoid(a.segment(3 * h, h));
    cache.c = cache.f.cwiseProduct(c_prev) + cache.i.cwiseProduct(cache.g);
    cache.h = cache.o.cwiseProduct(cache.c.array().tanh().matrix());
}

// Accumulates parameter gradients; returns gradients w.r.t. x, h_prev, c_prev.
inline void lstm_step_backward(const LstmParams& p, const LstmStepCache& cc,
                               const Vec& dh, const Vec& dc_in, LstmParams& grad,
                               Vec& dx, Vec& dh_prev, Vec& dc_prev) {
    const int h = p.hidden();
    Vec tc = cc.c.array().tanh();
    Vec do_ = dh.cwiseProduct(tc);
    Vec dc = dc_in + dh.cwiseProduct(cc.o).cwiseProduct(
                         (1.0 - tc.array().square()).matrix());
    Vec di = dc.cwiseProduct(cc.g);
    Vec df = dc.cwiseProduct(cc.c_prev);
    Vec dg = dc.cwiseProduct(cc.i);
    dc_prev = dc.cwiseProduct(cc.f);

    Vec da(4 * h);
    da.segment(0, h) = di.cwiseProduct(cc.i).cwiseProduct((1.0 - cc.i.array()).matrix());
    da.segment(h, h) = df.cwiseProduct(cc.f).cwiseProduct((1.0 - cc.f.array()).matrix());
    da.segment(2 * h, h) = dg.cwiseProduct((1.0 - cc.g.array().square()).matrix());
    da.segment(3 * h, h) =
        do_.cwiseProduct(cc.o).cwiseProduct((1.0 - cc.o.array()).matrix());

    grad.Wx.noalias() += da * cc.x.transpose();
    grad.Wh.noalias() += da * cc.h_prev.transpose();
    grad.b += da;
    dx.noalias() = p.Wx.transpose() * da;
    dh_prev.noalias() = p.Wh.transpose() * da;
}

// ---------------------------------------------------------------------------
// Bi-directional single-layer LSTM. Output dim = 2 * per-direction hidden.

struct BiLstmParams {
    LstmParams fwd, bwd;
    int out() const { return 2 * fwd.hidden(); }
};

struct BiLstmCache {
    std::vector<LstmStepCache> fwd, bwd;
};

struct BiLstmOut {
    Mat states;        // len x out
    Vec final_h, final_c;  // concat of directions, each out/2
};

inline BiLstmOut bilstm_forward(const BiLstmParams& p, const Mat& inputs,
                                BiLstmCache& cache) {
    const int len = static_cast<int>(inputs.rows());
    const int h = p.fwd.hidden();
    cache.fwd.resize(len);
    cache.bwd.resize(len);
    BiLstmOut out;
    out.states.resize(len, 2 * h);
    Vec hh = Vec::Zero(h), cc = Vec::Zero(h);
    for (int t = 0; t < len; ++t) {
        lstm_step(p.fwd, inputs.row(t).transpose(), hh, cc, cache.fwd[t]);
        hh = cache.fwd[t].h;
        cc = cache.fwd[t].c;
        out.states.row(t).segment(0, h) = hh.transpose();
    }
    Vec fh = hh, fc = cc;
    hh.setZero();
    cc.setZero();
    for (int t = len - 1; t >= 0; --t) {
        lstm_step(p.bwd, inputs.row(t).transpose(), hh, cc, cache.bwd[t]);
        hh = cache.bwd[t].h;
        cc = cache.bwd[t].c;
        out.states.row(t).segment(h, h) = hh.transpose();
    }
    out.final_h.resize(2 * h);
    out.final_h << fh, hh;
    out.final_c.resize(2 * h);
    out.final_c << fc, cc;
    return out;
}

// dstates: len x out; dfinal_h/dfinal_c may be empty (no gradient).
inline Mat bilstm_backward(const BiLstmParams& p, const BiLstmCache& cache,
                           const Mat& dstates, const Vec& dfinal_h,
                           const Vec& dfinal_c, BiLstmParams& grad) {
    const int len = static_cast<int>(dstates.rows());
    const int h = p.fwd.hidden();
    Mat dinputs = Mat::Zero(len, p.fwd.input());
    Vec dh = Vec::Zero(h), dc = Vec::Zero(h), dx(p.fwd.input()), dhp(h), dcp(h);
    // forward direction: iterate back from the last step
    if (dfinal_h.size()) dh = dfinal_h.segment(0, h);
    if (dfinal_c.size()) dc = dfinal_c.segment(0, h);
    for (int t = len - 1; t >= 0; --t) {
        dh += dstates.row(t).segment(0, h).transpose();
        lstm_step_backward(p.fwd, cache.fwd[t], dh, dc, grad.fwd, dx, dhp, dcp);
        dinputs.row(t) += dx.transpose();
        dh = dhp;
        dc = dcp;
    }
    // backward direction: its "last" step is t = 0
    dh.setZero();
    dc.setZero();
    if (dfinal_h.size()) dh = dfinal_h.segment(h, h);
    if (dfinal_c.size()) dc = dfinal_c.segment(h, h);
    for (int t = 0; t < len; ++t) {
        dh += dstates.row(t).segment(h, h).transpose();
        lstm_step_backward(p.bwd, cache.bwd[t], dh, dc, grad.bwd, dx, dhp, dcp);
        dinputs.row(t) += dx.transpose();
        dh = dhp;
        dc = dcp;
    }
    return dinputs;
}

// ---------------------------------------------------------------------------
// Initialization

inline Mat xavier(int rows, int cols, Rng& rng) {
    double s = std::sqrt(6.0 / double(rows + cols));
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-s, s);
    return m;
}

inline Mat uniform_init(int rows, int cols, double scale, Rng& rng) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-scale, scale);
    return m;
}

// Orthonormal columns via QR of a gaussian matrix.
inline Mat orthogonal_init(int rows, int cols, Rng& rng) {
    Mat a(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) a(i, j) = rng.gaussian();
    Eigen::HouseholderQR<Mat> qr(a);
    Mat q = qr.householderQ() * Mat::Identity(rows, cols);
    return q;
}

inline LstmParams lstm_init(int in, int hidden, Rng& rng) {
    LstmParams p;
    p.Wx = xavier(4 * hidden, in, rng);
    p.Wh = orthogonal_init(4 * hidden, hidden, rng);
    p.b = Vec::Zero(4 * hidden);
    return p;
}

inline LstmParams lstm_zeros(int in, int hidden) {
    return {Mat::Zero(4 * hidden, in), Mat::Zero(4 * hidden, hidden),
            Vec::Zero(4 * hidden)};
}

inline BiLstmParams bilstm_init(int in, int out, Rng& rng) {
    return {lstm_init(in, out / 2, rng), lstm_init(in, out / 2, rng)};
}

inline BiLstmParams bilstm_zeros(int in, int out) {
    return {lstm_zeros(in, out / 2), lstm_zeros(in, out / 2)};
}

}  // namespace bridge
