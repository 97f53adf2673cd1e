#include <catch2/catch_amalgamated.hpp>

#include "bridge/encoder.hpp"
#include "support/toy_fixture.hpp"

using namespace bridge;

TEST_CASE("encoder output shapes follow the contract") {
    const Schema& s = testsupport::nn_schema();
    ModelConfig cfg = testsupport::small_config();
    Model m = init_model(cfg, 42);
    auto q = tokenize_words("how many cats are there ?");
    auto h = serialize(q, s, {}, SchemaView::identity(s));
    EncodeCache c = encode(h, s, m);

    CHECK(c.hX.rows() == (Eigen::Index)h.tokens.size());
    CHECK(c.hX.cols() == cfg.n);
    CHECK(c.hQ.rows() == (Eigen::Index)q.size());
    CHECK(c.hS.rows() == (Eigen::Index)(h.tables.size() + h.fields.size()));
    CHECK(c.M.rows() == c.hQ.rows() + c.hS.rows());
    CHECK(c.init_h.size() == cfg.n);
    CHECK(c.init_c.size() == cfg.n);
}

TEST_CASE("zero-weight LSTMs produce constant rows") {
    const Schema& s = testsupport::nn_schema();
    ModelConfig cfg = testsupport::small_config();
    Model m = init_model(cfg, 1);
    m.enc.pre = bilstm_zeros(cfg.d, cfg.n);
    m.enc.ctx = bilstm_zeros(cfg.n, cfg.n);
    auto h = serialize(tokenize_words("hello there"), s, {}, SchemaView::identity(s));
    EncodeCache c = encode(h, s, m);
    CHECK(c.hX.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("metadata fusion identity and clamping cases") {
    const Schema& s = testsupport::nn_schema();
    (void)s;
    ModelConfig cfg = testsupport::small_config();
    Model m = init_model(cfg, 3);
    const int n = cfg.n;

    SECTION("identity block recovers a nonnegative base") {
        m.enc.W_g.setZero();
        m.enc.W_g.block(0, 0, n, n).setIdentity();
        m.enc.b_g.setZero();
        Vec base = Vec::LinSpaced(n, 0.0, 1.0);
        Vec out = fuse_metadata(m.enc, base, 0, 1, 2);
        CHECK((out - base).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("negative bias with zero weights clamps to zero") {
        m.enc.W_g.setZero();
        m.enc.b_g = Vec::Constant(n, -1.0);
        Vec out = fuse_metadata(m.enc, Vec::Ones(n), -1, -1, -1);
        CHECK(out.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("primary-key flip acts through W_g on the feature delta") {
        m.enc.b_g.setZero();
        Vec base = Vec::Ones(n);
        Vec delta_in = Vec::Zero(4 * n);
        delta_in.segment(n, n) =
            (m.enc.f_pri.row(1) - m.enc.f_pri.row(0)).transpose();
        Vec expected_pre = m.enc.W_g * delta_in;
        EncodeCache::FuseCache c1, c2;
        fuse_metadata(m.enc, base, 0, 0, 0, &c1);
        fuse_metadata(m.enc, base, 1, 0, 0, &c2);
        CHECK((c2.pre - c1.pre - expected_pre).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("encoding is deterministic under a fixed seed") {
    const Schema& s = testsupport::nn_schema();
    ModelConfig cfg = testsupport::small_config();
    Model m1 = init_model(cfg, 7);
    Model m2 = init_model(cfg, 7);
    auto h = serialize(tokenize_words("list all pets"), s, {}, SchemaView::identity(s));
    EncodeCache a = encode(h, s, m1);
    EncodeCache b = encode(h, s, m2);
    CHECK((a.M - b.M).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("table rows use zero placeholder metadata") {
    const Schema& s = testsupport::nn_schema();
    ModelConfig cfg = testsupport::small_config();
    Model m = init_model(cfg, 9);
    auto h = serialize(tokenize_words("hi"), s, {}, SchemaView::identity(s));
    EncodeCache c = encode(h, s, m);
    Vec base = c.hX.row(h.t_positions[0]).transpose();
    Vec expect = fuse_metadata(m.enc, base, -1, -1, -1);
    CHECK((c.hS.row(0).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("permuting tables permutes the schema rows") {
    const Schema& s = testsupport::nn_schema();
    ModelConfig cfg = testsupport::small_config();
    Model m = init_model(cfg, 11);
    auto q = tokenize_words("hello");
    SchemaView ident = SchemaView::identity(s);
    SchemaView swapped;
    swapped.table_order = {1, 0};
    auto h1 = serialize(q, s, {}, ident);
    auto h2 = serialize(q, s, {}, swapped);
    EncodeCache c1 = encode(h1, s, m);
    EncodeCache c2 = encode(h2, s, m);
    // same tables appear; their h_S rows line up with the view order
    REQUIRE(h1.tables == std::vector<TableId>{0, 1});
    REQUIRE(h2.tables == std::vector<TableId>{1, 0});
    CHECK(c1.hS.rows() == c2.hS.rows());
}
