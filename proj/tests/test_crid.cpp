#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "agcd/crid.hpp"
#include "doctest.h"

using agcd::Tensor;
namespace cr = agcd::crid;
namespace num = agcd::num;

namespace {

Tensor randu(agcd::SplitMix64& rng, std::size_t r, std::size_t c, double scale = 0.5) {
    Tensor t = Tensor::zeros({r, c});
    for (double& x : t.v) x = (rng.next_double() * 2.0 - 1.0) * scale;
    return t;
}

// Zero f's output layer so [q_tok, q_ch] = b2 exactly.
void pin_queries(num::ParamStore& params, const cr::CMGParams& cfg,
                 const std::vector<double>& q_tok, const std::vector<double>& q_ch) {
    for (double& x : params.at("cmg.f.W2").value.v) x = 0.0;
    Tensor& b2 = params.at("cmg.f.b2").value;
    for (double& x : b2.v) x = 0.0;
    for (std::size_t i = 0; i < q_tok.size(); ++i) b2.v[i] = q_tok[i];
    for (std::size_t i = 0; i < q_ch.size(); ++i) b2.v[cfg.nt_max + i] = q_ch[i];
}

// Weighted mean, matching the scale of the training loss; a sum-sized loss
// drowns the tiny text-path gradients in finite-difference rounding noise.
double weighted_sum(const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        s += (1.0 + 0.07 * static_cast<double>(i % 13)) * t.v[i];
    }
    return s / static_cast<double>(t.size());
}

Tensor weighted_sum_grad(const Tensor& t) {
    Tensor d = Tensor::zeros(t.shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
        d.v[i] = (1.0 + 0.07 * static_cast<double>(i % 13)) / static_cast<double>(t.size());
    }
    return d;
}

}  // namespace

TEST_CASE("zero queries give uniform gates") {
    cr::CridConfig cfg;
    cfg.cmg.d_t = 2;
    cfg.cmg.d = 2;
    cfg.cmg.nt_max = 2;
    cfg.cmg.hidden = 4;
    cfg.cmi.d = 2;
    cfg.cmi.heads = 1;
    num::ParamStore params;
    cr::init_crid_params(params, cfg, 1);
    REQUIRE_FALSE(params.contains("cmg.g.W"));  // d_t == d: identity projection
    pin_queries(params, cfg.cmg, {0.0, 0.0}, {0.0, 0.0});

    Tensor t_emb = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor c_tok = Tensor::zeros({1, 2});
    cr::GuidedText g = cr::cmg_forward(params, cfg.cmg, t_emb, c_tok, nullptr);
    CHECK(g.alpha.v == std::vector<double>{0.5, 0.5});
    CHECK(g.beta.v == std::vector<double>{0.5, 0.5});
    CHECK(g.t_tilde(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(g.t_tilde(1, 1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(g.t_tilde(0, 1) == 0.0);
    CHECK(g.t_tilde(1, 0) == 0.0);
}

TEST_CASE("hand-computed gate values for pinned queries on the identity") {
    cr::CridConfig cfg;
    cfg.cmg.d_t = 2;
    cfg.cmg.d = 2;
    cfg.cmg.nt_max = 2;
    cfg.cmg.hidden = 4;
    cfg.cmi.d = 2;
    cfg.cmi.heads = 1;
    num::ParamStore params;
    cr::init_crid_params(params, cfg, 1);
    pin_queries(params, cfg.cmg, {0.0, 0.0}, {1.0, 0.0});

    Tensor t_emb = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor c_tok = Tensor::zeros({1, 2});
    cr::GuidedText g = cr::cmg_forward(params, cfg.cmg, t_emb, c_tok, nullptr);
    CHECK(g.alpha(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(g.alpha(0, 1) == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(g.t_tilde(0, 0) == doctest::Approx(0.3655).epsilon(2e-4));
    CHECK(g.t_tilde(1, 1) == doctest::Approx(0.1344).epsilon(2e-3));
    CHECK(g.t_tilde(0, 1) == 0.0);
    CHECK(g.t_tilde(1, 0) == 0.0);
}

TEST_CASE("default gate shapes and the token-count bound") {
    cr::CridConfig cfg;
    num::ParamStore params;
    cr::init_crid_params(params, cfg, 2);
    CHECK(params.contains("cmg.g.W"));  // d_t=48 != d=32
    agcd::SplitMix64 rng(5);
    Tensor t_emb = randu(rng, 64, 48);
    Tensor c_tok = randu(rng, 1, 32);
    cr::GuidedText g = cr::cmg_forward(params, cfg.cmg, t_emb, c_tok, nullptr);
    CHECK(g.t_tilde.shape == std::vector<std::size_t>{64, 32});
    CHECK(g.alpha.shape == std::vector<std::size_t>{1, 64});
    CHECK(g.beta.shape == std::vector<std::size_t>{1, 32});

    Tensor too_long = randu(rng, 65, 48);
    CHECK_THROWS_AS(cr::cmg_forward(params, cfg.cmg, too_long, c_tok, nullptr),
                    agcd::ShapeError);
}

TEST_CASE("gates are positive distributions for random inputs") {
    cr::CridConfig cfg;
    num::ParamStore params;
    cr::init_crid_params(params, cfg, 3);
    agcd::SplitMix64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t nt = 1 + rng.next_below(64);
        Tensor t_emb = randu(rng, nt, 48, 2.0);
        Tensor c_tok = randu(rng, 1, 32, 2.0);
        cr::GuidedText g = cr::cmg_forward(params, cfg.cmg, t_emb, c_tok, nullptr);
        double sa = 0.0, sb = 0.0;
        for (double x : g.alpha.v) {
            CHECK(x > 0.0);
            sa += x;
        }
        for (double x : g.beta.v) {
            CHECK(x > 0.0);
            sb += x;
        }
        CHECK(std::abs(sa - 1.0) <= 1e-12);
        CHECK(std::abs(sb - 1.0) <= 1e-12);
    }
}

TEST_CASE("region tokens: block means of the token grid") {
    Tensor p = Tensor::zeros({16, 1});
    for (std::size_t i = 0; i < 16; ++i) p.v[i] = static_cast<double>(i + 1);
    Tensor r = cr::region_tokens(p, {2, 4});
    CHECK(r.shape == std::vector<std::size_t>{5, 1});
    CHECK(r.v == std::vector<double>{3.5, 5.5, 11.5, 13.5, 8.5});
    CHECK(cr::region_token_count(16, {2, 4}) == 5);

    Tensor c = Tensor::full({16, 3}, 1.25);
    Tensor rc = cr::region_tokens(c, {2, 4});
    for (double x : rc.v) CHECK(x == 1.25);

    Tensor unit = cr::region_tokens(p, {1});
    CHECK(unit.v == p.v);

    CHECK_THROWS_AS(cr::region_tokens(p, {3}), agcd::ShapeError);
    CHECK_THROWS_AS(cr::region_tokens(Tensor::zeros({15, 1}), {1}), agcd::ShapeError);
}

TEST_CASE("pooling: identical rows, uniform attention, saturation") {
    cr::CMIParams cfg;
    cfg.d = 2;
    cfg.memory = 2;
    cfg.identity_kv = true;
    num::ParamStore params;
    params.add("cmi.Qh", Tensor::zeros({2, 2}));

    // identical rows: every memory is that row
    Tensor same = Tensor::zeros({8, 2});
    for (std::size_t i = 0; i < 8; ++i) {
        same(i, 0) = 0.3;
        same(i, 1) = -0.7;
    }
    Tensor z = cr::hopfield_pool(params, cfg, same, nullptr);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        CHECK(z(i, 0) == doctest::Approx(0.3).epsilon(1e-14));
        CHECK(z(i, 1) == doctest::Approx(-0.7).epsilon(1e-14));
    }

    // zero queries: memories are the column means (stacked identity rows)
    Tensor eye_stack = Tensor::zeros({8, 2});
    for (std::size_t i = 0; i < 8; ++i) eye_stack(i, i % 2) = 1.0;
    z = cr::hopfield_pool(params, cfg, eye_stack, nullptr);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        CHECK(z(i, 0) == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(z(i, 1) == doctest::Approx(0.5).epsilon(1e-14));
    }

    // saturated softmax picks out the matching row
    cr::CMIParams sat;
    sat.d = 8;
    sat.memory = 1;
    sat.identity_kv = true;
    sat.beta_h = 32.0;
    Tensor x = Tensor::zeros({8, 8});
    for (std::size_t i = 0; i < 8; ++i) x(i, i) = 1.0;  // orthonormal rows
    Tensor qh = Tensor::zeros({1, 8});
    qh(0, 1) = 1.0;  // query equals row 1
    num::ParamStore sp;
    sp.add("cmi.Qh", qh);
    Tensor zs = cr::hopfield_pool(sp, sat, x, nullptr);
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK(std::abs(zs(0, j) - x(1, j)) < 1e-9);
    }
}

TEST_CASE("pooling enforces the memory budget and convexity") {
    cr::CMIParams cfg;
    cfg.d = 4;
    cfg.memory = 3;
    cfg.identity_kv = true;
    agcd::SplitMix64 rng(29);
    num::ParamStore params;
    params.add("cmi.Qh", randu(rng, 3, 4));

    Tensor small = randu(rng, 11, 4);  // 3 * 4 > 11
    CHECK_THROWS_AS(cr::hopfield_pool(params, cfg, small, nullptr), agcd::ConfigError);

    Tensor x = randu(rng, 20, 4, 1.5);
    Tensor z = cr::hopfield_pool(params, cfg, x, nullptr);
    for (std::size_t j = 0; j < 4; ++j) {
        double lo = x(0, j), hi = x(0, j);
        for (std::size_t i = 1; i < x.rows(); ++i) {
            lo = std::min(lo, x(i, j));
            hi = std::max(hi, x(i, j));
        }
        for (std::size_t i = 0; i < z.rows(); ++i) {
            CHECK(z(i, j) >= lo - 1e-12);
            CHECK(z(i, j) <= hi + 1e-12);
        }
    }
}

TEST_CASE("pooling is invariant to joint row permutation of the context") {
    cr::CMIParams cfg;
    cfg.d = 4;
    cfg.memory = 2;
    cfg.identity_kv = true;
    agcd::SplitMix64 rng(31);
    num::ParamStore params;
    params.add("cmi.Qh", randu(rng, 2, 4));
    Tensor x = randu(rng, 12, 4);
    Tensor rev = Tensor::zeros({12, 4});
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 4; ++j) rev(11 - i, j) = x(i, j);
    Tensor z0 = cr::hopfield_pool(params, cfg, x, nullptr);
    Tensor z1 = cr::hopfield_pool(params, cfg, rev, nullptr);
    for (std::size_t i = 0; i < z0.size(); ++i) {
        CHECK(z0.v[i] == doctest::Approx(z1.v[i]).epsilon(1e-12));
    }
}

TEST_CASE("context assembly: L = N + N_r + N_t with an 8x32 memory") {
    cr::CridConfig cfg;
    num::ParamStore params;
    cr::init_crid_params(params, cfg, 7);
    agcd::SplitMix64 rng(41);
    Tensor p = randu(rng, 16, 32);
    Tensor t_tilde = randu(rng, 64, 32);
    cr::CmiCache cache;
    Tensor out = cr::cmi_forward(params, cfg, p, t_tilde, &cache);
    CHECK(cache.x.shape == std::vector<std::size_t>{85, 32});  // 16 + 5 + 64
    CHECK(cache.z.shape == std::vector<std::size_t>{8, 32});
    CHECK(out.shape == std::vector<std::size_t>{16, 32});
}

TEST_CASE("zero output projection leaves the patch tokens bitwise intact") {
    cr::CridConfig cfg;
    cfg.cmi.mlp_identity = true;
    num::ParamStore params;
    cr::init_crid_params(params, cfg, 9);
    for (double& x : params.at("cmi.attn.Wo").value.v) x = 0.0;
    agcd::SplitMix64 rng(43);
    Tensor p = randu(rng, 16, 32);
    Tensor t_tilde = randu(rng, 64, 32);
    cr::CmiCache cache;
    Tensor out = cr::cmi_forward(params, cfg, p, t_tilde, &cache);
    CHECK(cache.p_hat.v == p.v);
    CHECK(out.v == p.v);
}

TEST_CASE("full decoder: shapes, null-prompt control, determinism") {
    cr::CridConfig cfg;
    num::ParamStore params;
    cr::init_crid_params(params, cfg, 13);
    agcd::SplitMix64 rng(47);
    Tensor p = randu(rng, 16, 32);
    Tensor c = randu(rng, 1, 32);
    Tensor t_emb = randu(rng, 1, 48);  // single (null) narrative token
    Tensor out = cr::crid_forward(params, cfg, p, c, t_emb, nullptr);
    CHECK(out.shape == std::vector<std::size_t>{16, 64});
    CHECK(out.all_finite());
    Tensor again = cr::crid_forward(params, cfg, p, c, t_emb, nullptr);
    CHECK(out.v == again.v);
}

TEST_CASE("ablation flags change the context, not the interface") {
    num::ParamStore dummy;
    agcd::SplitMix64 rng(53);
    Tensor p = randu(rng, 16, 32);
    Tensor c = randu(rng, 1, 32);
    Tensor t_emb = randu(rng, 10, 48);
    for (bool use_cmg : {false, true}) {
        for (bool use_region : {false, true}) {
            for (bool use_hopfield : {false, true}) {
                cr::CridConfig cfg;
                cfg.use_cmg = use_cmg;
                cfg.use_region = use_region;
                cfg.use_hopfield = use_hopfield;
                num::ParamStore params;
                cr::init_crid_params(params, cfg, 17);
                cr::CridCache cache;
                Tensor out = cr::crid_forward(params, cfg, p, c, t_emb, &cache);
                CHECK(out.shape == std::vector<std::size_t>{16, 64});
                CHECK(out.all_finite());
                const std::size_t expect_l = 16 + (use_region ? 5u : 0u) + 10;
                // short contexts clamp the memory count to the L/4 budget
                const std::size_t expect_m = std::min<std::size_t>(8, expect_l / 4);
                CHECK(cache.cmi.x.rows() == expect_l);
                CHECK(cache.cmi.z.rows() == (use_hopfield ? expect_m : expect_l));
            }
        }
    }
}

TEST_CASE("analytic decoder gradients match central differences") {
    cr::CridConfig cfg;
    num::ParamStore params;
    cr::init_crid_params(params, cfg, 19);
    agcd::SplitMix64 rng(59);
    Tensor p = randu(rng, 16, 32);
    Tensor c = randu(rng, 1, 32);
    Tensor t_emb = randu(rng, 12, 48);

    auto loss_fn = [&]() {
        return weighted_sum(cr::crid_forward(params, cfg, p, c, t_emb, nullptr));
    };
    params.zero_grads();
    cr::CridCache cache;
    Tensor out = cr::crid_forward(params, cfg, p, c, t_emb, &cache);
    Tensor d_out = weighted_sum_grad(out);
    Tensor d_p, d_c, d_t;
    cr::crid_backward(params, cfg, cache, d_out, d_p, d_c, d_t);
    num::GradCheckReport report = num::grad_check(loss_fn, params, 1e-5, 1e-4);
    INFO("worst ", report.worst_param, " rel err ", report.worst);
    CHECK(report.pass);
}

TEST_CASE("input gradients of the decoder match central differences") {
    cr::CridConfig cfg;
    num::ParamStore params;
    cr::init_crid_params(params, cfg, 19);
    agcd::SplitMix64 rng(61);
    // treat the inputs as parameters so the checker can probe them
    num::ParamStore inputs;
    inputs.add("in.p", randu(rng, 16, 32));
    inputs.add("in.c", randu(rng, 1, 32));
    inputs.add("in.t", randu(rng, 12, 48));
    auto loss_fn = [&]() {
        return weighted_sum(cr::crid_forward(params, cfg, inputs.at("in.p").value,
                                             inputs.at("in.c").value, inputs.at("in.t").value,
                                             nullptr));
    };
    inputs.zero_grads();
    params.zero_grads();
    cr::CridCache cache;
    Tensor out = cr::crid_forward(params, cfg, inputs.at("in.p").value, inputs.at("in.c").value,
                                  inputs.at("in.t").value, &cache);
    Tensor d_out = weighted_sum_grad(out);
    cr::crid_backward(params, cfg, cache, d_out, inputs.at("in.p").grad,
                      inputs.at("in.c").grad, inputs.at("in.t").grad);
    num::GradCheckReport report = num::grad_check(loss_fn, inputs, 1e-5, 1e-4);
    INFO("worst ", report.worst_param, " rel err ", report.worst);
    CHECK(report.pass);
}
