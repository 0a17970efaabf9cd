#include "agcd/crid.hpp"

#include <cmath>

namespace agcd::crid {

using agcd::Tensor;

namespace {

Tensor seeded_uniform(SplitMix64& rng, std::vector<std::size_t> shape, double bound) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.v) x = rng.uniform(-bound, bound);
    return t;
}

Tensor col_sums(const Tensor& m) {
    Tensor out = Tensor::zeros({1, m.cols()});
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
    return out;
}

void accum_bias(ParamStore& params, const std::string& name, const Tensor& d_rows) {
    Tensor s = col_sums(d_rows);
    Tensor& g = params.at(name).grad;
    for (std::size_t j = 0; j < g.size(); ++j) g.v[j] += s.v[j];
}

std::size_t grid_side(std::size_t n_tokens) {
    auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_tokens))));
    if (side * side != n_tokens) {
        throw ShapeError("token count " + std::to_string(n_tokens) + " is not a square grid");
    }
    return side;
}

}  // namespace

void CMGParams::validate() const {
    if (d == 0 || d_t == 0 || nt_max == 0 || hidden == 0) {
        throw ConfigError("cross-modal gate dimensions must be positive");
    }
}

double CMIParams::effective_beta() const {
    return beta_h > 0.0 ? beta_h : 1.0 / std::sqrt(static_cast<double>(d));
}

void CMIParams::validate() const {
    if (d % heads != 0) throw ConfigError("decoder width must be divisible by head count");
    if (memory == 0) throw ConfigError("memory token count must be positive");
}

void init_crid_params(ParamStore& params, const CridConfig& cfg, std::uint64_t seed) {
    cfg.cmg.validate();
    cfg.cmi.validate();
    SplitMix64 rng(seed);
    const std::size_t d = cfg.cmi.d;
    const double bd = 1.0 / std::sqrt(static_cast<double>(d));
    if (!cfg.cmg.identity_g()) {
        params.add("cmg.g.W", seeded_uniform(rng, {cfg.cmg.d_t, d},
                                             1.0 / std::sqrt(static_cast<double>(cfg.cmg.d_t))));
    }
    const std::size_t fh = cfg.cmg.hidden;
    params.add("cmg.f.W1", seeded_uniform(rng, {d, fh}, bd));
    params.add("cmg.f.b1", Tensor::zeros({1, fh}));
    params.add("cmg.f.W2", seeded_uniform(rng, {fh, cfg.cmg.nt_max + d},
                                          1.0 / std::sqrt(static_cast<double>(fh))));
    params.add("cmg.f.b2", Tensor::zeros({1, cfg.cmg.nt_max + d}));
    // Pooling queries act as prototypes in token space, so they are drawn at
    // data scale rather than 1/fan-in; a 1/sqrt(d) init leaves the pooling
    // attention near-uniform and every memory token equal to the context mean.
    params.add("cmi.Qh", seeded_uniform(rng, {cfg.cmi.memory, d}, 1.0));
    if (!cfg.cmi.identity_kv) {
        params.add("cmi.pool.K", seeded_uniform(rng, {d, d}, bd));
        params.add("cmi.pool.V", seeded_uniform(rng, {d, d}, bd));
    }
    for (const char* w : {"cmi.attn.Wq", "cmi.attn.Wk", "cmi.attn.Wv", "cmi.attn.Wo"}) {
        params.add(w, seeded_uniform(rng, {d, d}, bd));
    }
    const std::size_t hdim = cfg.cmi.mlp_ratio * d;
    params.add("cmi.mlp.W1", seeded_uniform(rng, {d, hdim}, bd));
    params.add("cmi.mlp.b1", Tensor::zeros({1, hdim}));
    params.add("cmi.mlp.W2",
               seeded_uniform(rng, {hdim, d}, 1.0 / std::sqrt(static_cast<double>(hdim))));
    params.add("cmi.mlp.b2", Tensor::zeros({1, d}));
    params.add("cmi.head.W", seeded_uniform(rng, {d, cfg.patch_dim}, bd));
    params.add("cmi.head.b", Tensor::zeros({1, cfg.patch_dim}));
}

GuidedText cmg_forward(const ParamStore& params, const CMGParams& cfg, const Tensor& t_emb,
                       const Tensor& c_tok, CmgCache* cache) {
    const std::size_t nt = t_emb.rows();
    if (nt > cfg.nt_max) {
        throw ShapeError("narrative token count " + std::to_string(nt) + " exceeds maximum " +
                         std::to_string(cfg.nt_max));
    }
    if (t_emb.cols() != cfg.d_t) {
        throw ShapeError("narrative embedding width " + std::to_string(t_emb.cols()) +
                         " does not match configured d_t");
    }
    if (c_tok.rows() != 1 || c_tok.cols() != cfg.d) {
        throw ShapeError("global state token must be 1 x d");
    }
    Tensor u = cfg.identity_g() ? t_emb : num::matmul(t_emb, params.at("cmg.g.W").value);
    Tensor f_h_pre = num::add_row_broadcast(num::matmul(c_tok, params.at("cmg.f.W1").value),
                                            params.at("cmg.f.b1").value);
    Tensor f_h = num::gelu(f_h_pre);
    Tensor f_out = num::add_row_broadcast(num::matmul(f_h, params.at("cmg.f.W2").value),
                                          params.at("cmg.f.b2").value);
    Tensor q_tok = Tensor::zeros({1, nt});
    for (std::size_t j = 0; j < nt; ++j) q_tok(0, j) = f_out(0, j);
    Tensor q_ch = Tensor::zeros({1, cfg.d});
    for (std::size_t j = 0; j < cfg.d; ++j) q_ch(0, j) = f_out(0, cfg.nt_max + j);

    Tensor alpha = num::softmax_rows(num::matmul(q_ch, num::transpose(u)));  // 1 x nt
    Tensor u1 = num::broadcast_scale(u, alpha, num::Axis::Rows);
    Tensor beta = num::softmax_rows(num::matmul(q_tok, u1));  // 1 x d
    Tensor t_tilde = num::broadcast_scale(u1, beta, num::Axis::Cols);
    if (cache) {
        cache->t_in = t_emb;
        cache->c_in = c_tok;
        cache->u = u;
        cache->f_h_pre = std::move(f_h_pre);
        cache->f_h = std::move(f_h);
        cache->q_tok = q_tok;
        cache->q_ch = q_ch;
        cache->alpha = alpha;
        cache->beta = beta;
        cache->u1 = u1;
    }
    return {std::move(t_tilde), std::move(alpha), std::move(beta)};
}

void cmg_backward(ParamStore& params, const CMGParams& cfg, const CmgCache& cache,
                  const Tensor& d_t_tilde, Tensor& d_t_emb, Tensor& d_c) {
    const std::size_t nt = cache.u.rows(), d = cfg.d;
    Tensor du1 = Tensor::zeros(cache.u1.shape);
    Tensor dbeta = Tensor::zeros({1, d});
    num::broadcast_scale_backward(cache.u1, cache.beta, num::Axis::Cols, d_t_tilde, du1, dbeta);

    // beta = softmax(q_tok u1)
    Tensor ds2 = num::softmax_rows_backward(cache.beta, dbeta);
    Tensor dq_tok = Tensor::zeros({1, nt});
    num::matmul_backward(cache.q_tok, cache.u1, ds2, dq_tok, du1);

    Tensor du = Tensor::zeros(cache.u.shape);
    Tensor dalpha = Tensor::zeros({1, nt});
    num::broadcast_scale_backward(cache.u, cache.alpha, num::Axis::Rows, du1, du, dalpha);

    // alpha = softmax(q_ch u^T)
    Tensor ds1 = num::softmax_rows_backward(cache.alpha, dalpha);
    Tensor dq_ch = Tensor::zeros({1, d});
    Tensor dut = Tensor::zeros({d, nt});
    num::matmul_backward(cache.q_ch, num::transpose(cache.u), ds1, dq_ch, dut);
    du = num::add(du, num::transpose(dut));

    // reassemble the split query gradient and run f backward
    Tensor df_out = Tensor::zeros({1, cfg.nt_max + d});
    for (std::size_t j = 0; j < nt; ++j) df_out(0, j) = dq_tok(0, j);
    for (std::size_t j = 0; j < d; ++j) df_out(0, cfg.nt_max + j) = dq_ch(0, j);
    Tensor df_h = Tensor::zeros(cache.f_h.shape);
    num::matmul_backward(cache.f_h, params.at("cmg.f.W2").value, df_out, df_h,
                         params.at("cmg.f.W2").grad);
    accum_bias(params, "cmg.f.b2", df_out);
    Tensor df_h_pre = num::gelu_backward(cache.f_h_pre, df_h);
    if (!d_c.same_shape(cache.c_in)) d_c = Tensor::zeros(cache.c_in.shape);
    num::matmul_backward(cache.c_in, params.at("cmg.f.W1").value, df_h_pre, d_c,
                         params.at("cmg.f.W1").grad);
    accum_bias(params, "cmg.f.b1", df_h_pre);

    if (!d_t_emb.same_shape(cache.t_in)) d_t_emb = Tensor::zeros(cache.t_in.shape);
    if (cfg.identity_g()) {
        for (std::size_t i = 0; i < du.size(); ++i) d_t_emb.v[i] += du.v[i];
    } else {
        num::matmul_backward(cache.t_in, params.at("cmg.g.W").value, du, d_t_emb,
                             params.at("cmg.g.W").grad);
    }
}

std::size_t region_token_count(std::size_t n_tokens, const std::vector<std::size_t>& scales) {
    const std::size_t side = grid_side(n_tokens);
    std::size_t total = 0;
    for (std::size_t s : scales) {
        if (s == 0 || side % s != 0) {
            throw ShapeError("pooling scale " + std::to_string(s) + " does not divide grid side");
        }
        total += (side / s) * (side / s);
    }
    return total;
}

Tensor region_tokens(const Tensor& p_tokens, const std::vector<std::size_t>& scales) {
    const std::size_t n = p_tokens.rows(), d = p_tokens.cols();
    const std::size_t side = grid_side(n);
    const std::size_t n_r = region_token_count(n, scales);
    Tensor grid = p_tokens;
    grid.shape = {side, side, d};
    Tensor out = Tensor::zeros({n_r, d});
    std::size_t row = 0;
    for (std::size_t s : scales) {
        Tensor pooled = num::avg_pool_grid(grid, s);
        const std::size_t ps = side / s;
        for (std::size_t i = 0; i < ps * ps; ++i)
            for (std::size_t j = 0; j < d; ++j) out(row + i, j) = pooled.v[i * d + j];
        row += ps * ps;
    }
    return out;
}

Tensor region_tokens_backward(const Tensor& d_out, std::size_t n_tokens,
                              const std::vector<std::size_t>& scales) {
    const std::size_t d = d_out.cols();
    const std::size_t side = grid_side(n_tokens);
    Tensor dp = Tensor::zeros({n_tokens, d});
    std::size_t row = 0;
    for (std::size_t s : scales) {
        const std::size_t ps = side / s;
        Tensor dpool = Tensor::zeros({ps, ps, d});
        for (std::size_t i = 0; i < ps * ps; ++i)
            for (std::size_t j = 0; j < d; ++j) dpool.v[i * d + j] = d_out(row + i, j);
        Tensor dgrid = num::avg_pool_grid_backward(dpool, s);
        for (std::size_t i = 0; i < dp.size(); ++i) dp.v[i] += dgrid.v[i];
        row += ps * ps;
    }
    return dp;
}

namespace {

// Short contexts (e.g. the single-token null prompt) cannot support the full
// memory budget; the decoder pools to the largest count the M <= L/4 rule
// allows, using a prefix of the query bank.
CMIParams effective_pool_params(const CMIParams& cfg, std::size_t l) {
    CMIParams eff = cfg;
    eff.memory = std::max<std::size_t>(1, std::min(cfg.memory, l / 4));
    return eff;
}

}  // namespace

Tensor hopfield_pool(const ParamStore& params, const CMIParams& cfg, const Tensor& x,
                     PoolCache* cache) {
    const std::size_t l = x.rows();
    if (cfg.memory * 4 > l) {
        throw ConfigError("memory token count " + std::to_string(cfg.memory) +
                          " exceeds a quarter of the context length " + std::to_string(l));
    }
    const Tensor& qh_full = params.at("cmi.Qh").value;
    if (cfg.memory > qh_full.rows()) {
        throw ConfigError("memory token count exceeds the pooling query bank");
    }
    Tensor qh = Tensor::zeros({cfg.memory, qh_full.cols()});
    for (std::size_t i = 0; i < qh.size(); ++i) qh.v[i] = qh_full.v[i];
    Tensor xk = cfg.identity_kv ? x : num::matmul(x, params.at("cmi.pool.K").value);
    Tensor xv = cfg.identity_kv ? x : num::matmul(x, params.at("cmi.pool.V").value);
    Tensor scores = num::matmul(qh, num::transpose(xk));
    const double b = cfg.effective_beta();
    for (double& s : scores.v) s *= b;
    Tensor a = num::softmax_rows(scores);
    Tensor z = num::matmul(a, xv);
    if (cache) {
        cache->x = x;
        cache->xk = std::move(xk);
        cache->xv = std::move(xv);
        cache->a = std::move(a);
    }
    return z;
}

Tensor hopfield_pool_backward(ParamStore& params, const CMIParams& cfg, const PoolCache& cache,
                              const Tensor& d_z) {
    Tensor da = Tensor::zeros(cache.a.shape);
    Tensor dxv = Tensor::zeros(cache.xv.shape);
    num::matmul_backward(cache.a, cache.xv, d_z, da, dxv);
    Tensor ds = num::softmax_rows_backward(cache.a, da);
    const double b = cfg.effective_beta();
    for (double& s : ds.v) s *= b;
    const std::size_t m = cache.a.rows();
    Tensor& qh_full = params.at("cmi.Qh").value;
    Tensor qh = Tensor::zeros({m, qh_full.cols()});
    for (std::size_t i = 0; i < qh.size(); ++i) qh.v[i] = qh_full.v[i];
    Tensor dqh = Tensor::zeros(qh.shape);
    Tensor dxkt = Tensor::zeros({cache.xk.cols(), cache.xk.rows()});
    num::matmul_backward(qh, num::transpose(cache.xk), ds, dqh, dxkt);
    Tensor& qh_grad = params.at("cmi.Qh").grad;
    for (std::size_t i = 0; i < dqh.size(); ++i) qh_grad.v[i] += dqh.v[i];
    Tensor dxk = num::transpose(dxkt);
    Tensor dx = Tensor::zeros(cache.x.shape);
    if (cfg.identity_kv) {
        for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] = dxk.v[i] + dxv.v[i];
    } else {
        num::matmul_backward(cache.x, params.at("cmi.pool.K").value, dxk, dx,
                             params.at("cmi.pool.K").grad);
        num::matmul_backward(cache.x, params.at("cmi.pool.V").value, dxv, dx,
                             params.at("cmi.pool.V").grad);
    }
    return dx;
}

Tensor cmi_forward(const ParamStore& params, const CridConfig& cfg, const Tensor& p_tokens,
                   const Tensor& t_tilde, CmiCache* cache) {
    const std::size_t n = p_tokens.rows(), d = cfg.cmi.d;
    if (p_tokens.cols() != d || t_tilde.cols() != d) {
        throw ShapeError("token width mismatch in region interaction decoder");
    }
    Tensor region;
    if (cfg.use_region) region = region_tokens(p_tokens, cfg.cmi.scales);
    const std::size_t n_r = cfg.use_region ? region.rows() : 0;
    const std::size_t l = n + n_r + t_tilde.rows();
    Tensor x = Tensor::zeros({l, d});
    std::size_t row = 0;
    std::vector<const Tensor*> parts = {&p_tokens};
    if (cfg.use_region) parts.push_back(&region);
    parts.push_back(&t_tilde);
    for (const Tensor* part : parts) {
        for (std::size_t i = 0; i < part->rows(); ++i, ++row)
            for (std::size_t j = 0; j < d; ++j) x(row, j) = (*part)(i, j);
    }
    CmiCache scratch;
    CmiCache& c = cache ? *cache : scratch;
    c.p_in = p_tokens;
    c.t_tilde = t_tilde;
    c.region = region;
    c.x = x;
    c.z = cfg.use_hopfield ? hopfield_pool(params, effective_pool_params(cfg.cmi, l), x, &c.pool)
                           : x;
    Tensor attn = backbone::mha_forward(params, "cmi.attn", p_tokens, c.z, cfg.cmi.heads, &c.attn);
    c.p_hat = num::add(p_tokens, attn);
    if (cfg.cmi.mlp_identity) return c.p_hat;
    c.mlp_h_pre = num::add_row_broadcast(num::matmul(c.p_hat, params.at("cmi.mlp.W1").value),
                                         params.at("cmi.mlp.b1").value);
    c.mlp_h = num::gelu(c.mlp_h_pre);
    return num::add_row_broadcast(num::matmul(c.mlp_h, params.at("cmi.mlp.W2").value),
                                  params.at("cmi.mlp.b2").value);
}

void cmi_backward(ParamStore& params, const CridConfig& cfg, const CmiCache& cache,
                  const Tensor& d_out, Tensor& d_p, Tensor& d_t_tilde) {
    const std::size_t n = cache.p_in.rows(), d = cfg.cmi.d;
    Tensor d_p_hat;
    if (cfg.cmi.mlp_identity) {
        d_p_hat = d_out;
    } else {
        Tensor dh = Tensor::zeros(cache.mlp_h.shape);
        num::matmul_backward(cache.mlp_h, params.at("cmi.mlp.W2").value, d_out, dh,
                             params.at("cmi.mlp.W2").grad);
        accum_bias(params, "cmi.mlp.b2", d_out);
        Tensor dh_pre = num::gelu_backward(cache.mlp_h_pre, dh);
        d_p_hat = Tensor::zeros(cache.p_hat.shape);
        num::matmul_backward(cache.p_hat, params.at("cmi.mlp.W1").value, dh_pre, d_p_hat,
                             params.at("cmi.mlp.W1").grad);
        accum_bias(params, "cmi.mlp.b1", dh_pre);
    }
    if (!d_p.same_shape(cache.p_in)) d_p = Tensor::zeros(cache.p_in.shape);
    if (!d_t_tilde.same_shape(cache.t_tilde)) d_t_tilde = Tensor::zeros(cache.t_tilde.shape);
    // residual
    for (std::size_t i = 0; i < d_p.size(); ++i) d_p.v[i] += d_p_hat.v[i];
    Tensor dz = Tensor::zeros(cache.z.shape);
    backbone::mha_backward(params, "cmi.attn", cache.attn, cfg.cmi.heads, cache.z, d_p_hat, d_p,
                           dz);
    Tensor dx = cfg.use_hopfield ? hopfield_pool_backward(params, cfg.cmi, cache.pool, dz)
                                 : std::move(dz);
    // split the context gradient back onto its parts
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) d_p(i, j) += dx(i, j);
    if (cfg.use_region) {
        Tensor d_region = Tensor::zeros(cache.region.shape);
        for (std::size_t i = 0; i < d_region.rows(); ++i)
            for (std::size_t j = 0; j < d; ++j) d_region(i, j) = dx(n + i, j);
        Tensor dp_r = region_tokens_backward(d_region, n, cfg.cmi.scales);
        for (std::size_t i = 0; i < d_p.size(); ++i) d_p.v[i] += dp_r.v[i];
    }
    const std::size_t t0 = n + (cfg.use_region ? cache.region.rows() : 0);
    for (std::size_t i = 0; i < cache.t_tilde.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) d_t_tilde(i, j) += dx(t0 + i, j);
}

Tensor crid_forward(const ParamStore& params, const CridConfig& cfg, const Tensor& p_tokens,
                    const Tensor& c_tok, const Tensor& t_emb, CridCache* cache) {
    CridCache scratch;
    CridCache& c = cache ? *cache : scratch;
    Tensor t_tilde;
    if (cfg.use_cmg) {
        t_tilde = cmg_forward(params, cfg.cmg, t_emb, c_tok, &c.cmg).t_tilde;
    } else {
        // ungated: plain projection of the narrative embedding
        c.cmg.t_in = t_emb;
        t_tilde = cfg.cmg.identity_g() ? t_emb : num::matmul(t_emb, params.at("cmg.g.W").value);
    }
    c.p_out = cmi_forward(params, cfg, p_tokens, t_tilde, &c.cmi);
    return num::add_row_broadcast(num::matmul(c.p_out, params.at("cmi.head.W").value),
                                  params.at("cmi.head.b").value);
}

void crid_backward(ParamStore& params, const CridConfig& cfg, const CridCache& cache,
                   const Tensor& d_patches, Tensor& d_p, Tensor& d_c, Tensor& d_t_emb) {
    Tensor d_p_out = Tensor::zeros(cache.p_out.shape);
    num::matmul_backward(cache.p_out, params.at("cmi.head.W").value, d_patches, d_p_out,
                         params.at("cmi.head.W").grad);
    accum_bias(params, "cmi.head.b", d_patches);
    Tensor d_t_tilde = Tensor::zeros(cache.cmi.t_tilde.shape);
    cmi_backward(params, cfg, cache.cmi, d_p_out, d_p, d_t_tilde);
    if (!d_c.same_shape(Tensor::zeros({1, cfg.cmi.d}))) d_c = Tensor::zeros({1, cfg.cmi.d});
    if (cfg.use_cmg) {
        cmg_backward(params, cfg.cmg, cache.cmg, d_t_tilde, d_t_emb, d_c);
    } else {
        if (!d_t_emb.same_shape(cache.cmg.t_in)) d_t_emb = Tensor::zeros(cache.cmg.t_in.shape);
        if (cfg.cmg.identity_g()) {
            for (std::size_t i = 0; i < d_t_tilde.size(); ++i) d_t_emb.v[i] += d_t_tilde.v[i];
        } else {
            num::matmul_backward(cache.cmg.t_in, params.at("cmg.g.W").value, d_t_tilde, d_t_emb,
                                 params.at("cmg.g.W").grad);
        }
    }
}

fieldgrid::AtmosphericState crid_predict(const ParamStore& params, const CridConfig& cfg,
                                         const fieldgrid::GridSpec& spec, std::size_t patch,
                                         const fieldgrid::NormStats& stats, const Tensor& p_tokens,
                                         const Tensor& c_tok, const Tensor& t_emb,
                                         const std::string& sample_id, long time_index) {
    Tensor patches = crid_forward(params, cfg, p_tokens, c_tok, t_emb, nullptr);
    auto state = backbone::unpatchify_state(patches, spec, patch, sample_id, time_index);
    return fieldgrid::denormalize_state(state, stats);
}

}  // namespace agcd::crid
