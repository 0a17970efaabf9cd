#include "agcd/backbone.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace agcd::backbone {

using num::ParamStore;
using agcd::Tensor;

void BackboneConfig::validate() const {
    if (d % heads != 0) throw ConfigError("model width must be divisible by head count");
    if (patch == 0 || H % patch != 0 || W % patch != 0) {
        throw ShapeError("patch size must divide grid dimensions");
    }
}

Tensor patchify(const fieldgrid::AtmosphericState& state, const fieldgrid::GridSpec& spec,
                std::size_t patch) {
    if (patch == 0 || spec.H % patch != 0 || spec.W % patch != 0) {
        throw ShapeError("patch size " + std::to_string(patch) + " does not divide grid");
    }
    const std::size_t gp = spec.H / patch, gq = spec.W / patch;
    const std::size_t n = gp * gq;
    const std::size_t f = patch * patch * spec.variables.size();
    Tensor out = Tensor::zeros({n, f});
    for (std::size_t vi = 0; vi < spec.variables.size(); ++vi) {
        const Tensor& field = state.fields.at(spec.variables[vi]);
        if (field.rows() != spec.H || field.cols() != spec.W) {
            throw ShapeError("field shape does not match grid spec");
        }
        for (std::size_t pr = 0; pr < gp; ++pr)
            for (std::size_t pc = 0; pc < gq; ++pc) {
                const std::size_t token = pr * gq + pc;
                for (std::size_t r = 0; r < patch; ++r)
                    for (std::size_t c = 0; c < patch; ++c) {
                        out(token, vi * patch * patch + r * patch + c) =
                            field(pr * patch + r, pc * patch + c);
                    }
            }
    }
    return out;
}

std::vector<Tensor> unpatchify(const Tensor& patches, std::size_t h, std::size_t w,
                               std::size_t n_vars, std::size_t patch) {
    const std::size_t gp = h / patch, gq = w / patch;
    if (patches.rows() != gp * gq || patches.cols() != patch * patch * n_vars) {
        throw ShapeError("unpatchify: token shape " + patches.shape_str() + " mismatch");
    }
    std::vector<Tensor> fields;
    for (std::size_t vi = 0; vi < n_vars; ++vi) {
        Tensor field = Tensor::zeros({h, w});
        for (std::size_t pr = 0; pr < gp; ++pr)
            for (std::size_t pc = 0; pc < gq; ++pc)
                for (std::size_t r = 0; r < patch; ++r)
                    for (std::size_t c = 0; c < patch; ++c) {
                        field(pr * patch + r, pc * patch + c) =
                            patches(pr * gq + pc, vi * patch * patch + r * patch + c);
                    }
        fields.push_back(std::move(field));
    }
    return fields;
}

fieldgrid::AtmosphericState unpatchify_state(const Tensor& patches,
                                             const fieldgrid::GridSpec& spec, std::size_t patch,
                                             const std::string& sample_id, long time_index) {
    auto fields = unpatchify(patches, spec.H, spec.W, spec.variables.size(), patch);
    fieldgrid::AtmosphericState st;
    st.sample_id = sample_id;
    st.time_index = time_index;
    for (std::size_t i = 0; i < spec.variables.size(); ++i) {
        st.fields[spec.variables[i]] = std::move(fields[i]);
    }
    return st;
}

namespace {

Tensor seeded_uniform(SplitMix64& rng, std::vector<std::size_t> shape, double bound) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.v) x = rng.uniform(-bound, bound);
    return t;
}

Tensor col_slice(const Tensor& m, std::size_t c0, std::size_t c1) {
    Tensor out = Tensor::zeros({m.rows(), c1 - c0});
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = m(i, j);
    return out;
}

void col_add(Tensor& dst, const Tensor& src, std::size_t c0) {
    for (std::size_t i = 0; i < src.rows(); ++i)
        for (std::size_t j = 0; j < src.cols(); ++j) dst(i, c0 + j) += src(i, j);
}

void col_set(Tensor& dst, const Tensor& src, std::size_t c0) {
    for (std::size_t i = 0; i < src.rows(); ++i)
        for (std::size_t j = 0; j < src.cols(); ++j) dst(i, c0 + j) = src(i, j);
}

Tensor col_sums(const Tensor& m) {
    Tensor out = Tensor::zeros({1, m.cols()});
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
    return out;
}

}  // namespace

void init_params(ParamStore& params, const BackboneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SplitMix64 rng(seed);
    const std::size_t f = cfg.patch_dim(), d = cfg.d, n = cfg.tokens();
    const double bf = 1.0 / std::sqrt(static_cast<double>(f));
    const double bd = 1.0 / std::sqrt(static_cast<double>(d));
    params.add("backbone.patch.W", seeded_uniform(rng, {f, d}, bf));
    params.add("backbone.patch.b", Tensor::zeros({1, d}));
    params.add("backbone.cls", seeded_uniform(rng, {1, d}, bd));
    params.add("backbone.pos", seeded_uniform(rng, {n + 1, d}, bd));
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string p = "backbone.blk" + std::to_string(b);
        params.add(p + ".ln1.g", Tensor::full({1, d}, 1.0));
        params.add(p + ".ln1.b", Tensor::zeros({1, d}));
        for (const char* w : {".attn.Wq", ".attn.Wk", ".attn.Wv", ".attn.Wo"}) {
            params.add(p + w, seeded_uniform(rng, {d, d}, bd));
        }
        params.add(p + ".ln2.g", Tensor::full({1, d}, 1.0));
        params.add(p + ".ln2.b", Tensor::zeros({1, d}));
        const std::size_t hdim = cfg.mlp_ratio * d;
        params.add(p + ".mlp.W1", seeded_uniform(rng, {d, hdim}, bd));
        params.add(p + ".mlp.b1", Tensor::zeros({1, hdim}));
        params.add(p + ".mlp.W2",
                   seeded_uniform(rng, {hdim, d}, 1.0 / std::sqrt(static_cast<double>(hdim))));
        params.add(p + ".mlp.b2", Tensor::zeros({1, d}));
    }
}

void init_baseline_head(ParamStore& params, const BackboneConfig& cfg, std::uint64_t seed) {
    SplitMix64 rng(seed);
    const double bd = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    params.add("head.W", seeded_uniform(rng, {cfg.d, cfg.patch_dim()}, bd));
    params.add("head.b", Tensor::zeros({1, cfg.patch_dim()}));
}

Tensor mha_forward(const ParamStore& params, const std::string& prefix, const Tensor& queries,
                   const Tensor& source, std::size_t heads, AttnCache* cache) {
    const std::size_t d = queries.cols();
    if (d % heads != 0) throw ConfigError("attention width not divisible by heads");
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor q = num::matmul(queries, params.at(prefix + ".Wq").value);
    Tensor k = num::matmul(source, params.at(prefix + ".Wk").value);
    Tensor v = num::matmul(source, params.at(prefix + ".Wv").value);
    Tensor o = Tensor::zeros({queries.rows(), d});
    std::vector<Tensor> a_heads;
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor qh = col_slice(q, h * dh, (h + 1) * dh);
        Tensor kh = col_slice(k, h * dh, (h + 1) * dh);
        Tensor vh = col_slice(v, h * dh, (h + 1) * dh);
        Tensor scores = num::matmul(qh, num::transpose(kh));
        for (double& x : scores.v) x *= scale;
        Tensor a = num::softmax_rows(scores);
        Tensor oh = num::matmul(a, vh);
        col_set(o, oh, h * dh);
        a_heads.push_back(std::move(a));
    }
    Tensor out = num::matmul(o, params.at(prefix + ".Wo").value);
    if (cache) {
        cache->x = queries;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->a = std::move(a_heads);
        cache->o = std::move(o);
    }
    return out;
}

void mha_backward(ParamStore& params, const std::string& prefix, const AttnCache& cache,
                  std::size_t heads, const Tensor& source, const Tensor& d_out,
                  Tensor& d_queries, Tensor& d_source) {
    const std::size_t d = cache.q.cols();
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor d_o = Tensor::zeros(cache.o.shape);
    num::matmul_backward(cache.o, params.at(prefix + ".Wo").value, d_out, d_o,
                         params.at(prefix + ".Wo").grad);
    Tensor dq = Tensor::zeros(cache.q.shape);
    Tensor dk = Tensor::zeros(cache.k.shape);
    Tensor dv = Tensor::zeros(cache.v.shape);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor doh = col_slice(d_o, h * dh, (h + 1) * dh);
        Tensor qh = col_slice(cache.q, h * dh, (h + 1) * dh);
        Tensor kh = col_slice(cache.k, h * dh, (h + 1) * dh);
        Tensor vh = col_slice(cache.v, h * dh, (h + 1) * dh);
        const Tensor& a = cache.a[h];
        Tensor da = num::matmul(doh, num::transpose(vh));
        Tensor dvh = num::matmul(num::transpose(a), doh);
        Tensor ds = num::softmax_rows_backward(a, da);
        for (double& x : ds.v) x *= scale;
        Tensor dqh = num::matmul(ds, kh);
        Tensor dkh = num::matmul(num::transpose(ds), qh);
        col_add(dq, dqh, h * dh);
        col_add(dk, dkh, h * dh);
        col_add(dv, dvh, h * dh);
    }
    if (!d_queries.same_shape(cache.x)) d_queries = Tensor::zeros(cache.x.shape);
    if (!d_source.same_shape(source)) d_source = Tensor::zeros(source.shape);
    num::matmul_backward(cache.x, params.at(prefix + ".Wq").value, dq, d_queries,
                         params.at(prefix + ".Wq").grad);
    num::matmul_backward(source, params.at(prefix + ".Wk").value, dk, d_source,
                         params.at(prefix + ".Wk").grad);
    num::matmul_backward(source, params.at(prefix + ".Wv").value, dv, d_source,
                         params.at(prefix + ".Wv").grad);
}

std::pair<Tensor, Tensor> encode(const ParamStore& params, const BackboneConfig& cfg,
                                 const Tensor& patches, EncodeCache* cache) {
    cfg.validate();
    if (patches.rows() != cfg.tokens() || patches.cols() != cfg.patch_dim()) {
        throw ShapeError("encode: patch tensor shape " + patches.shape_str() +
                         " does not match config");
    }
    const std::size_t n = cfg.tokens(), d = cfg.d;
    Tensor x0 = num::add_row_broadcast(num::matmul(patches, params.at("backbone.patch.W").value),
                                       params.at("backbone.patch.b").value);
    Tensor x = Tensor::zeros({n + 1, d});
    const Tensor& cls = params.at("backbone.cls").value;
    for (std::size_t j = 0; j < d; ++j) x(0, j) = cls(0, j);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x(i + 1, j) = x0(i, j);
    x = num::add(x, params.at("backbone.pos").value);
    if (cache) {
        cache->patches = patches;
        cache->blocks.resize(cfg.blocks);
    }
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string p = "backbone.blk" + std::to_string(b);
        BlockCache scratch;
        BlockCache& bc = cache ? cache->blocks[b] : scratch;
        Tensor ln1 = num::layernorm_rows(x, params.at(p + ".ln1.g").value,
                                         params.at(p + ".ln1.b").value, &bc.ln1);
        Tensor attn = mha_forward(params, p + ".attn", ln1, ln1, cfg.heads, &bc.attn);
        x = num::add(x, attn);
        bc.x_mid = x;
        Tensor ln2 = num::layernorm_rows(x, params.at(p + ".ln2.g").value,
                                         params.at(p + ".ln2.b").value, &bc.ln2);
        bc.mlp_in = ln2;
        bc.mlp_h_pre = num::add_row_broadcast(num::matmul(ln2, params.at(p + ".mlp.W1").value),
                                              params.at(p + ".mlp.b1").value);
        bc.mlp_h = num::gelu(bc.mlp_h_pre);
        Tensor m = num::add_row_broadcast(num::matmul(bc.mlp_h, params.at(p + ".mlp.W2").value),
                                          params.at(p + ".mlp.b2").value);
        x = num::add(x, m);
    }
    Tensor c_tok = Tensor::zeros({1, d});
    Tensor p_tok = Tensor::zeros({n, d});
    for (std::size_t j = 0; j < d; ++j) c_tok(0, j) = x(0, j);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) p_tok(i, j) = x(i + 1, j);
    return {std::move(p_tok), std::move(c_tok)};
}

void encode_backward(ParamStore& params, const BackboneConfig& cfg, const EncodeCache& cache,
                     const Tensor& d_p, const Tensor& d_c) {
    const std::size_t n = cfg.tokens(), d = cfg.d;
    Tensor dx = Tensor::zeros({n + 1, d});
    for (std::size_t j = 0; j < d; ++j) dx(0, j) = d_c(0, j);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) dx(i + 1, j) = d_p(i, j);
    for (std::size_t b = cfg.blocks; b-- > 0;) {
        const std::string p = "backbone.blk" + std::to_string(b);
        const BlockCache& bc = cache.blocks[b];
        // MLP branch
        Tensor dm = dx;  // residual: gradient flows to both the branch and x_mid
        Tensor dh = Tensor::zeros(bc.mlp_h.shape);
        num::matmul_backward(bc.mlp_h, params.at(p + ".mlp.W2").value, dm, dh,
                             params.at(p + ".mlp.W2").grad);
        {
            Tensor bsum = col_sums(dm);
            Tensor& g = params.at(p + ".mlp.b2").grad;
            for (std::size_t j = 0; j < g.size(); ++j) g.v[j] += bsum.v[j];
        }
        Tensor dh_pre = num::gelu_backward(bc.mlp_h_pre, dh);
        Tensor dln2 = Tensor::zeros(bc.mlp_in.shape);
        num::matmul_backward(bc.mlp_in, params.at(p + ".mlp.W1").value, dh_pre, dln2,
                             params.at(p + ".mlp.W1").grad);
        {
            Tensor bsum = col_sums(dh_pre);
            Tensor& g = params.at(p + ".mlp.b1").grad;
            for (std::size_t j = 0; j < g.size(); ++j) g.v[j] += bsum.v[j];
        }
        Tensor dx_mid = num::layernorm_rows_backward(bc.ln2, params.at(p + ".ln2.g").value, dln2,
                                                     params.at(p + ".ln2.g").grad,
                                                     params.at(p + ".ln2.b").grad);
        dx = num::add(dx, dx_mid);
        // attention branch
        Tensor d_attn = dx;
        Tensor dln1 = Tensor::zeros(bc.attn.x.shape);
        Tensor dln1_src = Tensor::zeros(bc.attn.x.shape);
        mha_backward(params, p + ".attn", bc.attn, cfg.heads, bc.attn.x, d_attn, dln1, dln1_src);
        dln1 = num::add(dln1, dln1_src);
        Tensor dx_in = num::layernorm_rows_backward(bc.ln1, params.at(p + ".ln1.g").value, dln1,
                                                    params.at(p + ".ln1.g").grad,
                                                    params.at(p + ".ln1.b").grad);
        dx = num::add(dx, dx_in);
    }
    // position embeddings, class token, patch embed
    {
        Tensor& g = params.at("backbone.pos").grad;
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += dx.v[i];
    }
    {
        Tensor& g = params.at("backbone.cls").grad;
        for (std::size_t j = 0; j < d; ++j) g(0, j) += dx(0, j);
    }
    Tensor dx0 = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) dx0(i, j) = dx(i + 1, j);
    Tensor d_patches = Tensor::zeros(cache.patches.shape);
    num::matmul_backward(cache.patches, params.at("backbone.patch.W").value, dx0, d_patches,
                         params.at("backbone.patch.W").grad);
    {
        Tensor bsum = col_sums(dx0);
        Tensor& g = params.at("backbone.patch.b").grad;
        for (std::size_t j = 0; j < g.size(); ++j) g.v[j] += bsum.v[j];
    }
}

Tensor baseline_head(const ParamStore& params, const Tensor& p_tokens) {
    return num::add_row_broadcast(num::matmul(p_tokens, params.at("head.W").value),
                                  params.at("head.b").value);
}

void baseline_head_backward(ParamStore& params, const Tensor& p_tokens, const Tensor& d_out,
                            Tensor& d_p) {
    if (!d_p.same_shape(p_tokens)) d_p = Tensor::zeros(p_tokens.shape);
    num::matmul_backward(p_tokens, params.at("head.W").value, d_out, d_p,
                         params.at("head.W").grad);
    Tensor bsum = col_sums(d_out);
    Tensor& g = params.at("head.b").grad;
    for (std::size_t j = 0; j < g.size(); ++j) g.v[j] += bsum.v[j];
}

void save_checkpoint(const std::string& path, const ParamStore& params) {
    std::ostringstream payload;
    for (const auto& [name, p] : params.entries()) {
        payload << name << " " << p.value.rank();
        for (std::size_t dim : p.value.shape) payload << " " << dim;
        payload << " " << (p.trainable ? 1 : 0) << "\n";
        payload.write(reinterpret_cast<const char*>(p.value.v.data()),
                      static_cast<std::streamsize>(p.value.v.size() * sizeof(double)));
    }
    const std::string body = payload.str();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << "AGCD-CKPT 1 " << params.entries().size() << " " << hash_hex(fnv1a64(body)) << "\n";
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, ParamStore& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string header;
    if (!std::getline(in, header)) throw FormatError("missing checkpoint header");
    std::istringstream hs(header);
    std::string magic, hash;
    int version = 0;
    std::size_t count = 0;
    hs >> magic >> version >> count >> hash;
    if (magic != "AGCD-CKPT" || version != 1) throw FormatError("bad checkpoint header");
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (hash_hex(fnv1a64(body)) != hash) throw FormatError("checkpoint content hash mismatch");
    std::istringstream bs(body);
    for (std::size_t i = 0; i < count; ++i) {
        std::string line;
        if (!std::getline(bs, line)) throw FormatError("truncated checkpoint");
        std::istringstream ls(line);
        std::string name;
        std::size_t rank = 0;
        ls >> name >> rank;
        std::vector<std::size_t> shape(rank);
        for (auto& dim : shape) ls >> dim;
        int trainable = 1;
        ls >> trainable;
        Tensor t = Tensor::zeros(shape);
        bs.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        if (bs.gcount() != static_cast<std::streamsize>(t.v.size() * sizeof(double))) {
            throw FormatError("truncated checkpoint tensor " + name);
        }
        if (params.contains(name)) {
            num::Param& p = params.at(name);
            if (!p.value.same_shape(t)) throw ShapeError("checkpoint shape mismatch for " + name);
            p.value = std::move(t);
            p.trainable = trainable != 0;
        } else {
            params.add(name, std::move(t), trainable != 0);
        }
    }
}

}  // namespace agcd::backbone
