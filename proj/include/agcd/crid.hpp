#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agcd/backbone.hpp"
#include "agcd/fieldgrid.hpp"
#include "agcd/numcore.hpp"

// Cross-modal region interaction decoding: a plug-in replacement for the
// linear forecast head. Narrative embeddings are gated against the global
// state token, pooled together with multi-scale region summaries into a small
// memory, and read back into the patch tokens by cross-attention.
namespace agcd::crid {

using num::ParamStore;

struct CMGParams {
    std::size_t d_t = 48;    // narrative embedding width
    std::size_t d = 32;      // model width
    std::size_t nt_max = 64; // maximum narrative token count
    std::size_t hidden = 64; // f's hidden layer width

    bool identity_g() const { return d_t == d; }
    void validate() const;
};

struct CMIParams {
    std::size_t d = 32;
    std::vector<std::size_t> scales = {2, 4};
    std::size_t memory = 8;  // M pooled memory tokens
    double beta_h = 0.0;     // pooling inverse temperature; 0 -> 1/sqrt(d)
    bool identity_kv = false;  // test mode: pooling keys/values are the raw rows
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    bool mlp_identity = false;  // test mode: decoder MLP passes through

    double effective_beta() const;
    void validate() const;
};

struct CridConfig {
    CMGParams cmg;
    CMIParams cmi;
    std::size_t patch_dim = 64;  // prediction head output width
    bool use_cmg = true;       // gate narrative tokens (off: plain projection)
    bool use_region = true;    // include multi-scale region tokens in the context
    bool use_hopfield = true;  // pool the context to M memories (off: attend to all of it)
};

struct GuidedText {
    Tensor t_tilde;  // N_t x d
    Tensor alpha;    // 1 x N_t token gate
    Tensor beta;     // 1 x d channel gate
};

struct CmgCache {
    Tensor t_in, c_in;
    Tensor u;               // g(T)
    Tensor f_h_pre, f_h;    // f hidden layer
    Tensor q_tok, q_ch;     // split queries (q_tok already truncated)
    Tensor alpha, beta;
    Tensor u1;              // alpha-scaled U
};

struct PoolCache {
    Tensor x, xk, xv;
    Tensor a;  // M x L attention weights
};

struct CmiCache {
    Tensor p_in, t_tilde, region, x, z;
    PoolCache pool;
    backbone::AttnCache attn;
    Tensor p_hat;
    Tensor mlp_h_pre, mlp_h;
};

struct CridCache {
    CmgCache cmg;
    CmiCache cmi;
    Tensor p_out;  // decoder MLP output, pre prediction head
};

// Parameter names are cmg.* / cmi.*; layout depends on the config flags.
void init_crid_params(ParamStore& params, const CridConfig& cfg, std::uint64_t seed);

// Eqs: U = g(T); [q_tok, q_ch] = f(C); alpha = softmax(q_ch U^T) scales rows;
// beta = softmax(q_tok U1) scales columns.
GuidedText cmg_forward(const ParamStore& params, const CMGParams& cfg, const Tensor& t_emb,
                       const Tensor& c_tok, CmgCache* cache);
void cmg_backward(ParamStore& params, const CMGParams& cfg, const CmgCache& cache,
                  const Tensor& d_t_tilde, Tensor& d_t_emb, Tensor& d_c);

// Average-pool the token grid at each scale (ascending), flatten, concatenate.
Tensor region_tokens(const Tensor& p_tokens, const std::vector<std::size_t>& scales);
Tensor region_tokens_backward(const Tensor& d_out, std::size_t n_tokens,
                              const std::vector<std::size_t>& scales);
std::size_t region_token_count(std::size_t n_tokens, const std::vector<std::size_t>& scales);

// A = softmax_rows(beta_h * Q_h (XK)^T); Z = A (XV).
Tensor hopfield_pool(const ParamStore& params, const CMIParams& cfg, const Tensor& x,
                     PoolCache* cache);
Tensor hopfield_pool_backward(ParamStore& params, const CMIParams& cfg, const PoolCache& cache,
                              const Tensor& d_z);

// X = [P; R; T~]; Z = pooled memory; P_hat = MHA(P, Z) + P; P_out = MLP(P_hat).
Tensor cmi_forward(const ParamStore& params, const CridConfig& cfg, const Tensor& p_tokens,
                   const Tensor& t_tilde, CmiCache* cache);
void cmi_backward(ParamStore& params, const CridConfig& cfg, const CmiCache& cache,
                  const Tensor& d_out, Tensor& d_p, Tensor& d_t_tilde);

// Full decoder: gated text + region interaction + prediction head.
// Returns per-token patch pixels (N x patch_dim), same interface as the
// baseline head.
Tensor crid_forward(const ParamStore& params, const CridConfig& cfg, const Tensor& p_tokens,
                    const Tensor& c_tok, const Tensor& t_emb, CridCache* cache);
void crid_backward(ParamStore& params, const CridConfig& cfg, const CridCache& cache,
                   const Tensor& d_patches, Tensor& d_p, Tensor& d_c, Tensor& d_t_emb);

// Convenience wrapper: decode to normalized patches, unpatchify, denormalize.
fieldgrid::AtmosphericState crid_predict(const ParamStore& params, const CridConfig& cfg,
                                         const fieldgrid::GridSpec& spec, std::size_t patch,
                                         const fieldgrid::NormStats& stats, const Tensor& p_tokens,
                                         const Tensor& c_tok, const Tensor& t_emb,
                                         const std::string& sample_id, long time_index);

}  // namespace agcd::crid
