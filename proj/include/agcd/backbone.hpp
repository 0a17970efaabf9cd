#pragma once

#include <string>
#include <utility>
#include <vector>

#include "agcd/fieldgrid.hpp"
#include "agcd/numcore.hpp"

namespace agcd::backbone {

struct BackboneConfig {
    std::size_t H = 16;
    std::size_t W = 16;
    std::size_t n_vars = 4;
    std::size_t patch = 4;
    std::size_t d = 32;
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::size_t mlp_ratio = 4;

    std::size_t tokens() const { return (H / patch) * (W / patch); }       // N
    std::size_t patch_dim() const { return patch * patch * n_vars; }       // F
    void validate() const;
};

// Caches hold the intermediates the manual backward pass needs.
struct AttnCache {
    Tensor x;  // attention input (post-LN)
    Tensor q, k, v;
    std::vector<Tensor> a;  // per-head attention weights
    Tensor o;               // concatenated head outputs, pre-Wo
};

struct BlockCache {
    num::LayerNormCache ln1;
    AttnCache attn;
    Tensor x_mid;  // after the attention residual
    num::LayerNormCache ln2;
    Tensor mlp_in;     // ln2 output
    Tensor mlp_h_pre;  // before gelu
    Tensor mlp_h;      // after gelu
};

struct EncodeCache {
    Tensor patches;
    std::vector<BlockCache> blocks;
};

// Non-overlapping patches, row-major patch order, [variable][row][col]
// flattening within a patch. fields given in spec variable order.
Tensor patchify(const fieldgrid::AtmosphericState& state, const fieldgrid::GridSpec& spec,
                std::size_t patch);
// Inverse of patchify; returns fields in spec variable order.
std::vector<Tensor> unpatchify(const Tensor& patches, std::size_t h, std::size_t w,
                               std::size_t n_vars, std::size_t patch);
fieldgrid::AtmosphericState unpatchify_state(const Tensor& patches,
                                             const fieldgrid::GridSpec& spec, std::size_t patch,
                                             const std::string& sample_id, long time_index);

void init_params(num::ParamStore& params, const BackboneConfig& cfg, std::uint64_t seed);
void init_baseline_head(num::ParamStore& params, const BackboneConfig& cfg, std::uint64_t seed);

// Patch embed + class token + position embeddings + pre-norm blocks.
// Returns (P, C): P is N x d, C is 1 x d.
std::pair<Tensor, Tensor> encode(const num::ParamStore& params, const BackboneConfig& cfg,
                                 const Tensor& patches, EncodeCache* cache);
// Accumulates parameter gradients; dP is N x d, dC is 1 x d.
void encode_backward(num::ParamStore& params, const BackboneConfig& cfg,
                     const EncodeCache& cache, const Tensor& d_p, const Tensor& d_c);

// Vision-only decoding head: per-token linear map to patch pixels.
Tensor baseline_head(const num::ParamStore& params, const Tensor& p_tokens);
void baseline_head_backward(num::ParamStore& params, const Tensor& p_tokens,
                            const Tensor& d_out, Tensor& d_p);

// Reusable self/cross attention used by backbone blocks and the CRID decoder.
// queries: n x d, keys/values source: m x d. Parameter names are
// <prefix>.Wq/.Wk/.Wv/.Wo.
Tensor mha_forward(const num::ParamStore& params, const std::string& prefix,
                   const Tensor& queries, const Tensor& source, std::size_t heads,
                   AttnCache* cache);
// Accumulates weight grads and the gradients through d_queries / d_source.
// `source` must be the same tensor passed to mha_forward.
void mha_backward(num::ParamStore& params, const std::string& prefix, const AttnCache& cache,
                  std::size_t heads, const Tensor& source, const Tensor& d_out,
                  Tensor& d_queries, Tensor& d_source);

// Checkpoint file: header + named little-endian 64-bit tensors + content hash.
void save_checkpoint(const std::string& path, const num::ParamStore& params);
void load_checkpoint(const std::string& path, num::ParamStore& params);

}  // namespace agcd::backbone
