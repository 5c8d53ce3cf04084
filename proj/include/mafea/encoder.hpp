#pragma once

#include <functional>
#include <utility>

#include "mafea/config.hpp"
#include "mafea/ops.hpp"

namespace mafea {

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

/// One attention side (query stream or exemplar stream) of a relation layer.
/// The q/k/v/o projections serve both the self branch and the cross branch.
struct SideParams {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor ffn1_w, ffn1_b, ffn2_w, ffn2_b;

    void init(Index dim, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct MrmLayerParams {
    SideParams q, e;

    void init(Index dim, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct EncoderParams {
    Tensor embed_w, embed_b;  // patch projection [3*S*S, C] + [C]
    Tensor pos_q;             // [N^Q, C]
    Tensor pos_e;             // one table shared by every exemplar
    Tensor bg_token;          // [1, C]; only used when bt is on
    Tensor zs_tokens;         // learnable exemplar stand-ins; zero-shot only
    std::vector<MrmLayerParams> layers;
    Tensor final_q_g, final_q_b, final_e_g, final_e_b;

    void init(const ModelConfig& cfg, Rng& rng);
    void visit(const ParamVisitor& fn, const ModelConfig& cfg);
};

/// Token streams flowing through the relation layers. z_b is undefined when
/// the background token is ablated away.
struct TokenState {
    Tensor z_q, z_e, z_b;
    Index layer = 0;
};

struct EncodeResult {
    Tensor z_q;                     // [N^Q, C]
    Tensor z_e;                     // [N^E, C]
    std::vector<Tensor> as_layers;  // per-layer [N^Q] background-alignment scores
};

/// Patch rows -> token rows: linear projection plus additive position table.
Tensor embed(const Tensor& patches, const Tensor& proj_w, const Tensor& proj_b, const Tensor& pos);

/// Scaled dot-product attention over pre-projected Q/K/V with `heads` head
/// splits, concatenated and pushed through the output projection.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, Index heads,
                            const Tensor& wo, const Tensor& bo);

/// Per-head softmax masses of each query row against [exemplar keys;
/// background keys]: first the background share, second the exemplar share.
/// Shapes [heads, N^Q] each; the two sum to one per entry.
std::pair<Tensor, Tensor> attention_masses(const Tensor& q_q, const Tensor& k_e, const Tensor& k_b,
                                           Index heads);

/// Head-averaged background share per query token, shape [N^Q].
Tensor alignment_scores(const Tensor& q_q, const Tensor& k_e, const Tensor& k_b, Index heads);

/// One mutual-relation layer: per-side self-attention, bidirectional
/// cross-attention (when mrm is on), three-term residual update, then a
/// per-side feed-forward sublayer. Returns the new state and this layer's
/// alignment scores (undefined when the background token is off).
std::pair<TokenState, Tensor> mrm_layer(const TokenState& state, const MrmLayerParams& params,
                                        const ModelConfig& cfg);

/// Full encoder: embeddings, L relation layers, final normalization (skipped
/// when L = 0 so the output equals the embeddings).
EncodeResult encode(const Tensor& query, const std::vector<Tensor>& exemplars,
                    const EncoderParams& params, const ModelConfig& cfg);

}  // namespace mafea
