#pragma once

#include "mafea/encoder.hpp"

namespace mafea {

/// One adaptation iteration: self-attention over prototype tokens,
/// cross-attention from prototypes onto query tokens, feed-forward; all
/// pre-normalized with residuals.
struct AdaptLayerParams {
    Tensor self_ln_g, self_ln_b;
    Tensor self_wq, self_bq, self_wk, self_bk, self_wv, self_bv, self_wo, self_bo;
    Tensor cross_ln_g, cross_ln_b;
    Tensor cross_wq, cross_bq, cross_wk, cross_bk, cross_wv, cross_bv, cross_wo, cross_bo;
    Tensor ffn_ln_g, ffn_ln_b;
    Tensor ffn1_w, ffn1_b, ffn2_w, ffn2_b;

    void init(Index dim, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct RelationParams {
    Tensor shape1_w, shape1_b;  // box (w,h) fractions -> hidden
    Tensor shape2_w, shape2_b;  // hidden -> C
    std::vector<AdaptLayerParams> adapt;  // one per iteration, K total

    void init(const ModelConfig& cfg, Rng& rng);
    void visit(const ParamVisitor& fn);
};

/// Box widths/heights in pixels -> per-box C-dim embedding broadcast over the
/// s x s prototype grid. Output rows are grouped per box: [n*s*s, C].
Tensor shape_embedding(const std::vector<std::pair<double, double>>& boxes, Index image_size,
                       Index proto_size, const RelationParams& params);

/// Square token grid [g*g, C] pooled down (or resized up) to the prototype
/// grid: [s*s, C].
Tensor appearance_pooling(const Tensor& exemplar_tokens, Index proto_size);

/// K rounds of prototype refinement against the query tokens; every
/// intermediate prototype set is retained. Input/output rows are [n*s*s, C].
std::vector<Tensor> iterative_adaptation(const Tensor& prototypes, const Tensor& z_q,
                                         const RelationParams& params, Index heads);

/// Per-prototype depth-wise correlation of the query feature map followed by
/// the elementwise max over prototypes. Raw responses, no normalization.
Tensor prototype_match(const Tensor& z_q_map, const Tensor& prototypes, Index proto_size);

}  // namespace mafea
