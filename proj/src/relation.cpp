#include "mafea/relation.hpp"

#include <cmath>

namespace mafea {

namespace O = ops;

namespace {

Tensor linear_init(Index fan_in, Index fan_out, Rng& rng) {
    return Tensor::randn({fan_in, fan_out}, rng, std::sqrt(1.0 / static_cast<double>(fan_in)), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor proj(const Tensor& x, const Tensor& w, const Tensor& b) {
    return O::add_rowvec(O::matmul(x, w), b);
}

}  // namespace

void AdaptLayerParams::init(Index dim, Rng& rng) {
    auto ln = [&](Tensor& g, Tensor& b) {
        g = Tensor::full({dim}, 1.0, true);
        b = zeros_param({dim});
    };
    auto attn = [&](Tensor& wq, Tensor& bq, Tensor& wk, Tensor& bk, Tensor& wv, Tensor& bv,
                    Tensor& wo, Tensor& bo) {
        wq = linear_init(dim, dim, rng);
        bq = zeros_param({dim});
        wk = linear_init(dim, dim, rng);
        bk = zeros_param({dim});
        wv = linear_init(dim, dim, rng);
        bv = zeros_param({dim});
        wo = linear_init(dim, dim, rng);
        bo = zeros_param({dim});
    };
    ln(self_ln_g, self_ln_b);
    attn(self_wq, self_bq, self_wk, self_bk, self_wv, self_bv, self_wo, self_bo);
    ln(cross_ln_g, cross_ln_b);
    attn(cross_wq, cross_bq, cross_wk, cross_bk, cross_wv, cross_bv, cross_wo, cross_bo);
    ln(ffn_ln_g, ffn_ln_b);
    ffn1_w = linear_init(dim, 4 * dim, rng);
    ffn1_b = zeros_param({4 * dim});
    ffn2_w = linear_init(4 * dim, dim, rng);
    ffn2_b = zeros_param({dim});
}

void AdaptLayerParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".self.ln.g", self_ln_g);
    fn(prefix + ".self.ln.b", self_ln_b);
    fn(prefix + ".self.wq", self_wq);
    fn(prefix + ".self.bq", self_bq);
    fn(prefix + ".self.wk", self_wk);
    fn(prefix + ".self.bk", self_bk);
    fn(prefix + ".self.wv", self_wv);
    fn(prefix + ".self.bv", self_bv);
    fn(prefix + ".self.wo", self_wo);
    fn(prefix + ".self.bo", self_bo);
    fn(prefix + ".cross.ln.g", cross_ln_g);
    fn(prefix + ".cross.ln.b", cross_ln_b);
    fn(prefix + ".cross.wq", cross_wq);
    fn(prefix + ".cross.bq", cross_bq);
    fn(prefix + ".cross.wk", cross_wk);
    fn(prefix + ".cross.bk", cross_bk);
    fn(prefix + ".cross.wv", cross_wv);
    fn(prefix + ".cross.bv", cross_bv);
    fn(prefix + ".cross.wo", cross_wo);
    fn(prefix + ".cross.bo", cross_bo);
    fn(prefix + ".ffn.ln.g", ffn_ln_g);
    fn(prefix + ".ffn.ln.b", ffn_ln_b);
    fn(prefix + ".ffn1.w", ffn1_w);
    fn(prefix + ".ffn1.b", ffn1_b);
    fn(prefix + ".ffn2.w", ffn2_w);
    fn(prefix + ".ffn2.b", ffn2_b);
}

void RelationParams::init(const ModelConfig& cfg, Rng& rng) {
    Index c = cfg.embed_dim;
    shape1_w = linear_init(2, c, rng);
    shape1_b = zeros_param({c});
    shape2_w = linear_init(c, c, rng);
    shape2_b = zeros_param({c});
    adapt.resize(static_cast<std::size_t>(cfg.adapt_iters));
    for (auto& a : adapt) a.init(c, rng);
}

void RelationParams::visit(const ParamVisitor& fn) {
    fn("rel.shape1.w", shape1_w);
    fn("rel.shape1.b", shape1_b);
    fn("rel.shape2.w", shape2_w);
    fn("rel.shape2.b", shape2_b);
    for (std::size_t k = 0; k < adapt.size(); ++k) adapt[k].visit("rel.adapt." + std::to_string(k), fn);
}

Tensor shape_embedding(const std::vector<std::pair<double, double>>& boxes, Index image_size,
                       Index proto_size, const RelationParams& params) {
    if (boxes.empty()) throw ConfigError("shape_embedding: no boxes");
    Index n = static_cast<Index>(boxes.size());
    std::vector<double> norm;
    norm.reserve(static_cast<std::size_t>(2 * n));
    for (auto [w, h] : boxes) {
        if (w <= 0 || h <= 0) throw DataError("shape_embedding: non-positive box extent");
        norm.push_back(w / static_cast<double>(image_size));
        norm.push_back(h / static_cast<double>(image_size));
    }
    Tensor box_frac = Tensor::from_data({n, 2}, std::move(norm));
    Tensor emb = proj(O::leaky_relu(proj(box_frac, params.shape1_w, params.shape1_b)),
                      params.shape2_w, params.shape2_b);  // [n, C]
    // broadcast each row over the s*s grid
    Tensor grid_ones = Tensor::full({proto_size * proto_size, 1}, 1.0);
    std::vector<Tensor> grids;
    for (Index i = 0; i < n; ++i) grids.push_back(O::matmul(grid_ones, O::slice_rows(emb, i, i + 1)));
    return grids.size() == 1 ? grids[0] : O::concat_rows(grids);
}

Tensor appearance_pooling(const Tensor& exemplar_tokens, Index proto_size) {
    if (exemplar_tokens.rank() != 2) throw ConfigError("appearance_pooling: expected token rows");
    Index rows = exemplar_tokens.dim(0), c = exemplar_tokens.dim(1);
    Index g = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(rows))));
    if (g * g != rows)
        throw ConfigError("appearance_pooling: token grid is not square (" + std::to_string(rows) +
                          " tokens)");
    Tensor grid = O::reshape(exemplar_tokens, {g, g, c});
    Tensor pooled = O::adaptive_avg_pool_grid(grid, proto_size);
    return O::reshape(pooled, {proto_size * proto_size, c});
}

std::vector<Tensor> iterative_adaptation(const Tensor& prototypes, const Tensor& z_q,
                                         const RelationParams& params, Index heads) {
    std::vector<Tensor> retained;
    Tensor p = prototypes;
    for (const auto& a : params.adapt) {
        Tensor x = O::layer_norm(p, a.self_ln_g, a.self_ln_b);
        p = O::add(p, multi_head_attention(proj(x, a.self_wq, a.self_bq), proj(x, a.self_wk, a.self_bk),
                                           proj(x, a.self_wv, a.self_bv), heads, a.self_wo, a.self_bo));
        x = O::layer_norm(p, a.cross_ln_g, a.cross_ln_b);
        p = O::add(p, multi_head_attention(proj(x, a.cross_wq, a.cross_bq),
                                           proj(z_q, a.cross_wk, a.cross_bk),
                                           proj(z_q, a.cross_wv, a.cross_bv), heads, a.cross_wo,
                                           a.cross_bo));
        x = O::layer_norm(p, a.ffn_ln_g, a.ffn_ln_b);
        p = O::add(p, proj(O::leaky_relu(proj(x, a.ffn1_w, a.ffn1_b)), a.ffn2_w, a.ffn2_b));
        retained.push_back(p);
    }
    return retained;
}

Tensor prototype_match(const Tensor& z_q_map, const Tensor& prototypes, Index proto_size) {
    Index s2 = proto_size * proto_size;
    if (prototypes.rank() != 2 || prototypes.dim(0) % s2 != 0)
        throw ConfigError("prototype_match: prototype rows must be a multiple of the grid size");
    Index n = prototypes.dim(0) / s2;
    if (n < 1) throw ConfigError("prototype_match: empty prototype set");
    Index c = prototypes.dim(1);
    std::vector<Tensor> responses;
    for (Index i = 0; i < n; ++i) {
        Tensor kernel = O::reshape(O::slice_rows(prototypes, i * s2, (i + 1) * s2),
                                   {proto_size, proto_size, c});
        responses.push_back(O::depthwise_correlate(z_q_map, kernel));
    }
    return responses.size() == 1 ? responses[0] : O::maximum_of(responses);
}

}  // namespace mafea
