#pragma once

#include "mafea/decoder.hpp"
#include "mafea/relation.hpp"

namespace mafea {

struct ModelOutput {
    Tensor y_main;                  // [1, H, W]
    std::vector<Tensor> y_aux;      // K-1 intermediate maps
    std::vector<Tensor> as_layers;  // [N^Q] per relation layer (background token on)
    Tensor as_for_loss;             // layer-aggregated scores; undefined without bt
};

struct Model {
    ModelConfig cfg;
    Index tbd_layer = -1;  // -1: average alignment scores over layers
    EncoderParams enc;
    RelationParams rel;
    DecoderParams dec_main;
    std::vector<DecoderParams> dec_aux;

    static Model init(const ModelConfig& cfg, Index tbd_layer, Rng& rng);

    /// Fixed-order traversal of every trainable tensor; the order defines
    /// optimizer state slots and checkpoint layout.
    void visit(const ParamVisitor& fn);
    Index param_count();

    /// boxes carry (width, height) in pixels, one per exemplar; both are
    /// ignored in zero-shot mode, which substitutes the learnable tokens and
    /// nominal exemplar-sized boxes.
    ModelOutput forward(const Tensor& query, const std::vector<Tensor>& exemplars,
                        const std::vector<std::pair<double, double>>& boxes) const;
};

}  // namespace mafea
