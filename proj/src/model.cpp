#include "mafea/model.hpp"

#include <cmath>

namespace mafea {

namespace O = ops;

Model Model::init(const ModelConfig& cfg, Index tbd_layer, Rng& rng) {
    Model m;
    m.cfg = cfg;
    m.tbd_layer = tbd_layer;
    m.enc.init(cfg, rng);
    m.rel.init(cfg, rng);
    m.dec_main.init(cfg, rng);
    m.dec_aux.resize(static_cast<std::size_t>(cfg.adapt_iters - 1));
    for (auto& d : m.dec_aux) d.init(cfg, rng);
    return m;
}

void Model::visit(const ParamVisitor& fn) {
    enc.visit(fn, cfg);
    rel.visit(fn);
    dec_main.visit("dec.main", fn);
    for (std::size_t k = 0; k < dec_aux.size(); ++k)
        dec_aux[k].visit("dec.aux" + std::to_string(k), fn);
}

Index Model::param_count() {
    Index n = 0;
    visit([&n](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
}

ModelOutput Model::forward(const Tensor& query, const std::vector<Tensor>& exemplars,
                           const std::vector<std::pair<double, double>>& boxes) const {
    EncodeResult er = encode(query, exemplars, enc, cfg);

    Index n = cfg.exemplar_count();
    std::vector<std::pair<double, double>> use_boxes;
    if (cfg.zero_shot()) {
        use_boxes.assign(static_cast<std::size_t>(n),
                         {static_cast<double>(cfg.exemplar_size), static_cast<double>(cfg.exemplar_size)});
    } else {
        if (static_cast<Index>(exemplars.size()) != n)
            throw ConfigError("forward: expected " + std::to_string(n) + " exemplars, got " +
                              std::to_string(exemplars.size()));
        if (boxes.size() != exemplars.size())
            throw DataError("forward: one box per exemplar required");
        use_boxes = boxes;
    }

    Tensor shape_emb = shape_embedding(use_boxes, cfg.image_size, cfg.proto_size, rel);
    Index tpe = cfg.tokens_per_exemplar();
    std::vector<Tensor> appearance;
    for (Index i = 0; i < n; ++i)
        appearance.push_back(
            appearance_pooling(O::slice_rows(er.z_e, i * tpe, (i + 1) * tpe), cfg.proto_size));
    Tensor app = appearance.size() == 1 ? appearance[0] : O::concat_rows(appearance);
    Tensor prototypes = O::add(shape_emb, app);

    std::vector<Tensor> adapted = iterative_adaptation(prototypes, er.z_q, rel, cfg.heads);

    Tensor z_q_map = O::tokens_to_map(er.z_q, cfg.query_grid(), cfg.query_grid());
    double response_scale = 1.0 / (static_cast<double>(cfg.proto_size * cfg.proto_size) *
                                   std::sqrt(static_cast<double>(cfg.embed_dim)));
    std::vector<Tensor> volumes;
    for (const auto& p : adapted)
        volumes.push_back(O::affine(prototype_match(z_q_map, p, cfg.proto_size), response_scale, 0.0));

    auto [y_main, y_aux] = decode_all(volumes, dec_main, dec_aux, cfg);

    ModelOutput out;
    out.y_main = y_main;
    out.y_aux = std::move(y_aux);
    out.as_layers = er.as_layers;
    if (!out.as_layers.empty()) {
        if (tbd_layer >= 0) {
            if (tbd_layer >= static_cast<Index>(out.as_layers.size()))
                throw ConfigError("forward: tbd_layer out of range");
            out.as_for_loss = out.as_layers[static_cast<std::size_t>(tbd_layer)];
        } else {
            Tensor acc = out.as_layers[0];
            for (std::size_t l = 1; l < out.as_layers.size(); ++l)
                acc = O::add(acc, out.as_layers[l]);
            out.as_for_loss = O::affine(acc, 1.0 / static_cast<double>(out.as_layers.size()), 0.0);
        }
    }
    return out;
}

}  // namespace mafea
