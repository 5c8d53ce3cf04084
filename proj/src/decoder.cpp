#include "mafea/decoder.hpp"

#include <cmath>

namespace mafea {

namespace O = ops;

namespace {

Index stage_count(const ModelConfig& cfg) {
    // one x2 stage per factor of two between token grid and pixel grid
    Index f = cfg.patch_size, n = 0;
    while (f > 1) {
        f /= 2;
        ++n;
    }
    return n;
}

Index stage_width(const ModelConfig& cfg, Index stage) {
    Index w = cfg.embed_dim >> stage;
    return w < 2 ? 2 : w;
}

Tensor conv_init(Index cout, Index cin, Index k, Rng& rng) {
    double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    return Tensor::randn({cout, cin, k, k}, rng, stddev, true);
}

}  // namespace

void DecoderParams::init(const ModelConfig& cfg, Rng& rng) {
    Index n = stage_count(cfg);
    stages.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        Index cin = stage_width(cfg, i), cout = stage_width(cfg, i + 1);
        stages[static_cast<std::size_t>(i)].w = conv_init(cout, cin, 3, rng);
        stages[static_cast<std::size_t>(i)].b = Tensor::zeros({cout}, true);
    }
    head_w = conv_init(1, stage_width(cfg, n), 3, rng);
    // negative prior: a fresh model should predict a near-empty scene, not a
    // softplus(0) = ln 2 carpet summing to thousands of objects
    head_b = Tensor::full({1}, -5.0, true);
}

void DecoderParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    for (std::size_t i = 0; i < stages.size(); ++i) {
        fn(prefix + ".conv" + std::to_string(i) + ".w", stages[i].w);
        fn(prefix + ".conv" + std::to_string(i) + ".b", stages[i].b);
    }
    fn(prefix + ".head.w", head_w);
    fn(prefix + ".head.b", head_b);
}

Tensor decode(const Tensor& volume, const DecoderParams& params, const ModelConfig& cfg) {
    Shape want{cfg.embed_dim, cfg.query_grid(), cfg.query_grid()};
    if (volume.shape() != want)
        throw ConfigError("decode: volume shape " + shape_to_string(volume.shape()) + ", expected " +
                          shape_to_string(want));
    Tensor x = volume;
    for (const auto& st : params.stages)
        x = O::bilinear_upsample(O::leaky_relu(O::conv2d(x, st.w, st.b, 1, 1)), 2);
    return O::density_rectifier(O::conv2d(x, params.head_w, params.head_b, 1, 1));
}

std::pair<Tensor, std::vector<Tensor>> decode_all(const std::vector<Tensor>& volumes,
                                                  const DecoderParams& main_params,
                                                  const std::vector<DecoderParams>& aux_params,
                                                  const ModelConfig& cfg) {
    if (volumes.empty()) throw ConfigError("decode_all: no correlation volumes");
    if (aux_params.size() + 1 != volumes.size())
        throw ConfigError("decode_all: need one auxiliary decoder per intermediate volume");
    std::vector<Tensor> aux;
    for (std::size_t k = 0; k + 1 < volumes.size(); ++k)
        aux.push_back(decode(volumes[k], aux_params[k], cfg));
    return {decode(volumes.back(), main_params, cfg), std::move(aux)};
}

Tensor count(const Tensor& density_map) { return O::sum_all(density_map); }

}  // namespace mafea
