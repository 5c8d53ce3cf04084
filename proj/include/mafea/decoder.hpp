#pragma once

#include "mafea/encoder.hpp"

namespace mafea {

/// Conv + upsample tower from the correlation-volume grid up to pixel
/// resolution, ending in a single-channel non-negative head. Channel widths
/// halve per stage starting from the embedding width.
struct DecoderParams {
    struct Stage {
        Tensor w, b;  // 3x3 conv
    };
    std::vector<Stage> stages;  // one per x2 upsampling
    Tensor head_w, head_b;      // 3x3 conv to 1 channel

    void init(const ModelConfig& cfg, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// volume [C, g, g] -> density map [1, H, W].
Tensor decode(const Tensor& volume, const DecoderParams& params, const ModelConfig& cfg);

/// Last volume through the main decoder, earlier ones through per-index
/// auxiliary decoders. Returns (main map, auxiliary maps in volume order).
std::pair<Tensor, std::vector<Tensor>> decode_all(const std::vector<Tensor>& volumes,
                                                  const DecoderParams& main_params,
                                                  const std::vector<DecoderParams>& aux_params,
                                                  const ModelConfig& cfg);

/// Predicted count: the integral of the map.
Tensor count(const Tensor& density_map);

}  // namespace mafea
