#pragma once

#include <string>

#include "mafea/common.hpp"

namespace mafea {

/// Architecture knobs shared by encoder, relation learner, and decoder.
struct ModelConfig {
    Index image_size = 64;    // query images are image_size x image_size
    Index patch_size = 8;     // S
    Index embed_dim = 32;     // C
    Index heads = 2;          // h
    Index layers = 2;         // L, mutual-relation layers
    Index exemplar_size = 16; // exemplar crops resized to this square
    Index shots = 3;          // M; 0 switches to learnable exemplar tokens
    Index proto_size = 3;     // s, prototype spatial extent
    Index adapt_iters = 3;    // K, prototype adaptation iterations

    // ablation switches; tbd needs bt needs mrm
    bool mrm = true;
    bool bt = true;
    bool tbd = true;

    bool zero_shot() const { return shots == 0; }
    Index query_grid() const { return image_size / patch_size; }
    Index exemplar_grid() const { return exemplar_size / patch_size; }
    Index query_tokens() const { return query_grid() * query_grid(); }
    Index tokens_per_exemplar() const { return exemplar_grid() * exemplar_grid(); }
    /// Pseudo-exemplar count used when no real exemplars exist (zero-shot).
    static constexpr Index kZeroShotExemplars = 3;
    Index exemplar_count() const { return zero_shot() ? kZeroShotExemplars : shots; }
    Index exemplar_tokens() const { return exemplar_count() * tokens_per_exemplar(); }
};

struct TrainConfig {
    ModelConfig model;

    double lambda1 = 0.3;   // auxiliary-map loss weight
    double lambda2 = 0.05;  // alignment (target/background) loss weight
    Index tbd_layer = -1;   // layer whose alignment scores feed the loss; -1 = mean of all

    double lr = 5e-4;
    Index lr_halve_every = 40;  // epochs between halvings
    double weight_decay = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;  // global gradient-norm cap; 0 disables

    Index batch_size = 4;
    Index epochs = 100;
    Index eval_every = 0;   // run eval every k epochs during training; 0 = never
    bool keep_best = false;  // return the params from the best-MAE eval, not the last epoch
    std::uint64_t seed = 0;

    /// Throws ConfigError on any inconsistent combination.
    void validate() const;
    /// Canonical key=value text (round-trips through parse).
    std::string to_text() const;

    static TrainConfig parse_text(const std::string& text);
    static TrainConfig load(const std::string& path);
    /// Built-in templates: "desk" (default scale), "minimal" (smallest legal
    /// model), "full" (publication-scale constants; far too slow to train here).
    static TrainConfig profile(const std::string& name);
};

}  // namespace mafea
