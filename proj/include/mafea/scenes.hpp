#pragma once

#include <array>

#include "mafea/tensor.hpp"

namespace mafea {

/// Appearance and population of one object class in a generated scene.
struct ClassSpec {
    Index count_min = 5, count_max = 12;
    double radius_min = 2.5, radius_max = 4.5;
    Index shape = 0;  // 0 disc, 1 square, 2 ring
    std::array<double, 3> color{0.8, 0.3, 0.3};
    double color_jitter = 0.04;
};

struct SceneSpec {
    Index image_size = 64;
    std::vector<ClassSpec> classes;
    Index target_class = 0;  // -1: rotate by sample index when a set is generated
    /// Non-target object count is forced to at least this fraction of the
    /// target count, so every scene carries real distractors.
    double min_nontarget_ratio = 0.2;
    bool allow_overlap = false;
    double sigma = 1.0;        // ground-truth blob spread in pixels
    Index exemplar_size = 16;  // crops are resized to this square
    Index n_exemplars = 3;

    std::string to_json() const;
    static SceneSpec from_json(const std::string& text);
    /// Two visually related classes (red-ish discs vs squares); the stock
    /// spec behind configs and tests.
    static SceneSpec default_two_class();
};

struct CountingSample {
    Tensor query;                                        // [3, H, W]
    std::vector<Tensor> exemplars;                       // crops [3, E, E]
    std::vector<std::pair<double, double>> boxes;        // (w, h) pixels pre-resize
    std::vector<std::pair<double, double>> points;       // target centers (x, y)
    std::vector<std::pair<double, double>> nontarget_points;
    Tensor density;                                      // [1, H, W], mass == #points
};

/// Deterministic scene draw: places every class without overlap (bounded
/// retries), renders, crops exemplars from target instances, builds the
/// ground-truth density.
CountingSample generate_scene(const SceneSpec& spec, Index target_class, Rng& rng);

/// Sum of unit-mass Gaussian blobs at pixel centers; each blob is
/// renormalized after boundary clipping so per-point mass is exactly one.
Tensor density_from_points(const std::vector<std::pair<double, double>>& points, Index image_size,
                           double sigma);

/// Published multi-class subset indices; split is "val" or "test".
const std::vector<int>& fsc147_multi_indices(const std::string& split);

void save_sample(const std::string& dir, const CountingSample& sample);
CountingSample load_sample(const std::string& dir);

struct Dataset {
    SceneSpec spec;
    std::vector<CountingSample> train, eval;
};

/// Writes n samples (3:1 train/eval split) plus a manifest under out_dir.
/// With target_class = -1 the target rotates through the classes by index.
void make_dataset(const SceneSpec& spec, const std::string& out_dir, Index n, std::uint64_t seed);
Dataset load_dataset(const std::string& dir);

}  // namespace mafea
