#pragma once

#include "mafea/config.hpp"
#include "mafea/model.hpp"
#include "mafea/objectives.hpp"
#include "mafea/scenes.hpp"

namespace mafea {

struct EpochStats {
    Index epoch = 0;
    double lr = 0;
    double loss = 0, count_l = 0, aux_l = 0, tbd_l = 0;
    bool has_eval = false;
    double eval_mae = 0, eval_rmse = 0;
};

struct TrainResult {
    Model model;
    std::vector<EpochStats> epochs;
    Index best_epoch = -1;  // epoch whose eval won under keep_best; -1 = last epoch
};

/// Full-precision CSV of the per-epoch log (the file the train command
/// writes; byte-stable for identical runs).
std::string metrics_to_csv(const std::vector<EpochStats>& epochs);

/// Deterministic mini-batch training from a fixed seed: decoupled-weight-
/// decay adaptive moments, halving schedule, global-norm gradient clipping.
TrainResult train(const TrainConfig& cfg, const Dataset& data);

/// Counts every sample with the frozen model; optional target/non-target
/// region sub-reports. MAFEA_THREADS caps per-image fan-out.
EvalReport evaluate(const Model& model, const std::vector<CountingSample>& samples,
                    Index shots, bool regions);

/// Writes the background-alignment map (grid CSV + 16-bit PGM) and its
/// exemplar-mass complement for one sample: <prefix>_as.{csv,pgm},
/// <prefix>_exmass.{csv,pgm}.
void export_asmap(const Model& model, const CountingSample& sample, const std::string& prefix);

/// Trains the four switch combinations (baseline, +relation layers,
/// +background token, +alignment loss) with a shared seed and returns a CSV
/// of per-region errors.
std::string run_ablation_suite(const TrainConfig& base, const Dataset& data);

void save_checkpoint(const std::string& path, Model& model, const TrainConfig& cfg);
struct Checkpoint {
    Model model;
    TrainConfig cfg;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mafea
