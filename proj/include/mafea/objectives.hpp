#pragma once

#include "mafea/ops.hpp"

namespace mafea {

/// Query tokens split by whether their patch holds at least one annotated
/// point (positive) or none (negative).
struct TokenPartition {
    std::vector<bool> positive;

    Index n_positive() const {
        Index n = 0;
        for (bool p : positive) n += p ? 1 : 0;
        return n;
    }
};

/// Annotated (x, y) pixel points -> patch-grid membership. Token index is
/// floor(y/S) * grid_w + floor(x/S).
TokenPartition partition_tokens(const std::vector<std::pair<double, double>>& points, Index patch,
                                Index grid_h, Index grid_w);

/// Mean per-token binary loss: -log(1 - AS) on positive tokens, -log(AS) on
/// negative ones. Scores are clamped away from {0,1} before the logs.
Tensor tbd_loss(const Tensor& alignment, const TokenPartition& partition);

/// Squared-error sum over the map divided by the object count (clamped >= 1).
Tensor count_loss(const Tensor& y, const Tensor& gt, double m_objects);

/// Sum of object-normalized squared errors over the intermediate maps.
Tensor aux_loss(const std::vector<Tensor>& intermediates, const Tensor& gt, double m_objects);

/// count + lambda1 * aux + lambda2 * tbd.
Tensor total_loss(const Tensor& count_l, const Tensor& aux_l, const Tensor& tbd_l, double lambda1,
                  double lambda2);

std::pair<double, double> mae_rmse(const std::vector<double>& pred, const std::vector<double>& gt);

/// Binary pixel masks: target = union of boxes of the maximum exemplar
/// width/height centered on each point, clipped; nontarget = complement.
struct RegionMasks {
    Tensor target;     // [H, W], entries in {0,1}
    Tensor nontarget;  // [H, W], exact complement
};
RegionMasks region_masks(const std::vector<std::pair<double, double>>& points,
                         const std::vector<std::pair<double, double>>& exemplar_boxes,
                         Index image_size);

/// Per-region mass of a predicted and ground-truth map pair.
struct RegionCounts {
    double pred_target = 0, gt_target = 0;
    double pred_nontarget = 0, gt_nontarget = 0;
};
RegionCounts region_eval(const Tensor& pred, const Tensor& gt, const RegionMasks& masks);

struct EvalStats {
    double mae = 0, rmse = 0;
};
struct EvalReport {
    double mae = 0, rmse = 0;
    Index n = 0;
    bool has_regions = false;
    EvalStats target, nontarget;

    std::string to_json() const;
};

EvalReport make_report(const std::vector<double>& pred, const std::vector<double>& gt);
EvalReport make_report(const std::vector<double>& pred, const std::vector<double>& gt,
                       const std::vector<RegionCounts>& regions);

}  // namespace mafea
