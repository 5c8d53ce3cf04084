#include "mafea/objectives.hpp"

#include <cmath>

#include "json.hpp"

namespace mafea {

namespace O = ops;

TokenPartition partition_tokens(const std::vector<std::pair<double, double>>& points, Index patch,
                                Index grid_h, Index grid_w) {
    if (patch < 1 || grid_h < 1 || grid_w < 1) throw ConfigError("partition_tokens: bad grid");
    TokenPartition part;
    part.positive.assign(static_cast<std::size_t>(grid_h * grid_w), false);
    double w_px = static_cast<double>(grid_w * patch);
    double h_px = static_cast<double>(grid_h * patch);
    for (auto [x, y] : points) {
        if (x < 0 || y < 0 || x >= w_px || y >= h_px)
            throw DataError("point (" + std::to_string(x) + ", " + std::to_string(y) +
                            ") lies outside the image");
        Index tx = static_cast<Index>(std::floor(x / static_cast<double>(patch)));
        Index ty = static_cast<Index>(std::floor(y / static_cast<double>(patch)));
        part.positive[static_cast<std::size_t>(ty * grid_w + tx)] = true;
    }
    return part;
}

Tensor tbd_loss(const Tensor& alignment, const TokenPartition& partition) {
    if (alignment.rank() != 1) throw ConfigError("tbd_loss: alignment scores must be a vector");
    Index n = alignment.dim(0);
    if (static_cast<std::size_t>(n) != partition.positive.size())
        throw ConfigError("tbd_loss: partition size " + std::to_string(partition.positive.size()) +
                          " does not match " + std::to_string(n) + " tokens");
    std::vector<double> pos(static_cast<std::size_t>(n)), neg(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        bool p = partition.positive[static_cast<std::size_t>(i)];
        pos[static_cast<std::size_t>(i)] = p ? 1.0 : 0.0;
        neg[static_cast<std::size_t>(i)] = p ? 0.0 : 1.0;
    }
    Tensor pos_mask = Tensor::from_data({n}, std::move(pos));
    Tensor neg_mask = Tensor::from_data({n}, std::move(neg));
    Tensor as = O::clamp(alignment, 1e-12, 1.0 - 1e-12);
    Tensor pos_term = O::mul(pos_mask, O::affine(O::log(O::affine(as, -1.0, 1.0)), -1.0, 0.0));
    Tensor neg_term = O::mul(neg_mask, O::affine(O::log(as), -1.0, 0.0));
    return O::mean_all(O::add(pos_term, neg_term));
}

Tensor count_loss(const Tensor& y, const Tensor& gt, double m_objects) {
    double m = std::max(1.0, m_objects);
    Tensor diff = O::sub(y, gt);
    return O::affine(O::sum_all(O::mul(diff, diff)), 1.0 / m, 0.0);
}

Tensor aux_loss(const std::vector<Tensor>& intermediates, const Tensor& gt, double m_objects) {
    if (intermediates.empty()) return Tensor::scalar(0.0);
    Tensor acc = count_loss(intermediates[0], gt, m_objects);
    for (std::size_t k = 1; k < intermediates.size(); ++k)
        acc = O::add(acc, count_loss(intermediates[k], gt, m_objects));
    return acc;
}

Tensor total_loss(const Tensor& count_l, const Tensor& aux_l, const Tensor& tbd_l, double lambda1,
                  double lambda2) {
    return O::add(O::add(count_l, O::affine(aux_l, lambda1, 0.0)), O::affine(tbd_l, lambda2, 0.0));
}

std::pair<double, double> mae_rmse(const std::vector<double>& pred, const std::vector<double>& gt) {
    if (pred.empty() || pred.size() != gt.size())
        throw ConfigError("mae_rmse: need equal, non-empty count lists");
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - gt[i];
        abs_sum += std::fabs(d);
        sq_sum += d * d;
    }
    double n = static_cast<double>(pred.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

RegionMasks region_masks(const std::vector<std::pair<double, double>>& points,
                         const std::vector<std::pair<double, double>>& exemplar_boxes,
                         Index image_size) {
    if (image_size < 1) throw ConfigError("region_masks: bad image size");
    double max_w = 0.0, max_h = 0.0;
    for (auto [w, h] : exemplar_boxes) {
        max_w = std::max(max_w, w);
        max_h = std::max(max_h, h);
    }
    if (!points.empty() && exemplar_boxes.empty())
        throw ConfigError("region_masks: points given but no exemplar boxes to size them");
    std::vector<double> target(static_cast<std::size_t>(image_size * image_size), 0.0);
    for (auto [x, y] : points) {
        Index x0 = static_cast<Index>(std::floor(x - max_w / 2.0));
        Index x1 = static_cast<Index>(std::ceil(x + max_w / 2.0));
        Index y0 = static_cast<Index>(std::floor(y - max_h / 2.0));
        Index y1 = static_cast<Index>(std::ceil(y + max_h / 2.0));
        x0 = std::max<Index>(x0, 0);
        y0 = std::max<Index>(y0, 0);
        x1 = std::min<Index>(x1, image_size);
        y1 = std::min<Index>(y1, image_size);
        for (Index py = y0; py < y1; ++py)
            for (Index px = x0; px < x1; ++px)
                target[static_cast<std::size_t>(py * image_size + px)] = 1.0;
    }
    std::vector<double> nontarget(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) nontarget[i] = 1.0 - target[i];
    RegionMasks masks;
    masks.target = Tensor::from_data({image_size, image_size}, std::move(target));
    masks.nontarget = Tensor::from_data({image_size, image_size}, std::move(nontarget));
    return masks;
}

RegionCounts region_eval(const Tensor& pred, const Tensor& gt, const RegionMasks& masks) {
    if (pred.numel() != gt.numel() || pred.numel() != masks.target.numel())
        throw ConfigError("region_eval: map/mask sizes disagree");
    const auto& p = pred.values();
    const auto& g = gt.values();
    const auto& t = masks.target.values();
    RegionCounts rc;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (t[i] != 0.0) {
            rc.pred_target += p[i];
            rc.gt_target += g[i];
        } else {
            rc.pred_nontarget += p[i];
            rc.gt_nontarget += g[i];
        }
    }
    return rc;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["mae"] = mae;
    j["rmse"] = rmse;
    j["n"] = n;
    if (has_regions) {
        j["target"] = {{"mae", target.mae}, {"rmse", target.rmse}};
        j["nontarget"] = {{"mae", nontarget.mae}, {"rmse", nontarget.rmse}};
    }
    return j.dump(2);
}

EvalReport make_report(const std::vector<double>& pred, const std::vector<double>& gt) {
    EvalReport r;
    auto [mae, rmse] = mae_rmse(pred, gt);
    r.mae = mae;
    r.rmse = rmse;
    r.n = static_cast<Index>(pred.size());
    return r;
}

EvalReport make_report(const std::vector<double>& pred, const std::vector<double>& gt,
                       const std::vector<RegionCounts>& regions) {
    EvalReport r = make_report(pred, gt);
    if (regions.size() != pred.size())
        throw ConfigError("make_report: region records must match image count");
    std::vector<double> pt, gtt, pn, gn;
    for (const auto& rc : regions) {
        pt.push_back(rc.pred_target);
        gtt.push_back(rc.gt_target);
        pn.push_back(rc.pred_nontarget);
        gn.push_back(rc.gt_nontarget);
    }
    auto [tm, tr] = mae_rmse(pt, gtt);
    auto [nm, nr] = mae_rmse(pn, gn);
    r.has_regions = true;
    r.target = {tm, tr};
    r.nontarget = {nm, nr};
    return r;
}

}  // namespace mafea
