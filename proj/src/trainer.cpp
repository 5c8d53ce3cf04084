#include "mafea/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "mafea/serialize.hpp"

namespace mafea {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_sample(const CountingSample& s, const ModelConfig& mc, const std::string& what) {
    const Index is = mc.image_size;
    if (!s.query.defined() || s.query.shape() != Shape{3, is, is})
        throw DataError(what + ": query is not 3x" + std::to_string(is) + "x" + std::to_string(is));
    if (!s.density.defined() || s.density.shape() != Shape{1, is, is})
        throw DataError(what + ": density map does not match the image size");
    if (!mc.zero_shot()) {
        if (static_cast<Index>(s.exemplars.size()) < mc.shots)
            throw DataError(what + ": needs " + std::to_string(mc.shots) + " exemplars, has " +
                            std::to_string(s.exemplars.size()));
        for (Index i = 0; i < mc.shots; ++i)
            if (s.exemplars[static_cast<std::size_t>(i)].shape() !=
                Shape{3, mc.exemplar_size, mc.exemplar_size})
                throw DataError(what + ": exemplar " + std::to_string(i) + " is not 3x" +
                                std::to_string(mc.exemplar_size) + "x" +
                                std::to_string(mc.exemplar_size));
        if (s.boxes.size() != s.exemplars.size())
            throw DataError(what + ": box/exemplar count mismatch");
    }
}

/// First `shots` exemplars and boxes; empty in zero-shot mode.
void shot_view(const CountingSample& s, const ModelConfig& mc, std::vector<Tensor>& ex,
               std::vector<std::pair<double, double>>& bx) {
    ex.clear();
    bx.clear();
    if (mc.zero_shot()) return;
    for (Index i = 0; i < mc.shots; ++i) {
        ex.push_back(s.exemplars[static_cast<std::size_t>(i)]);
        bx.push_back(s.boxes[static_cast<std::size_t>(i)]);
    }
}

double map_sum(const Tensor& t) {
    double s = 0;
    for (double v : t.values()) s += v;
    return s;
}

Index thread_budget(Index n_items) {
    Index cap = 1;
    if (const char* env = std::getenv("MAFEA_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw ConfigError("MAFEA_THREADS must be a positive integer");
        cap = static_cast<Index>(v);
    }
    return std::clamp<Index>(cap, 1, std::max<Index>(1, n_items));
}

}  // namespace

std::string metrics_to_csv(const std::vector<EpochStats>& epochs) {
    std::string out = "epoch,lr,loss,count,aux,tbd,eval_mae,eval_rmse\n";
    for (const EpochStats& e : epochs) {
        out += std::to_string(e.epoch) + ',' + fmt(e.lr) + ',' + fmt(e.loss) + ',' +
               fmt(e.count_l) + ',' + fmt(e.aux_l) + ',' + fmt(e.tbd_l) + ',';
        if (e.has_eval) out += fmt(e.eval_mae) + ',' + fmt(e.eval_rmse);
        else out += ',';
        out += '\n';
    }
    return out;
}

TrainResult train(const TrainConfig& cfg, const Dataset& data) {
    cfg.validate();
    if (data.train.empty()) throw DataError("training split is empty");
    for (std::size_t i = 0; i < data.train.size(); ++i)
        check_sample(data.train[i], cfg.model, "train sample " + std::to_string(i));
    for (std::size_t i = 0; i < data.eval.size(); ++i)
        check_sample(data.eval[i], cfg.model, "eval sample " + std::to_string(i));

    Rng rng(cfg.seed);
    TrainResult result{Model::init(cfg.model, cfg.tbd_layer, rng), {}};
    Model& model = result.model;

    std::vector<Tensor> slots;
    model.visit([&](const std::string&, Tensor& t) { slots.push_back(t); });

    // adaptive-moment state, one pair of buffers per parameter slot
    std::vector<std::vector<double>> m_state(slots.size()), v_state(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        m_state[i].assign(static_cast<std::size_t>(slots[i].numel()), 0.0);
        v_state[i].assign(static_cast<std::size_t>(slots[i].numel()), 0.0);
    }

    if (cfg.keep_best && data.eval.empty()) throw DataError("keep_best needs a non-empty eval split");

    // snapshot of the best-eval parameters, restored after the last epoch
    double best_mae = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_params;

    const Index n_train = static_cast<Index>(data.train.size());
    const Index grid = cfg.model.query_grid();
    std::vector<Index> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), Index{0});

    Index step = 0;
    for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Index halvings = cfg.lr_halve_every > 0 ? epoch / cfg.lr_halve_every : 0;
        const double lr = std::ldexp(cfg.lr, -static_cast<int>(halvings));

        for (Index i = n_train - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(rng.uniform_int(0, i))]);

        double ep_loss = 0, ep_count = 0, ep_aux = 0, ep_tbd = 0;
        Index n_batches = 0;

        for (Index start = 0; start < n_train; start += cfg.batch_size) {
            const Index stop = std::min(n_train, start + cfg.batch_size);
            const Index nb = stop - start;

            double m_total = 0;
            for (Index i = start; i < stop; ++i)
                m_total += static_cast<double>(
                    data.train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]
                        .points.size());

            for (Tensor& p : slots) p.zero_grad();

            Tensor count_sum, aux_sum, tbd_sum;
            std::vector<Tensor> ex;
            std::vector<std::pair<double, double>> bx;
            for (Index i = start; i < stop; ++i) {
                const CountingSample& s =
                    data.train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
                shot_view(s, cfg.model, ex, bx);
                ModelOutput out = model.forward(s.query, ex, bx);

                Tensor cl = count_loss(out.y_main, s.density, m_total);
                count_sum = count_sum.defined() ? ops::add(count_sum, cl) : cl;
                if (!out.y_aux.empty()) {
                    Tensor al = aux_loss(out.y_aux, s.density, m_total);
                    aux_sum = aux_sum.defined() ? ops::add(aux_sum, al) : al;
                }
                if (cfg.model.tbd) {
                    TokenPartition part =
                        partition_tokens(s.points, cfg.model.patch_size, grid, grid);
                    Tensor tl = tbd_loss(out.as_for_loss, part);
                    tbd_sum = tbd_sum.defined() ? ops::add(tbd_sum, tl) : tl;
                }
            }

            Tensor aux_term = aux_sum.defined() ? aux_sum : Tensor::scalar(0.0);
            Tensor tbd_term = tbd_sum.defined()
                                  ? ops::affine(tbd_sum, 1.0 / static_cast<double>(nb), 0.0)
                                  : Tensor::scalar(0.0);
            Tensor total = total_loss(count_sum, aux_term, tbd_term, cfg.lambda1, cfg.lambda2);
            backward(total);

            double sq = 0;
            for (Tensor& p : slots)
                for (double g : p.grad()) sq += g * g;
            if (!std::isfinite(sq)) throw NumericError("gradient norm is not finite");
            const double norm = std::sqrt(sq);
            const double scale =
                (cfg.clip_norm > 0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t si = 0; si < slots.size(); ++si) {
                double* w = slots[si].ptr();
                const std::vector<double>& g = slots[si].grad();
                std::vector<double>& m = m_state[si];
                std::vector<double>& v = v_state[si];
                for (std::size_t j = 0; j < g.size(); ++j) {
                    const double gj = g[j] * scale;
                    m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
                    v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
                    const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.adam_eps);
                    w[j] -= lr * (update + cfg.weight_decay * w[j]);
                }
            }

            ep_loss += total.item();
            ep_count += count_sum.item();
            ep_aux += aux_term.item();
            ep_tbd += tbd_term.item();
            ++n_batches;
        }

        EpochStats st;
        st.epoch = epoch;
        st.lr = lr;
        const double inv = 1.0 / static_cast<double>(n_batches);
        st.loss = ep_loss * inv;
        st.count_l = ep_count * inv;
        st.aux_l = ep_aux * inv;
        st.tbd_l = ep_tbd * inv;
        if (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 && !data.eval.empty()) {
            EvalReport rep = evaluate(model, data.eval, cfg.model.shots, false);
            st.has_eval = true;
            st.eval_mae = rep.mae;
            st.eval_rmse = rep.rmse;
            if (cfg.keep_best && rep.mae < best_mae) {
                best_mae = rep.mae;
                result.best_epoch = epoch;
                best_params.clear();
                for (Tensor& p : slots) best_params.push_back(p.values());
            }
        }
        result.epochs.push_back(st);
    }
    if (cfg.keep_best && result.best_epoch >= 0)
        for (std::size_t i = 0; i < slots.size(); ++i) {
            double* w = slots[i].ptr();
            const std::vector<double>& src = best_params[i];
            std::copy(src.begin(), src.end(), w);
        }
    return result;
}

EvalReport evaluate(const Model& model, const std::vector<CountingSample>& samples, Index shots,
                    bool regions) {
    if (samples.empty()) throw DataError("evaluation split is empty");
    ModelConfig mc = model.cfg;
    mc.shots = shots;
    for (std::size_t i = 0; i < samples.size(); ++i)
        check_sample(samples[i], mc, "eval sample " + std::to_string(i));

    const Index n = static_cast<Index>(samples.size());
    std::vector<double> pred(static_cast<std::size_t>(n)), gt(static_cast<std::size_t>(n));
    std::vector<RegionCounts> region(regions ? static_cast<std::size_t>(n) : 0);

    const Index n_threads = thread_budget(n);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));

    auto worker = [&](Index tid, Index begin, Index end) {
        try {
            NoGradGuard guard;
            std::vector<Tensor> ex;
            std::vector<std::pair<double, double>> bx;
            for (Index i = begin; i < end; ++i) {
                const CountingSample& s = samples[static_cast<std::size_t>(i)];
                shot_view(s, mc, ex, bx);
                ModelOutput out = model.forward(s.query, ex, bx);
                pred[static_cast<std::size_t>(i)] = map_sum(out.y_main);
                gt[static_cast<std::size_t>(i)] = static_cast<double>(s.points.size());
                if (regions) {
                    // region geometry comes from the full annotation, not the
                    // shot subset the model happened to see
                    RegionMasks masks = region_masks(s.points, s.boxes, mc.image_size);
                    region[static_cast<std::size_t>(i)] = region_eval(out.y_main, s.density, masks);
                }
            }
        } catch (...) {
            errors[static_cast<std::size_t>(tid)] = std::current_exception();
        }
    };

    if (n_threads == 1) {
        worker(0, 0, n);
    } else {
        std::vector<std::thread> pool;
        const Index per = (n + n_threads - 1) / n_threads;
        for (Index t = 0; t < n_threads; ++t)
            pool.emplace_back(worker, t, t * per, std::min(n, (t + 1) * per));
        for (std::thread& t : pool) t.join();
    }
    for (std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);

    return regions ? make_report(pred, gt, region) : make_report(pred, gt);
}

void export_asmap(const Model& model, const CountingSample& sample, const std::string& prefix) {
    if (!model.cfg.bt)
        throw ConfigError("alignment maps require a model trained with the background token");
    check_sample(sample, model.cfg, "sample");

    NoGradGuard guard;
    std::vector<Tensor> ex;
    std::vector<std::pair<double, double>> bx;
    shot_view(sample, model.cfg, ex, bx);
    ModelOutput out = model.forward(sample.query, ex, bx);

    const Index g = model.cfg.query_grid();
    const std::vector<double>& as = out.as_for_loss.values();
    std::vector<double> exmass(as.size());
    for (std::size_t i = 0; i < as.size(); ++i) exmass[i] = 1.0 - as[i];

    auto write_csv = [&](const std::string& path, const std::vector<double>& v) {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot write " + path);
        for (Index r = 0; r < g; ++r) {
            for (Index c = 0; c < g; ++c) {
                if (c) f << ',';
                f << fmt(v[static_cast<std::size_t>(r * g + c)]);
            }
            f << '\n';
        }
    };
    write_csv(prefix + "_as.csv", as);
    write_csv(prefix + "_exmass.csv", exmass);
    io::write_pgm16(prefix + "_as.pgm", Tensor::from_data({g, g}, as), 65535.0);
    io::write_pgm16(prefix + "_exmass.pgm", Tensor::from_data({g, g}, std::move(exmass)), 65535.0);
}

std::string run_ablation_suite(const TrainConfig& base, const Dataset& data) {
    if (data.eval.empty()) throw DataError("ablation needs a non-empty evaluation split");

    struct Variant {
        const char* name;
        bool mrm, bt, tbd;
    };
    // cumulative switch ladder: plain encoder, +cross-attention, +background
    // token, +alignment loss
    const Variant variants[] = {
        {"baseline", false, false, false},
        {"+mrm", true, false, false},
        {"+bt", true, true, false},
        {"full", true, true, true},
    };

    std::string csv =
        "variant,mrm,bt,tbd,mae,rmse,target_mae,target_rmse,nontarget_mae,nontarget_rmse\n";
    for (const Variant& v : variants) {
        TrainConfig cfg = base;
        cfg.model.mrm = v.mrm;
        cfg.model.bt = v.bt;
        cfg.model.tbd = v.tbd;
        TrainResult r = train(cfg, data);
        EvalReport rep = evaluate(r.model, data.eval, cfg.model.shots, true);
        csv += std::string(v.name) + ',' + (v.mrm ? '1' : '0') + ',' + (v.bt ? '1' : '0') + ',' +
               (v.tbd ? '1' : '0') + ',' + fmt(rep.mae) + ',' + fmt(rep.rmse) + ',' +
               fmt(rep.target.mae) + ',' + fmt(rep.target.rmse) + ',' + fmt(rep.nontarget.mae) +
               ',' + fmt(rep.nontarget.rmse) + '\n';
    }
    return csv;
}

void save_checkpoint(const std::string& path, Model& model, const TrainConfig& cfg) {
    io::Archive a;
    a.texts["config"] = cfg.to_text();
    a.texts["format"] = "mafea-checkpoint-1";
    model.visit([&](const std::string& name, Tensor& t) { a.tensors[name] = t; });
    a.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
    io::Archive a = io::Archive::load(path);
    auto cfg_it = a.texts.find("config");
    if (cfg_it == a.texts.end()) throw DataError("checkpoint has no embedded config");
    TrainConfig cfg = TrainConfig::parse_text(cfg_it->second);

    Rng rng(0);  // placeholder draws; every value is overwritten below
    Checkpoint ck{Model::init(cfg.model, cfg.tbd_layer, rng), cfg};
    Index seen = 0;
    ck.model.visit([&](const std::string& name, Tensor& t) {
        auto it = a.tensors.find(name);
        if (it == a.tensors.end()) throw DataError("checkpoint is missing parameter " + name);
        if (it->second.shape() != t.shape())
            throw DataError("checkpoint parameter " + name + " has the wrong shape");
        t.values() = it->second.values();
        ++seen;
    });
    if (seen != static_cast<Index>(a.tensors.size()))
        throw DataError("checkpoint holds parameters this config does not use");
    return ck;
}

}  // namespace mafea
