#include "mafea/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mafea/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mafea {

namespace {

struct Placed {
    Index cls;
    double x, y, r;
    std::array<double, 3> color;
};

bool inside_shape(Index shape, double dx, double dy, double r) {
    double d2 = dx * dx + dy * dy;
    switch (shape) {
        case 0: return d2 <= r * r;                                       // disc
        case 1: return std::fabs(dx) <= r && std::fabs(dy) <= r;          // square
        default: return d2 <= r * r && d2 >= (r / 2.0) * (r / 2.0);       // ring
    }
}

// Edge-clamped bilinear read of one channel plane.
double sample_plane(const double* plane, Index h, Index w, double sy, double sx) {
    auto clampi = [](Index v, Index hi) { return std::clamp<Index>(v, 0, hi); };
    Index y0 = static_cast<Index>(std::floor(sy));
    Index x0 = static_cast<Index>(std::floor(sx));
    double fy = sy - std::floor(sy), fx = sx - std::floor(sx);
    Index y0c = clampi(y0, h - 1), y1c = clampi(y0 + 1, h - 1);
    Index x0c = clampi(x0, w - 1), x1c = clampi(x0 + 1, w - 1);
    return (1 - fy) * ((1 - fx) * plane[y0c * w + x0c] + fx * plane[y0c * w + x1c]) +
           fy * ((1 - fx) * plane[y1c * w + x0c] + fx * plane[y1c * w + x1c]);
}

Tensor crop_resize(const Tensor& image, double cx, double cy, double half, Index out_size) {
    Index h = image.dim(1), w = image.dim(2);
    double side = 2.0 * half;
    std::vector<double> out(static_cast<std::size_t>(3 * out_size * out_size));
    for (Index ch = 0; ch < 3; ++ch) {
        const double* plane = image.ptr() + ch * h * w;
        for (Index i = 0; i < out_size; ++i)
            for (Index j = 0; j < out_size; ++j) {
                double sy = cy - half + (static_cast<double>(i) + 0.5) * side / static_cast<double>(out_size) - 0.5;
                double sx = cx - half + (static_cast<double>(j) + 0.5) * side / static_cast<double>(out_size) - 0.5;
                out[static_cast<std::size_t>((ch * out_size + i) * out_size + j)] =
                    sample_plane(plane, h, w, sy, sx);
            }
    }
    return Tensor::from_data({3, out_size, out_size}, std::move(out));
}

json spec_to_json_obj(const SceneSpec& s) {
    json j;
    j["image_size"] = s.image_size;
    j["target_class"] = s.target_class;
    j["min_nontarget_ratio"] = s.min_nontarget_ratio;
    j["allow_overlap"] = s.allow_overlap;
    j["sigma"] = s.sigma;
    j["exemplar_size"] = s.exemplar_size;
    j["n_exemplars"] = s.n_exemplars;
    j["classes"] = json::array();
    for (const auto& c : s.classes) {
        json cj;
        cj["count_min"] = c.count_min;
        cj["count_max"] = c.count_max;
        cj["radius_min"] = c.radius_min;
        cj["radius_max"] = c.radius_max;
        cj["shape"] = c.shape;
        cj["color"] = c.color;
        cj["color_jitter"] = c.color_jitter;
        j["classes"].push_back(cj);
    }
    return j;
}

SceneSpec spec_from_json_obj(const json& j) {
    SceneSpec s;
    try {
        s.image_size = j.at("image_size").get<Index>();
        s.target_class = j.at("target_class").get<Index>();
        s.min_nontarget_ratio = j.at("min_nontarget_ratio").get<double>();
        s.allow_overlap = j.at("allow_overlap").get<bool>();
        s.sigma = j.at("sigma").get<double>();
        s.exemplar_size = j.at("exemplar_size").get<Index>();
        s.n_exemplars = j.at("n_exemplars").get<Index>();
        s.classes.clear();
        for (const auto& cj : j.at("classes")) {
            ClassSpec c;
            c.count_min = cj.at("count_min").get<Index>();
            c.count_max = cj.at("count_max").get<Index>();
            c.radius_min = cj.at("radius_min").get<double>();
            c.radius_max = cj.at("radius_max").get<double>();
            c.shape = cj.at("shape").get<Index>();
            c.color = cj.at("color").get<std::array<double, 3>>();
            c.color_jitter = cj.at("color_jitter").get<double>();
            s.classes.push_back(c);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("bad scene spec JSON: ") + e.what());
    }
    if (s.classes.empty()) throw DataError("scene spec has no classes");
    if (s.image_size < 8) throw DataError("scene spec image_size too small");
    return s;
}

void validate_target(const SceneSpec& spec, Index target_class) {
    if (target_class < 0 || target_class >= static_cast<Index>(spec.classes.size()))
        throw ConfigError("target class " + std::to_string(target_class) + " out of range");
}

json points_to_json(const std::vector<std::pair<double, double>>& pts) {
    json arr = json::array();
    for (auto [x, y] : pts) arr.push_back({x, y});
    return arr;
}

std::vector<std::pair<double, double>> points_from_json(const json& arr) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : arr) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    return pts;
}

}  // namespace

std::string SceneSpec::to_json() const { return spec_to_json_obj(*this).dump(2); }

SceneSpec SceneSpec::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("scene spec is not valid JSON: ") + e.what());
    }
    return spec_from_json_obj(j);
}

SceneSpec SceneSpec::default_two_class() {
    SceneSpec s;
    ClassSpec discs;
    discs.shape = 0;
    discs.color = {0.80, 0.32, 0.28};
    ClassSpec squares;
    squares.shape = 1;
    squares.color = {0.72, 0.30, 0.42};
    s.classes = {discs, squares};
    s.target_class = -1;
    return s;
}

CountingSample generate_scene(const SceneSpec& spec, Index target_class, Rng& rng) {
    validate_target(spec, target_class);
    Index n_classes = static_cast<Index>(spec.classes.size());
    Index img = spec.image_size;

    // Counts: target first, then the others in class order with the
    // distractor floor applied.
    std::vector<Index> counts(static_cast<std::size_t>(n_classes), 0);
    const ClassSpec& tc = spec.classes[static_cast<std::size_t>(target_class)];
    Index target_count = rng.uniform_int(tc.count_min, tc.count_max);
    counts[static_cast<std::size_t>(target_class)] = target_count;
    Index floor_count =
        static_cast<Index>(std::ceil(spec.min_nontarget_ratio * static_cast<double>(target_count)));
    for (Index c = 0; c < n_classes; ++c) {
        if (c == target_class) continue;
        const ClassSpec& cs = spec.classes[static_cast<std::size_t>(c)];
        Index lo = std::min(std::max(cs.count_min, floor_count), cs.count_max);
        counts[static_cast<std::size_t>(c)] = rng.uniform_int(lo, cs.count_max);
    }
    if (target_count < 1) throw DataError("target class drew zero instances; no exemplar source");

    // Placement with bounded rejection sampling.
    std::vector<Placed> placed;
    for (Index c = 0; c < n_classes; ++c) {
        const ClassSpec& cs = spec.classes[static_cast<std::size_t>(c)];
        for (Index i = 0; i < counts[static_cast<std::size_t>(c)]; ++i) {
            bool ok = false;
            for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
                double r = rng.uniform(cs.radius_min, cs.radius_max);
                double margin = r + 1.0;
                double x = rng.uniform(margin, static_cast<double>(img) - margin);
                double y = rng.uniform(margin, static_cast<double>(img) - margin);
                ok = true;
                if (!spec.allow_overlap) {
                    for (const auto& p : placed) {
                        double dx = p.x - x, dy = p.y - y;
                        double min_d = p.r + r + 1.0;
                        if (dx * dx + dy * dy < min_d * min_d) {
                            ok = false;
                            break;
                        }
                    }
                }
                if (ok) {
                    std::array<double, 3> col;
                    for (int ch = 0; ch < 3; ++ch)
                        col[static_cast<std::size_t>(ch)] =
                            std::clamp(cs.color[static_cast<std::size_t>(ch)] +
                                           rng.uniform(-cs.color_jitter, cs.color_jitter),
                                       0.0, 1.0);
                    placed.push_back({c, x, y, r, col});
                }
            }
            if (!ok)
                throw DataError("could not place " + std::to_string(counts[static_cast<std::size_t>(c)]) +
                                " instances of class " + std::to_string(c) + " without overlap");
        }
    }

    // Exemplar pick: shuffle target instance indices, take the first M
    // (cycling if the scene holds fewer targets than requested).
    std::vector<std::size_t> target_idx;
    for (std::size_t i = 0; i < placed.size(); ++i)
        if (placed[i].cls == target_class) target_idx.push_back(i);
    for (std::size_t i = target_idx.size(); i > 1; --i)
        std::swap(target_idx[i - 1], target_idx[static_cast<std::size_t>(
                                          rng.uniform_int(0, static_cast<Index>(i) - 1))]);

    // Render: noisy background, then the objects in placement order.
    std::vector<double> pixels(static_cast<std::size_t>(3 * img * img));
    for (auto& v : pixels) v = 0.15 + rng.uniform(-0.05, 0.05);
    auto paint = [&](const Placed& p) {
        Index x0 = std::max<Index>(0, static_cast<Index>(std::floor(p.x - p.r - 1)));
        Index x1 = std::min<Index>(img, static_cast<Index>(std::ceil(p.x + p.r + 1)));
        Index y0 = std::max<Index>(0, static_cast<Index>(std::floor(p.y - p.r - 1)));
        Index y1 = std::min<Index>(img, static_cast<Index>(std::ceil(p.y + p.r + 1)));
        Index shape = spec.classes[static_cast<std::size_t>(p.cls)].shape;
        for (Index py = y0; py < y1; ++py)
            for (Index px = x0; px < x1; ++px) {
                double dx = static_cast<double>(px) + 0.5 - p.x;
                double dy = static_cast<double>(py) + 0.5 - p.y;
                if (!inside_shape(shape, dx, dy, p.r)) continue;
                for (Index ch = 0; ch < 3; ++ch)
                    pixels[static_cast<std::size_t>((ch * img + py) * img + px)] =
                        p.color[static_cast<std::size_t>(ch)];
            }
    };
    for (const auto& p : placed) paint(p);

    CountingSample sample;
    sample.query = Tensor::from_data({3, img, img}, std::move(pixels));
    for (const auto& p : placed) {
        if (p.cls == target_class)
            sample.points.emplace_back(p.x, p.y);
        else
            sample.nontarget_points.emplace_back(p.x, p.y);
    }
    for (Index m = 0; m < spec.n_exemplars; ++m) {
        const Placed& p = placed[target_idx[static_cast<std::size_t>(m) % target_idx.size()]];
        double half = p.r + 1.0;
        sample.exemplars.push_back(crop_resize(sample.query, p.x, p.y, half, spec.exemplar_size));
        sample.boxes.emplace_back(2.0 * half, 2.0 * half);
    }
    sample.density = density_from_points(sample.points, img, spec.sigma);
    return sample;
}

Tensor density_from_points(const std::vector<std::pair<double, double>>& points, Index image_size,
                           double sigma) {
    if (sigma <= 0) throw ConfigError("density_from_points: sigma must be positive");
    Index img = image_size;
    std::vector<double> density(static_cast<std::size_t>(img * img), 0.0);
    std::vector<double> blob(density.size());
    for (auto [x, y] : points) {
        double mass = 0.0;
        for (Index py = 0; py < img; ++py)
            for (Index px = 0; px < img; ++px) {
                double dx = static_cast<double>(px) + 0.5 - x;
                double dy = static_cast<double>(py) + 0.5 - y;
                double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                blob[static_cast<std::size_t>(py * img + px)] = v;
                mass += v;
            }
        for (std::size_t i = 0; i < density.size(); ++i) density[i] += blob[i] / mass;
    }
    return Tensor::from_data({1, img, img}, std::move(density));
}

const std::vector<int>& fsc147_multi_indices(const std::string& split) {
    static const std::vector<int> val = {216,  236,  243,  244,  252,  752,  913,  1930, 1999, 2303,
                                         2305, 2306, 2826, 2830, 2837, 2868, 2872, 2875, 2890, 3520,
                                         3592, 3785, 3979, 3980, 4102, 4851, 5103, 5105, 5111, 5669,
                                         6872};
    static const std::vector<int> test = {336, 343, 344, 681, 2143, 3114, 4495, 4885, 4920, 4921,
                                          5379, 6732};
    if (split == "val") return val;
    if (split == "test") return test;
    throw ConfigError("unknown multi-class split '" + split + "' (expected val or test)");
}

void save_sample(const std::string& dir, const CountingSample& sample) {
    fs::create_directories(dir);
    io::save_tensor(dir + "/query.mtnsr", sample.query);
    for (std::size_t i = 0; i < sample.exemplars.size(); ++i)
        io::save_tensor(dir + "/exemplar_" + std::to_string(i) + ".mtnsr", sample.exemplars[i]);
    io::save_tensor(dir + "/density.mtnsr", sample.density);
    json j;
    j["format_version"] = 1;
    j["n_exemplars"] = sample.exemplars.size();
    j["points"] = points_to_json(sample.points);
    j["nontarget_points"] = points_to_json(sample.nontarget_points);
    json boxes = json::array();
    for (auto [w, h] : sample.boxes) boxes.push_back({w, h});
    j["boxes"] = boxes;
    std::ofstream out(dir + "/annot.json");
    if (!out) throw DataError("cannot write " + dir + "/annot.json");
    out << j.dump(2) << "\n";
}

CountingSample load_sample(const std::string& dir) {
    CountingSample s;
    s.query = io::load_tensor(dir + "/query.mtnsr");
    if (s.query.rank() != 3 || s.query.dim(0) != 3)
        throw DataError(dir + ": query tensor is not a 3-channel image");
    s.density = io::load_tensor(dir + "/density.mtnsr");
    std::ifstream in(dir + "/annot.json");
    if (!in) throw DataError("missing " + dir + "/annot.json");
    json j;
    try {
        in >> j;
        std::size_t n_ex = j.at("n_exemplars").get<std::size_t>();
        s.points = points_from_json(j.at("points"));
        s.nontarget_points = points_from_json(j.at("nontarget_points"));
        for (const auto& b : j.at("boxes"))
            s.boxes.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
        for (std::size_t i = 0; i < n_ex; ++i)
            s.exemplars.push_back(io::load_tensor(dir + "/exemplar_" + std::to_string(i) + ".mtnsr"));
    } catch (const json::exception& e) {
        throw DataError(dir + "/annot.json: " + e.what());
    }
    double img_h = static_cast<double>(s.query.dim(1));
    double img_w = static_cast<double>(s.query.dim(2));
    for (auto [x, y] : s.points)
        if (x < 0 || y < 0 || x >= img_w || y >= img_h)
            throw DataError(dir + ": annotated point outside the image");
    if (s.boxes.size() != s.exemplars.size())
        throw DataError(dir + ": box/exemplar count mismatch");
    double mass = 0.0;
    for (double v : s.density.values()) mass += v;
    if (std::fabs(mass - static_cast<double>(s.points.size())) > 1e-4)
        throw DataError(dir + ": density mass disagrees with point count");
    return s;
}

void make_dataset(const SceneSpec& spec, const std::string& out_dir, Index n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("make_dataset: need at least 2 samples");
    if (spec.target_class >= 0) validate_target(spec, spec.target_class);
    fs::create_directories(out_dir);
    Index n_eval = std::max<Index>(1, n / 4);
    Index n_train = n - n_eval;
    json manifest;
    manifest["format_version"] = 1;
    manifest["spec"] = spec_to_json_obj(spec);
    manifest["seed"] = seed;
    json train_list = json::array(), eval_list = json::array();
    for (Index i = 0; i < n; ++i) {
        Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(i + 1)));
        Index cls = spec.target_class >= 0
                        ? spec.target_class
                        : i % static_cast<Index>(spec.classes.size());
        CountingSample s = generate_scene(spec, cls, rng);
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04lld", static_cast<long long>(i));
        save_sample(out_dir + "/" + name, s);
        (i < n_train ? train_list : eval_list).push_back(name);
    }
    manifest["train"] = train_list;
    manifest["eval"] = eval_list;
    std::ofstream out(out_dir + "/dataset.json");
    if (!out) throw DataError("cannot write " + out_dir + "/dataset.json");
    out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream in(dir + "/dataset.json");
    if (!in) throw DataError("missing dataset manifest: " + dir + "/dataset.json");
    json j;
    Dataset d;
    try {
        in >> j;
        d.spec = spec_from_json_obj(j.at("spec"));
        for (const auto& name : j.at("train"))
            d.train.push_back(load_sample(dir + "/" + name.get<std::string>()));
        for (const auto& name : j.at("eval"))
            d.eval.push_back(load_sample(dir + "/" + name.get<std::string>()));
    } catch (const json::exception& e) {
        throw DataError(dir + "/dataset.json: " + e.what());
    }
    if (d.train.empty()) throw DataError(dir + ": dataset has no training samples");
    return d;
}

}  // namespace mafea
