#include "mafea/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mafea {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

Index parse_index(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long n = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<Index>(n);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected real, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

bool is_pow2(Index v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void TrainConfig::validate() const {
    const ModelConfig& m = model;
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (m.image_size < 8) fail("image_size too small");
    if (m.patch_size < 1) fail("patch_size must be positive");
    if (m.image_size % m.patch_size != 0) fail("image_size must be divisible by patch_size");
    if (m.exemplar_size % m.patch_size != 0) fail("exemplar_size must be divisible by patch_size");
    if (m.exemplar_size < m.patch_size) fail("exemplar_size must cover at least one patch");
    if (m.embed_dim < 1 || m.heads < 1) fail("embed_dim and heads must be positive");
    if (m.embed_dim % m.heads != 0) fail("embed_dim must be divisible by heads");
    if (m.layers < 0) fail("layers must be >= 0");
    if (m.shots < 0 || m.shots > 3) fail("shots must be in 0..3");
    if (m.proto_size < 1 || m.proto_size % 2 == 0) fail("proto_size must be odd and positive");
    if (m.adapt_iters < 1) fail("adapt_iters must be >= 1");
    if (!is_pow2(m.patch_size))
        fail("patch_size must be a power of two (density decoder doubles resolution per stage)");
    if (m.tbd && !m.bt) fail("tbd loss requires the background token (bt=true)");
    if (m.tbd && m.layers < 1) fail("tbd loss needs at least one relation layer");
    if (m.bt && !m.mrm) fail("background token requires mutual relation layers (mrm=true)");
    if (lambda1 < 0 || lambda2 < 0) fail("loss weights must be non-negative");
    if (tbd_layer < -1 || tbd_layer >= m.layers)
        fail("tbd_layer must be -1 (mean) or a layer index below layers");
    if (lr <= 0) fail("lr must be positive");
    if (lr_halve_every < 1) fail("lr_halve_every must be >= 1");
    if (weight_decay < 0 || clip_norm < 0) fail("weight_decay/clip_norm must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0,1)");
    if (adam_eps <= 0) fail("adam_eps must be positive");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (epochs < 0) fail("epochs must be >= 0");
    if (eval_every < 0) fail("eval_every must be >= 0");
    if (keep_best && eval_every < 1) fail("keep_best needs a scheduled eval (eval_every >= 1)");
}

std::string TrainConfig::to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "# model architecture\n"
        << "image_size=" << model.image_size << "\n"
        << "patch_size=" << model.patch_size << "\n"
        << "embed_dim=" << model.embed_dim << "\n"
        << "heads=" << model.heads << "\n"
        << "layers=" << model.layers << "\n"
        << "exemplar_size=" << model.exemplar_size << "\n"
        << "shots=" << model.shots << "\n"
        << "proto_size=" << model.proto_size << "\n"
        << "adapt_iters=" << model.adapt_iters << "\n"
        << "# ablation switches (tbd needs bt, bt needs mrm)\n"
        << "mrm=" << (model.mrm ? "true" : "false") << "\n"
        << "bt=" << (model.bt ? "true" : "false") << "\n"
        << "tbd=" << (model.tbd ? "true" : "false") << "\n"
        << "# objective\n"
        << "lambda1=" << lambda1 << "\n"
        << "lambda2=" << lambda2 << "\n"
        << "tbd_layer=" << tbd_layer << "\n"
        << "# optimization\n"
        << "lr=" << lr << "\n"
        << "lr_halve_every=" << lr_halve_every << "\n"
        << "weight_decay=" << weight_decay << "\n"
        << "beta1=" << beta1 << "\n"
        << "beta2=" << beta2 << "\n"
        << "adam_eps=" << adam_eps << "\n"
        << "clip_norm=" << clip_norm << "\n"
        << "# schedule\n"
        << "batch_size=" << batch_size << "\n"
        << "epochs=" << epochs << "\n"
        << "eval_every=" << eval_every << "\n"
        << "keep_best=" << (keep_best ? "true" : "false") << "\n"
        << "seed=" << seed << "\n";
    return out.str();
}

TrainConfig TrainConfig::parse_text(const std::string& text) {
    TrainConfig c;
    std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
        {"image_size", [&](const std::string& k, const std::string& v) { c.model.image_size = parse_index(k, v); }},
        {"patch_size", [&](const std::string& k, const std::string& v) { c.model.patch_size = parse_index(k, v); }},
        {"embed_dim", [&](const std::string& k, const std::string& v) { c.model.embed_dim = parse_index(k, v); }},
        {"heads", [&](const std::string& k, const std::string& v) { c.model.heads = parse_index(k, v); }},
        {"layers", [&](const std::string& k, const std::string& v) { c.model.layers = parse_index(k, v); }},
        {"exemplar_size", [&](const std::string& k, const std::string& v) { c.model.exemplar_size = parse_index(k, v); }},
        {"shots", [&](const std::string& k, const std::string& v) { c.model.shots = parse_index(k, v); }},
        {"proto_size", [&](const std::string& k, const std::string& v) { c.model.proto_size = parse_index(k, v); }},
        {"adapt_iters", [&](const std::string& k, const std::string& v) { c.model.adapt_iters = parse_index(k, v); }},
        {"mrm", [&](const std::string& k, const std::string& v) { c.model.mrm = parse_bool(k, v); }},
        {"bt", [&](const std::string& k, const std::string& v) { c.model.bt = parse_bool(k, v); }},
        {"tbd", [&](const std::string& k, const std::string& v) { c.model.tbd = parse_bool(k, v); }},
        {"lambda1", [&](const std::string& k, const std::string& v) { c.lambda1 = parse_real(k, v); }},
        {"lambda2", [&](const std::string& k, const std::string& v) { c.lambda2 = parse_real(k, v); }},
        {"tbd_layer", [&](const std::string& k, const std::string& v) { c.tbd_layer = parse_index(k, v); }},
        {"lr", [&](const std::string& k, const std::string& v) { c.lr = parse_real(k, v); }},
        {"lr_halve_every", [&](const std::string& k, const std::string& v) { c.lr_halve_every = parse_index(k, v); }},
        {"weight_decay", [&](const std::string& k, const std::string& v) { c.weight_decay = parse_real(k, v); }},
        {"beta1", [&](const std::string& k, const std::string& v) { c.beta1 = parse_real(k, v); }},
        {"beta2", [&](const std::string& k, const std::string& v) { c.beta2 = parse_real(k, v); }},
        {"adam_eps", [&](const std::string& k, const std::string& v) { c.adam_eps = parse_real(k, v); }},
        {"clip_norm", [&](const std::string& k, const std::string& v) { c.clip_norm = parse_real(k, v); }},
        {"batch_size", [&](const std::string& k, const std::string& v) { c.batch_size = parse_index(k, v); }},
        {"epochs", [&](const std::string& k, const std::string& v) { c.epochs = parse_index(k, v); }},
        {"eval_every", [&](const std::string& k, const std::string& v) { c.eval_every = parse_index(k, v); }},
        {"keep_best", [&](const std::string& k, const std::string& v) { c.keep_best = parse_bool(k, v); }},
        {"seed", [&](const std::string& k, const std::string& v) {
             c.seed = static_cast<std::uint64_t>(parse_index(k, v));
         }},
    };
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end())
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second(key, value);
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

TrainConfig TrainConfig::profile(const std::string& name) {
    TrainConfig c;  // defaults are the desk profile
    if (name == "desk") {
        return c;
    }
    if (name == "minimal") {
        c.model.image_size = 32;
        c.model.embed_dim = 16;
        c.model.layers = 1;
        c.model.exemplar_size = 8;  // one token per exemplar
        c.model.proto_size = 1;
        c.model.adapt_iters = 2;
        c.batch_size = 2;
        c.epochs = 50;
        return c;
    }
    if (name == "full") {
        c.model.image_size = 512;
        c.model.patch_size = 16;
        c.model.embed_dim = 768;
        c.model.heads = 12;
        c.model.layers = 12;
        c.model.exemplar_size = 48;
        c.lr = 1e-4;
        c.lr_halve_every = 40;
        c.batch_size = 8;
        c.epochs = 100;
        return c;
    }
    throw ConfigError("unknown config profile '" + name + "' (expected desk, minimal, or full)");
}

}  // namespace mafea
