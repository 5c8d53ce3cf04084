#include "mafea/encoder.hpp"

#include <cmath>

namespace mafea {

namespace O = ops;

namespace {

Tensor linear_init(Index fan_in, Index fan_out, Rng& rng) {
    return Tensor::randn({fan_in, fan_out}, rng, std::sqrt(1.0 / static_cast<double>(fan_in)), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor proj(const Tensor& x, const Tensor& w, const Tensor& b) {
    return O::add_rowvec(O::matmul(x, w), b);
}

// Heads concatenated, before the output projection.
Tensor attend_heads(const Tensor& q, const Tensor& k, const Tensor& v, Index heads) {
    Index c = q.dim(1);
    if (c % heads != 0) throw ConfigError("attention: width not divisible by head count");
    Index d = c / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<Tensor> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (Index i = 0; i < heads; ++i) {
        Tensor qh = O::slice_cols(q, i * d, (i + 1) * d);
        Tensor kh = O::slice_cols(k, i * d, (i + 1) * d);
        Tensor vh = O::slice_cols(v, i * d, (i + 1) * d);
        Tensor attn = O::softmax(O::affine(O::matmul(qh, O::transpose2d(kh)), scale, 0.0), 1);
        outs.push_back(O::matmul(attn, vh));
    }
    return O::concat_cols(outs);
}

Tensor row_sums(const Tensor& x) {  // [m,n] -> [m,1]
    return O::matmul(x, Tensor::full({x.dim(1), 1}, 1.0));
}

}  // namespace

void SideParams::init(Index dim, Rng& rng) {
    ln1_g = Tensor::full({dim}, 1.0, true);
    ln1_b = zeros_param({dim});
    wq = linear_init(dim, dim, rng);
    bq = zeros_param({dim});
    wk = linear_init(dim, dim, rng);
    bk = zeros_param({dim});
    wv = linear_init(dim, dim, rng);
    bv = zeros_param({dim});
    wo = linear_init(dim, dim, rng);
    bo = zeros_param({dim});
    ln2_g = Tensor::full({dim}, 1.0, true);
    ln2_b = zeros_param({dim});
    ffn1_w = linear_init(dim, 4 * dim, rng);
    ffn1_b = zeros_param({4 * dim});
    ffn2_w = linear_init(4 * dim, dim, rng);
    ffn2_b = zeros_param({dim});
}

void SideParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".ln1.g", ln1_g);
    fn(prefix + ".ln1.b", ln1_b);
    fn(prefix + ".wq", wq);
    fn(prefix + ".bq", bq);
    fn(prefix + ".wk", wk);
    fn(prefix + ".bk", bk);
    fn(prefix + ".wv", wv);
    fn(prefix + ".bv", bv);
    fn(prefix + ".wo", wo);
    fn(prefix + ".bo", bo);
    fn(prefix + ".ln2.g", ln2_g);
    fn(prefix + ".ln2.b", ln2_b);
    fn(prefix + ".ffn1.w", ffn1_w);
    fn(prefix + ".ffn1.b", ffn1_b);
    fn(prefix + ".ffn2.w", ffn2_w);
    fn(prefix + ".ffn2.b", ffn2_b);
}

void MrmLayerParams::init(Index dim, Rng& rng) {
    q.init(dim, rng);
    e.init(dim, rng);
}

void MrmLayerParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    q.visit(prefix + ".q", fn);
    e.visit(prefix + ".e", fn);
}

void EncoderParams::init(const ModelConfig& cfg, Rng& rng) {
    Index c = cfg.embed_dim;
    Index patch_dim = 3 * cfg.patch_size * cfg.patch_size;
    embed_w = linear_init(patch_dim, c, rng);
    embed_b = zeros_param({c});
    pos_q = Tensor::randn({cfg.query_tokens(), c}, rng, 0.02, true);
    pos_e = Tensor::randn({cfg.tokens_per_exemplar(), c}, rng, 0.02, true);
    bg_token = Tensor::randn({1, c}, rng, 0.02, true);
    if (cfg.zero_shot())
        zs_tokens = Tensor::randn({cfg.exemplar_tokens(), c}, rng, 0.02, true);
    layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& l : layers) l.init(c, rng);
    final_q_g = Tensor::full({c}, 1.0, true);
    final_q_b = zeros_param({c});
    final_e_g = Tensor::full({c}, 1.0, true);
    final_e_b = zeros_param({c});
}

void EncoderParams::visit(const ParamVisitor& fn, const ModelConfig& cfg) {
    fn("embed.w", embed_w);
    fn("embed.b", embed_b);
    fn("pos.q", pos_q);
    fn("pos.e", pos_e);
    fn("bg.token", bg_token);
    if (cfg.zero_shot()) fn("zs.tokens", zs_tokens);
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].visit("enc." + std::to_string(l), fn);
    fn("enc.final.q.g", final_q_g);
    fn("enc.final.q.b", final_q_b);
    fn("enc.final.e.g", final_e_g);
    fn("enc.final.e.b", final_e_b);
}

Tensor embed(const Tensor& patches, const Tensor& proj_w, const Tensor& proj_b, const Tensor& pos) {
    return O::add(proj(patches, proj_w, proj_b), pos);
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, Index heads,
                            const Tensor& wo, const Tensor& bo) {
    return proj(attend_heads(q, k, v, heads), wo, bo);
}

std::pair<Tensor, Tensor> attention_masses(const Tensor& q_q, const Tensor& k_e, const Tensor& k_b,
                                           Index heads) {
    if (k_e.dim(0) < 1) throw ConfigError("attention_masses: empty exemplar key set");
    if (k_b.dim(0) < 1) throw ConfigError("attention_masses: empty background key set");
    Index c = q_q.dim(1), ne = k_e.dim(0), nb = k_b.dim(0);
    if (c % heads != 0) throw ConfigError("attention_masses: width not divisible by head count");
    Index d = c / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor keys = O::concat_rows({k_e, k_b});
    std::vector<Tensor> bg_rows, ex_rows;
    for (Index i = 0; i < heads; ++i) {
        Tensor qh = O::slice_cols(q_q, i * d, (i + 1) * d);
        Tensor kh = O::slice_cols(keys, i * d, (i + 1) * d);
        Tensor attn = O::softmax(O::affine(O::matmul(qh, O::transpose2d(kh)), scale, 0.0), 1);
        Tensor bg = O::slice_cols(attn, ne, ne + nb);
        Tensor ex = O::slice_cols(attn, 0, ne);
        bg_rows.push_back(O::transpose2d(nb == 1 ? bg : row_sums(bg)));
        ex_rows.push_back(O::transpose2d(row_sums(ex)));
    }
    return {O::concat_rows(bg_rows), O::concat_rows(ex_rows)};
}

Tensor alignment_scores(const Tensor& q_q, const Tensor& k_e, const Tensor& k_b, Index heads) {
    Tensor bg = attention_masses(q_q, k_e, k_b, heads).first;  // [heads, N]
    Tensor mean = bg;
    if (heads > 1) {
        Tensor acc = O::slice_rows(bg, 0, 1);
        for (Index i = 1; i < heads; ++i) acc = O::add(acc, O::slice_rows(bg, i, i + 1));
        mean = O::affine(acc, 1.0 / static_cast<double>(heads), 0.0);
    }
    return O::reshape(mean, {q_q.dim(0)});
}

std::pair<TokenState, Tensor> mrm_layer(const TokenState& state, const MrmLayerParams& p,
                                        const ModelConfig& cfg) {
    bool bt = state.z_b.defined();
    Index ne = state.z_e.dim(0);
    Tensor eb = bt ? O::concat_rows({state.z_e, state.z_b}) : state.z_e;

    Tensor xq = O::layer_norm(state.z_q, p.q.ln1_g, p.q.ln1_b);
    Tensor xe = O::layer_norm(eb, p.e.ln1_g, p.e.ln1_b);
    Tensor qq = proj(xq, p.q.wq, p.q.bq), kq = proj(xq, p.q.wk, p.q.bk), vq = proj(xq, p.q.wv, p.q.bv);
    Tensor qe = proj(xe, p.e.wq, p.e.bq), ke = proj(xe, p.e.wk, p.e.bk), ve = proj(xe, p.e.wv, p.e.bv);

    Tensor s_q = multi_head_attention(qq, kq, vq, cfg.heads, p.q.wo, p.q.bo);
    Tensor s_e = multi_head_attention(qe, ke, ve, cfg.heads, p.e.wo, p.e.bo);

    Tensor zq_next, zeb_next, as;
    if (cfg.mrm) {
        Tensor c_to_q = multi_head_attention(qq, ke, ve, cfg.heads, p.q.wo, p.q.bo);
        Tensor c_to_e = multi_head_attention(qe, kq, vq, cfg.heads, p.e.wo, p.e.bo);
        zq_next = O::add(O::add(state.z_q, s_q), c_to_q);
        zeb_next = O::add(O::add(eb, s_e), c_to_e);
        if (bt)
            as = alignment_scores(qq, O::slice_rows(ke, 0, ne), O::slice_rows(ke, ne, ne + 1),
                                  cfg.heads);
    } else {
        zq_next = O::add(state.z_q, s_q);
        zeb_next = O::add(eb, s_e);
    }

    auto ffn = [](const Tensor& z, const SideParams& sp) {
        Tensor u = O::layer_norm(z, sp.ln2_g, sp.ln2_b);
        u = proj(O::leaky_relu(proj(u, sp.ffn1_w, sp.ffn1_b)), sp.ffn2_w, sp.ffn2_b);
        return O::add(z, u);
    };
    zq_next = ffn(zq_next, p.q);
    zeb_next = ffn(zeb_next, p.e);

    TokenState next;
    next.z_q = zq_next;
    if (bt) {
        next.z_e = O::slice_rows(zeb_next, 0, ne);
        next.z_b = O::slice_rows(zeb_next, ne, ne + 1);
    } else {
        next.z_e = zeb_next;
    }
    next.layer = state.layer + 1;
    return {next, as};
}

EncodeResult encode(const Tensor& query, const std::vector<Tensor>& exemplars,
                    const EncoderParams& params, const ModelConfig& cfg) {
    Shape want{3, cfg.image_size, cfg.image_size};
    if (query.shape() != want)
        throw DataError("query image shape " + shape_to_string(query.shape()) + ", expected " +
                        shape_to_string(want));

    Tensor z_q = embed(O::patchify(query, cfg.patch_size), params.embed_w, params.embed_b, params.pos_q);

    Tensor z_e;
    if (cfg.zero_shot()) {
        z_e = params.zs_tokens;
    } else {
        if (exemplars.empty()) throw ConfigError("no exemplars given and zero-shot mode is off");
        Shape ex_want{3, cfg.exemplar_size, cfg.exemplar_size};
        std::vector<Tensor> rows;
        for (const auto& ex : exemplars) {
            if (ex.shape() != ex_want)
                throw DataError("exemplar shape " + shape_to_string(ex.shape()) + ", expected " +
                                shape_to_string(ex_want));
            rows.push_back(embed(O::patchify(ex, cfg.patch_size), params.embed_w, params.embed_b,
                                 params.pos_e));
        }
        z_e = rows.size() == 1 ? rows[0] : O::concat_rows(rows);
    }

    TokenState state;
    state.z_q = z_q;
    state.z_e = z_e;
    if (cfg.bt) state.z_b = params.bg_token;

    EncodeResult out;
    for (Index l = 0; l < cfg.layers; ++l) {
        auto [next, as] = mrm_layer(state, params.layers[static_cast<std::size_t>(l)], cfg);
        state = next;
        if (as.defined()) out.as_layers.push_back(as);
    }

    if (cfg.layers > 0) {
        out.z_q = O::layer_norm(state.z_q, params.final_q_g, params.final_q_b);
        out.z_e = O::layer_norm(state.z_e, params.final_e_g, params.final_e_b);
    } else {
        out.z_q = state.z_q;
        out.z_e = state.z_e;
    }
    return out;
}

}  // namespace mafea
