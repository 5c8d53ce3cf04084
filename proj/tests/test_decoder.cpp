#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mafea/decoder.hpp"

using namespace mafea;
namespace O = mafea::ops;

namespace {

Tensor rand_t(Shape s, Rng& rng) { return Tensor::randn(std::move(s), rng, 1.0); }

ModelConfig small_cfg() {
    ModelConfig m;
    m.image_size = 8;
    m.patch_size = 2;  // one x2 upsampling stage
    m.embed_dim = 4;
    m.heads = 2;
    m.layers = 1;
    m.exemplar_size = 2;
    m.shots = 1;
    m.proto_size = 1;
    m.adapt_iters = 2;
    return m;
}

}  // namespace

TEST_CASE("decoding climbs from the token grid to pixel resolution") {
    ModelConfig cfg;  // stock: 8x8 grid of 32-dim tokens -> 64x64 map
    Rng rng(1);
    DecoderParams p;
    p.init(cfg, rng);
    REQUIRE(p.stages.size() == 3);  // 8 -> 16 -> 32 -> 64

    Tensor map = decode(rand_t({32, 8, 8}, rng), p, cfg);
    CHECK(map.shape() == Shape{1, 64, 64});
}

TEST_CASE("density maps are never negative") {
    ModelConfig cfg = small_cfg();
    Rng rng(2);
    DecoderParams p;
    p.init(cfg, rng);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor map = decode(rand_t({4, 4, 4}, rng), p, cfg);
        for (double v : map.values()) CHECK(v >= 0.0);
    }
}

TEST_CASE("an all-zero decoder emits a flat softplus(0) carpet") {
    ModelConfig cfg = small_cfg();
    Rng rng(3);
    DecoderParams p;
    p.init(cfg, rng);
    for (auto& st : p.stages) {
        st.w = Tensor::zeros(st.w.shape(), true);
        st.b = Tensor::zeros(st.b.shape(), true);
    }
    p.head_w = Tensor::zeros(p.head_w.shape(), true);
    p.head_b = Tensor::zeros(p.head_b.shape(), true);

    Tensor map = decode(rand_t({4, 4, 4}, rng), p, cfg);
    double ln2 = std::log(2.0);
    for (double v : map.values()) CHECK(v == doctest::Approx(ln2).epsilon(1e-15));
    CHECK(count(map).item() == doctest::Approx(64.0 * ln2).epsilon(1e-12));
}

TEST_CASE("a freshly initialized decoder predicts a near-empty scene") {
    // the head bias starts negative so training begins from "almost nothing
    // here" rather than from a carpet worth thousands of objects
    ModelConfig cfg = small_cfg();
    Rng rng(31);
    DecoderParams p;
    p.init(cfg, rng);
    CHECK(p.head_b.values()[0] < 0.0);
    double total = 0;
    for (int trial = 0; trial < 3; ++trial) total += count(decode(rand_t({4, 4, 4}, rng), p, cfg)).item();
    CHECK(total / 3 < 8.0);  // well under one object per 8 pixels
}

TEST_CASE("count is the integral of the map") {
    Rng rng(4);
    Tensor map = O::density_rectifier(rand_t({1, 6, 6}, rng));
    double manual = 0;
    for (double v : map.values()) manual += v;
    CHECK(count(map).item() == manual);
}

TEST_CASE("the last volume feeds the main decoder, earlier ones the auxiliaries") {
    ModelConfig cfg = small_cfg();
    cfg.adapt_iters = 3;
    Rng rng(5);
    DecoderParams main_p;
    main_p.init(cfg, rng);
    std::vector<DecoderParams> aux_p(2);
    aux_p[0].init(cfg, rng);
    aux_p[1].init(cfg, rng);

    std::vector<Tensor> vols{rand_t({4, 4, 4}, rng), rand_t({4, 4, 4}, rng),
                             rand_t({4, 4, 4}, rng)};
    auto [main_map, aux_maps] = decode_all(vols, main_p, aux_p, cfg);

    CHECK(main_map.values() == decode(vols[2], main_p, cfg).values());
    REQUIRE(aux_maps.size() == 2);
    CHECK(aux_maps[0].values() == decode(vols[0], aux_p[0], cfg).values());
    CHECK(aux_maps[1].values() == decode(vols[1], aux_p[1], cfg).values());
}

TEST_CASE("a single round needs no auxiliary decoders") {
    ModelConfig cfg = small_cfg();
    cfg.adapt_iters = 1;
    Rng rng(6);
    DecoderParams main_p;
    main_p.init(cfg, rng);
    auto [main_map, aux_maps] = decode_all({rand_t({4, 4, 4}, rng)}, main_p, {}, cfg);
    CHECK(main_map.shape() == Shape{1, 8, 8});
    CHECK(aux_maps.empty());
}

TEST_CASE("volume bookkeeping is validated") {
    ModelConfig cfg = small_cfg();
    cfg.adapt_iters = 2;
    Rng rng(7);
    DecoderParams main_p;
    main_p.init(cfg, rng);
    std::vector<DecoderParams> aux_p(1);
    aux_p[0].init(cfg, rng);

    CHECK_THROWS_AS(decode(rand_t({3, 4, 4}, rng), main_p, cfg), ConfigError);  // wrong channels
    CHECK_THROWS_AS(decode(rand_t({4, 3, 4}, rng), main_p, cfg), ConfigError);  // wrong grid
    CHECK_THROWS_AS(decode_all({}, main_p, aux_p, cfg), ConfigError);
    CHECK_THROWS_AS(
        decode_all({rand_t({4, 4, 4}, rng), rand_t({4, 4, 4}, rng), rand_t({4, 4, 4}, rng)},
                   main_p, aux_p, cfg),
        ConfigError);  // 3 volumes but only 1 auxiliary decoder
}

TEST_CASE("decoder gradients agree with finite differences") {
    ModelConfig cfg = small_cfg();
    Rng rng(8);
    DecoderParams p;
    p.init(cfg, rng);
    auto f = [&](const Tensor& v) { return O::sum_all(decode(v, p, cfg)); };
    CHECK(grad_check(f, rand_t({4, 4, 4}, rng), 1e-5) < 1e-5);

    Tensor vol = rand_t({4, 4, 4}, rng);
    auto through_head = [&](const Tensor& hw) {
        DecoderParams q = p;
        q.head_w = hw;
        return O::sum_all(decode(vol, q, cfg));
    };
    CHECK(grad_check(through_head, p.head_w.detach(), 1e-5) < 1e-5);
}
