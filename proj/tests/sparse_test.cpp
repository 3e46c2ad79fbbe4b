#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gqla/error.hpp"
#include "gqla/sparse.hpp"
#include "support.hpp"

using namespace gqla;
using gqla::testing::random_tokens;

namespace {

std::vector<std::size_t> sort_all_oracle(const Vector& scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(std::min(k, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

struct Fixture {
    GqlaConfig c = GqlaConfig::desk();
    GqlaWeights w = init_random(c, 31);
    Matrix x = random_tokens(24, c.d_model, 31);
    GqaPathResult dense = forward_gqa_path(w, c, x, 1);
    LatentCache latent = forward_absorb_path(w, c, x, 1).cache;
    std::size_t last = x.rows() - 1;
};

} // namespace

TEST_CASE("topk breaks ties toward the smaller position") {
    const Vector s{3.0, 1.0, 3.0, 2.0};
    CHECK(topk_select(s, 2) == std::vector<std::size_t>{0, 2});
    CHECK(topk_select(s, 1) == std::vector<std::size_t>{0});
    CHECK(topk_select(s, 3) == std::vector<std::size_t>{0, 2, 3});
}

TEST_CASE("topk saturates at the prefix length") {
    const Vector s{0.5, -1.0, 2.0};
    CHECK(topk_select(s, 3) == std::vector<std::size_t>{0, 1, 2});
    CHECK(topk_select(s, 99) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("topk matches a full sort on random scores") {
    std::mt19937_64 rng(40);
    std::uniform_int_distribution<int> coarse(0, 9); // forces ties
    for (int trial = 0; trial < 20; ++trial) {
        Vector s(40);
        for (double& v : s) v = double(coarse(rng));
        CHECK(topk_select(s, 5) == sort_all_oracle(s, 5));
        CHECK(topk_select(s, 5) == topk_select(s, 5));
    }
}

TEST_CASE("topk rejects empty input and k = 0") {
    CHECK_THROWS_AS(topk_select(Vector{}, 1), ParameterError);
    CHECK_THROWS_AS(topk_select(Vector{1.0}, 0), ParameterError);
}

TEST_CASE("indexer scores average rotary dot products over heads") {
    Fixture f;
    const TokenProjection q = project_token(f.w, f.c, f.x.row(f.last), f.last);
    const Vector s = indexer_scores(q, f.dense.cache.k_r, f.last + 1);
    REQUIRE(s.size() == f.last + 1);
    for (std::size_t p = 0; p <= f.last; p += 5) {
        double acc = 0.0;
        for (std::size_t i = 0; i < f.c.h_q; ++i)
            for (std::size_t a = 0; a < f.c.d_h_r; ++a) acc += q.q_r(i, a) * f.dense.cache.k_r(p, a);
        CHECK(s[p] == doctest::Approx(acc / double(f.c.h_q)).epsilon(1e-12));
    }
}

TEST_CASE("saturated selection reproduces the dense path") {
    Fixture f;
    std::vector<std::size_t> all(f.last + 1);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const Vector out = sparse_attention(f.w, f.c, f.dense.cache, f.x.row(f.last), f.last, all, SparseScale::dense);
    const double tol = 1e-10 * (1.0 + max_abs(f.dense.outputs));
    CHECK(max_abs_diff(out, f.dense.outputs.row(0)) <= tol);

    const Vector scores(f.last + 1, 0.0);
    CHECK(topk_select(scores, f.last + 1) == all);
}

TEST_CASE("sparse attention agrees across cache layouts") {
    Fixture f;
    const TokenProjection q = project_token(f.w, f.c, f.x.row(f.last), f.last);
    const auto sel = topk_select(indexer_scores(q, f.latent.k_r, f.last + 1), 6);
    for (SparseScale scale : {SparseScale::head_dim, SparseScale::dense}) {
        const Vector e = sparse_attention(f.w, f.c, f.dense.cache, f.x.row(f.last), f.last, sel, scale);
        const Vector l = sparse_attention(f.w, f.c, f.latent, f.x.row(f.last), f.last, sel, scale);
        CHECK(max_abs_diff(e, l) <= 1e-10 * (1.0 + max_abs(e)));
    }
}

TEST_CASE("a single selected position returns its values") {
    Fixture f;
    const std::vector<std::size_t> sel{7};
    const Vector out = sparse_attention(f.w, f.c, f.dense.cache, f.x.row(f.last), f.last, sel);
    Vector heads(f.c.h_q * f.c.d_h_v);
    for (std::size_t i = 0; i < f.c.h_q; ++i)
        for (std::size_t a = 0; a < f.c.d_h_v; ++a)
            heads[i * f.c.d_h_v + a] = f.dense.cache.v(7, f.c.group_of(i) * f.c.d_h_v + a);
    CHECK(max_abs_diff(out, matvec(f.w.w_o, heads)) <= 1e-12);
}

TEST_CASE("masking unselected logits matches excluding them") {
    Fixture f;
    const std::vector<std::size_t> sel{0, 3, 4, 11, 20, 23};
    for (SparseScale scale : {SparseScale::head_dim, SparseScale::dense}) {
        const Vector sparse = sparse_attention(f.w, f.c, f.dense.cache, f.x.row(f.last), f.last, sel, scale);
        const Vector masked = masked_dense_attention(f.w, f.c, f.dense.cache, f.x.row(f.last), f.last, sel, scale);
        CHECK(max_abs_diff(sparse, masked) <= 1e-8);
    }
}

TEST_CASE("the two scale conventions differ") {
    GqlaConfig c = GqlaConfig::desk();
    CHECK(sparse_scale(c, SparseScale::head_dim) == doctest::Approx(1.0 / 4.0));
    CHECK(sparse_scale(c, SparseScale::dense) == doctest::Approx(1.0 / std::sqrt(24.0)));
}

TEST_CASE("sparse attention validates the selection") {
    Fixture f;
    const std::vector<std::size_t> none;
    const std::vector<std::size_t> future{f.last + 1};
    CHECK_THROWS_AS(sparse_attention(f.w, f.c, f.dense.cache, f.x.row(f.last), f.last, none), ParameterError);
    CHECK_THROWS_AS(sparse_attention(f.w, f.c, f.latent, f.x.row(5), 5, std::vector<std::size_t>{6}), ParameterError);
    CHECK_THROWS_AS(sparse_attention(f.w, f.c, f.dense.cache, f.x.row(f.last), f.last + 1, future), ParameterError);
}

TEST_CASE("canonical grouping fills the MMA tile exactly") {
    const TileReport r = tile_feasibility(GqlaConfig::canonical());
    CHECK(r.heads_per_group == 16);
    CHECK(r.tile_m == 16);
    CHECK(r.gqa_path_feasible);
}

TEST_CASE("one query head per KV head degenerates to a GEMV") {
    GqlaConfig c = GqlaConfig::canonical();
    c.g = c.h_q;
    const TileReport r = tile_feasibility(c);
    CHECK(r.heads_per_group == 1);
    CHECK_FALSE(r.gqa_path_feasible);
    CHECK(r.rationale.find("GEMV") != std::string::npos);
}

TEST_CASE("h_q = 64 with g = 8 underfills the tile") {
    GqlaConfig c = GqlaConfig::canonical();
    c.h_q = 64;
    const TileReport r = tile_feasibility(c);
    CHECK(r.heads_per_group == 8);
    CHECK_FALSE(r.gqa_path_feasible);
}

TEST_CASE("tile feasibility follows the 16-head rule for every split") {
    GqlaConfig c = GqlaConfig::canonical();
    for (std::size_t g : {1u, 2u, 4u, 8u, 16u, 32u, 64u, 128u}) {
        c.g = g;
        const TileReport r = tile_feasibility(c);
        CHECK(r.heads_per_group == 128 / g);
        CHECK(r.gqa_path_feasible == (128 / g >= 16));
    }
    c.g = 3;
    CHECK_THROWS_AS(tile_feasibility(c), ParameterError);
}
