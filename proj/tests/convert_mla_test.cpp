#include <cmath>
#include <random>

#include "doctest.h"
#include "gqla/convert_mla.hpp"
#include "gqla/error.hpp"
#include "support.hpp"

using namespace gqla;
using gqla::testing::planted_mla;
using gqla::testing::random_tokens;

namespace {

GqlaConfig desk_mla() {
    GqlaConfig c = GqlaConfig::desk();
    c.g = c.h_q;
    return c;
}

Matrix source_forward(const MlaWeights& w, const GqlaConfig& c, const Matrix& x) {
    return forward_absorb_path(as_gqla(w), c, x, x.rows()).outputs;
}

} // namespace

TEST_CASE("MLA validation requires head-indexed up-projections") {
    const GqlaConfig c = desk_mla();
    MlaWeights w = init_random_mla(c, 1);
    CHECK_NOTHROW(w.validate(c));
    w.w_uk = Matrix(2 * c.d_h, c.r_kv); // group-indexed shape
    CHECK_THROWS_AS(w.validate(c), ShapeError);
    CHECK_THROWS_AS(require_mla_config(GqlaConfig::desk()), ParameterError);
}

TEST_CASE("one calibration token gives rank-one covariances") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 2);
    const MlaCalibration stats = calibrate(w, c, random_tokens(1, c.d_model, 2), 2);
    for (const auto* side : {&stats.k, &stats.v}) {
        for (const CovarianceAccumulator& acc : *side) {
            const Vector ev = sym_eig(acc.second_moment).eigenvalues;
            for (std::size_t i = 1; i < ev.size(); ++i) CHECK(std::abs(ev[i]) <= 1e-12 * ev[0]);
        }
    }
}

TEST_CASE("calibration covers contiguous head blocks") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 3);
    const Matrix calib = random_tokens(512, c.d_model, 3);
    const MlaCalibration stats = calibrate(w, c, calib, 2);
    REQUIRE(stats.k.size() == 2);
    REQUIRE(stats.v.size() == 2);
    std::size_t rows = 0;
    for (const CovarianceAccumulator& acc : stats.k) {
        CHECK(acc.dim == 4 * c.d_h);
        CHECK(acc.sample_count == 512);
        rows += acc.dim;
        CHECK(is_symmetric(acc.second_moment, 1e-12));
        CHECK(sym_eig(acc.second_moment).eigenvalues.back() >= -1e-9 * trace(acc.second_moment));
    }
    CHECK(rows == c.h_q * c.d_h);

    // Group 1's statistics are those of heads 4..7 alone.
    const Matrix latent = matmul(calib, w.w_dkv.transposed());
    const Matrix act = matmul(latent, w.w_uk.row_block(4 * c.d_h, 4 * c.d_h).transposed());
    CHECK(max_abs_diff(stats.k[1].second_moment, matmul_tn(act, act)) <= 1e-9 * max_abs(stats.k[1].second_moment));
}

TEST_CASE("calibration rejects empty input and non-dividing groups") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 4);
    CHECK_THROWS_AS(calibrate(w, c, Matrix(0, c.d_model), 2), ParameterError);
    CHECK_THROWS_AS(calibrate(w, c, random_tokens(8, c.d_model, 4), 3), ParameterError);
}

TEST_CASE("factor with one head per group is exact") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 5);
    const MlaCalibration stats = calibrate(w, c, random_tokens(256, c.d_model, 5), c.h_q);
    const GroupFactorization f = factor(w, c, stats, c.d_h, c.d_h_v);
    for (std::size_t j = 0; j < c.h_q; ++j) {
        CHECK(max_abs_diff(matmul(f.k[j].u, f.k[j].v), w.w_uk.row_block(j * c.d_h, c.d_h)) <= 1e-10);
        CHECK(max_abs_diff(matmul_tn(f.k[j].u, f.k[j].u), Matrix::identity(c.d_h)) <= 1e-10);
    }
}

TEST_CASE("factor recovers planted group structure") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = planted_mla(c, 2, 6);
    const MlaCalibration stats = calibrate(w, c, random_tokens(512, c.d_model, 6), 2);
    const GroupFactorization f = factor(w, c, stats, c.d_h, c.d_h_v);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(max_abs_diff(matmul(f.k[j].u, f.k[j].v), w.w_uk.row_block(j * 4 * c.d_h, 4 * c.d_h)) <= 1e-8);
        CHECK(max_abs_diff(matmul(f.v[j].u, f.v[j].v), w.w_uv.row_block(j * 4 * c.d_h_v, 4 * c.d_h_v)) <= 1e-8);
    }
}

TEST_CASE("factor bases beat random bases of equal rank") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 7);
    const MlaCalibration stats = calibrate(w, c, random_tokens(512, c.d_model, 7), 2);
    const GroupFactorization f = factor(w, c, stats, c.d_h, c.d_h_v);
    std::mt19937_64 rng(7);
    for (std::size_t j = 0; j < 2; ++j) {
        const Matrix s = f.sigma_k[j].normalized();
        const double best = projection_residual(s, f.k[j].u);
        for (int t = 0; t < 100; ++t) CHECK(best <= projection_residual(s, random_orthonormal(s.rows(), c.d_h, rng)) + 1e-9);
    }
}

TEST_CASE("factor and absorb reject invalid ranks") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 8);
    const MlaCalibration stats = calibrate(w, c, random_tokens(64, c.d_model, 8), 2);
    CHECK_THROWS_AS(factor(w, c, stats, 4 * c.d_h + 1, c.d_h_v), ParameterError);
    CHECK_THROWS_AS(factor(w, c, stats, c.d_h, 0), ParameterError);
    const GroupFactorization narrow = factor(w, c, stats, c.d_h / 2, c.d_h_v);
    CHECK_THROWS_AS(absorb_factors(w, c, narrow), ParameterError);
}

TEST_CASE("absorption keeps query and output shapes") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 9);
    const MlaCalibration stats = calibrate(w, c, random_tokens(256, c.d_model, 9), 2);
    const GqlaModel m = absorb_factors(w, c, factor(w, c, stats, c.d_h, c.d_h_v));
    CHECK(m.config.g == 2);
    CHECK(m.weights.w_uq.rows() == w.w_uq.rows());
    CHECK(m.weights.w_uq.cols() == w.w_uq.cols());
    CHECK(m.weights.w_o.rows() == w.w_o.rows());
    CHECK(m.weights.w_o.cols() == w.w_o.cols());
    CHECK(m.weights.w_uk.rows() == 2 * c.d_h);
    CHECK(m.weights.w_uv.rows() == 2 * c.d_h_v);
    CHECK(m.weights.w_dkv == w.w_dkv);
    CHECK(m.weights.w_kr == w.w_kr);
}

TEST_CASE("absorbed factors match the unfused factorisation") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 10);
    const MlaCalibration stats = calibrate(w, c, random_tokens(512, c.d_model, 10), 2);
    const GroupFactorization f = factor(w, c, stats, c.d_h, c.d_h_v);
    const GqlaModel absorbed = absorb_factors(w, c, f);
    const MlaWeights unfused = unfused_weights(w, c, f);
    const Matrix x = random_tokens(16, c.d_model, 11);
    const Matrix a = forward_gqa_path(absorbed.weights, absorbed.config, x, 16).outputs;
    CHECK(max_abs_diff(a, source_forward(unfused, c, x)) <= 1e-10);
}

TEST_CASE("unfused factors leave the latent cache untouched") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 12);
    const MlaCalibration stats = calibrate(w, c, random_tokens(256, c.d_model, 12), 2);
    const MlaWeights unfused = unfused_weights(w, c, factor(w, c, stats, c.d_h, c.d_h_v));
    const Matrix x = random_tokens(16, c.d_model, 12);
    const LatentCache before = forward_absorb_path(as_gqla(w), c, x, 1).cache;
    const LatentCache after = forward_absorb_path(as_gqla(unfused), c, x, 1).cache;
    CHECK(before.c_kv == after.c_kv);
    CHECK(before.k_r == after.k_r);
}

TEST_CASE("conversion with g = h_q is an exact reparameterisation") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 13);
    const MlaConversion conv = convert_mla(w, c, random_tokens(512, c.d_model, 13), c.h_q);
    CHECK(conv.report.output_deviation <= 1e-10);
    const Matrix x = random_tokens(12, c.d_model, 14);
    const Matrix out = forward_gqa_path(conv.model.weights, conv.model.config, x, 12).outputs;
    CHECK(max_abs_diff(out, source_forward(w, c, x)) <= 1e-10 * (1.0 + max_abs(out)));
}

TEST_CASE("planted group structure converts losslessly") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = planted_mla(c, 2, 15);
    const MlaConversion conv = convert_mla(w, c, random_tokens(512, c.d_model, 15), 2);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Matrix x = random_tokens(16, c.d_model, 300 + s);
        const Matrix ref = source_forward(w, c, x);
        const Matrix out = forward_gqa_path(conv.model.weights, conv.model.config, x, 16).outputs;
        CHECK(max_abs_diff(out, ref) <= 1e-8 * (1.0 + max_abs(ref)));
    }
    for (double e : conv.report.k_energy_retained) CHECK(e == doctest::Approx(1.0).epsilon(1e-10));
    for (double e : conv.report.v_energy_retained) CHECK(e == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("converted MLA weights pass the dual-path check") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = init_random_mla(c, 16);
    const MlaConversion conv = convert_mla(w, c, random_tokens(512, c.d_model, 16), 2);
    CHECK(conv.report.absorb_gap <= 1e-10);
    CHECK(conv.report.dual_path_deviation <= 1e-10);
    const GqlaModel& m = conv.model;
    const Matrix x = random_tokens(17, c.d_model, 17);
    const Matrix gqa = forward_gqa_path(m.weights, m.config, x, 2).outputs;
    const double tol = 1e-10 * (1.0 + max_abs(gqa));
    CHECK(max_abs_diff(gqa, forward_absorb_path(m.weights, m.config, x, 2).outputs) <= tol);
    CHECK(max_abs_diff(gqa, oracle_mha(m.weights, m.config, x, 2)) <= tol);
}

TEST_CASE("more calibration never hurts a planted source") {
    const GqlaConfig c = desk_mla();
    const MlaWeights w = planted_mla(c, 2, 18);
    const Matrix calib = random_tokens(512, c.d_model, 18);
    double previous = INFINITY;
    for (std::size_t n : {64u, 128u, 256u, 512u}) {
        const double dev = convert_mla(w, c, calib.row_block(0, n), 2).report.output_deviation;
        CHECK(dev <= 1e-8);
        CHECK(dev <= std::max(previous, 1e-12));
        previous = dev;
    }
}
