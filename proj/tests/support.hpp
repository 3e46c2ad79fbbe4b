#pragma once

// Test-only reference implementations. None of these call the library's
// attention, RoPE or conversion code, so agreement with them is meaningful.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gqla/convert_gqa.hpp"
#include "gqla/convert_mla.hpp"
#include "gqla/matrix.hpp"

namespace gqla::testing {

inline Matrix random_tokens(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return random_normal(rows, cols, rng);
}

// Rotates adjacent pairs of v by t * base^(-2k/dim).
inline std::vector<double> rotate_pairs(std::vector<double> v, double t, double base) {
    const std::size_t dim = v.size();
    for (std::size_t k = 0; 2 * k < dim; ++k) {
        const double angle = t * std::pow(base, -double(2 * k) / double(dim));
        const double c = std::cos(angle), s = std::sin(angle);
        const double x = v[2 * k], y = v[2 * k + 1];
        v[2 * k] = c * x - s * y;
        v[2 * k + 1] = s * x + c * y;
    }
    return v;
}

// Plain causal grouped-query attention with full-head RoPE on q and k and
// scale 1/sqrt(d_h). Rows of the result are the trailing s_q positions.
inline Matrix reference_gqa(const GqaWeights& w, const Matrix& tokens, std::size_t s_q) {
    const std::size_t L = tokens.rows(), D = tokens.cols(), d_h = w.d_h;
    const std::size_t hpg = w.h_q / w.g;
    const double base = w.rope.base;

    auto project = [&](const Matrix& m, std::size_t row0, std::size_t t) {
        std::vector<double> out(d_h, 0.0);
        for (std::size_t a = 0; a < d_h; ++a)
            for (std::size_t d = 0; d < D; ++d) out[a] += m(row0 + a, d) * tokens(t, d);
        return out;
    };

    Matrix out(s_q, D);
    for (std::size_t q = 0; q < s_q; ++q) {
        const std::size_t t = L - s_q + q;
        std::vector<double> heads;
        for (std::size_t i = 0; i < w.h_q; ++i) {
            const std::size_t j = i / hpg;
            const auto qi = rotate_pairs(project(w.w_q, i * d_h, t), double(t), base);
            std::vector<double> logits;
            for (std::size_t s = 0; s <= t; ++s) {
                const auto ks = rotate_pairs(project(w.w_k, j * d_h, s), double(s), base);
                double acc = 0.0;
                for (std::size_t a = 0; a < d_h; ++a) acc += qi[a] * ks[a];
                logits.push_back(acc / std::sqrt(double(d_h)));
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& l : logits) z += (l = std::exp(l - mx));
            std::vector<double> o(d_h, 0.0);
            for (std::size_t s = 0; s <= t; ++s) {
                const auto vs = project(w.w_v, j * d_h, s);
                for (std::size_t a = 0; a < d_h; ++a) o[a] += logits[s] / z * vs[a];
            }
            heads.insert(heads.end(), o.begin(), o.end());
        }
        for (std::size_t d = 0; d < D; ++d) {
            double acc = 0.0;
            for (std::size_t k = 0; k < heads.size(); ++k) acc += w.w_o(d, k) * heads[k];
            out(q, d) = acc;
        }
    }
    return out;
}

// E||(w - approx) c||^2 for inputs c with second moment sigma_in:
// trace((w - approx) sigma_in (w - approx)^T).
inline double input_weighted_error(const Matrix& w, const Matrix& sigma_in, const Matrix& approx) {
    const Matrix r = w - approx;
    return trace(matmul(matmul(r, sigma_in), r.transposed()));
}

// Head i's up-projections factor as A_i B_j(i) with d_h-wide B_j, so each
// group's stacked activations span at most d_h (resp. d_h_v) dimensions.
inline MlaWeights planted_mla(const GqlaConfig& c, std::size_t g, std::uint64_t seed) {
    MlaWeights w = init_random_mla(c, seed);
    std::mt19937_64 rng(seed + 1000);
    const std::size_t hpg = c.h_q / g;
    for (std::size_t j = 0; j < g; ++j) {
        const Matrix bk = random_normal(c.d_h, c.r_kv, rng, 0.2);
        const Matrix bv = random_normal(c.d_h_v, c.r_kv, rng, 0.2);
        for (std::size_t l = 0; l < hpg; ++l) {
            const std::size_t i = j * hpg + l;
            w.w_uk.set_block(i * c.d_h, 0, matmul(random_normal(c.d_h, c.d_h, rng, 0.3), bk));
            w.w_uv.set_block(i * c.d_h_v, 0, matmul(random_normal(c.d_h_v, c.d_h_v, rng, 0.3), bv));
        }
    }
    return w;
}

} // namespace gqla::testing
