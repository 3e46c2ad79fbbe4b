#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "gqla/convert_gqa.hpp"
#include "gqla/error.hpp"
#include "gqla/numerics.hpp"

namespace gqla {

namespace {

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(std::string(name) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

void softmax_inplace(std::span<double> v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        z += x;
    }
    for (double& x : v) x /= z;
}

// Rotated query latents per head (L x n_k each) and rotated key latents (L x n_k).
struct MergedActivations {
    std::vector<Matrix> q_hat;
    Matrix k_hat;
    Matrix c_v;
};

MergedActivations merged_activations(const MergedWeights& m, const Matrix& tokens) {
    m.validate();
    if (tokens.cols() != m.d_model()) throw ShapeError("merged: token width != D");
    const std::size_t L = tokens.rows();
    const std::size_t hpg = m.h_q / m.g;

    const Matrix latent = matmul(tokens, m.w_dkv.transposed()); // L x (n_k + n_v)
    MergedActivations a;
    a.k_hat = latent.col_block(0, m.n_k);
    a.c_v = latent.col_block(m.n_k, m.n_v);
    const Matrix q = matmul(tokens, m.w_q.transposed()); // L x h_q*d_h

    for (std::size_t t = 0; t < L; ++t) {
        if (m.rope.dim > 0) apply_rope_inplace(m.rope, a.k_hat.row(t).first(m.rope.dim), double(t));
    }
    a.q_hat.reserve(m.h_q);
    for (std::size_t i = 0; i < m.h_q; ++i) {
        const Matrix uk = m.w_uk.row_block((i / hpg) * m.d_h, m.d_h);
        Matrix qi = matmul(q.col_block(i * m.d_h, m.d_h), uk); // L x n_k
        for (std::size_t t = 0; t < L; ++t) {
            if (m.rope.dim > 0) apply_rope_inplace(m.rope, qi.row(t).first(m.rope.dim), double(t));
        }
        a.q_hat.push_back(std::move(qi));
    }
    return a;
}

} // namespace

void GqaWeights::validate() const {
    if (h_q == 0 || g == 0 || d_h == 0) throw ParameterError("GqaWeights: dimensions must be >= 1");
    if (h_q % g != 0) throw ParameterError("GqaWeights: h_q is not divisible by g");
    if (d_h % 2 != 0) throw ParameterError("GqaWeights: d_h must be even for RoPE");
    if (rope.dim != d_h) throw ParameterError("GqaWeights: rope dim must equal d_h");
    rope.validate();
    const std::size_t D = w_q.cols();
    if (D == 0) throw ShapeError("GqaWeights: empty w_q");
    expect_shape(w_q, h_q * d_h, D, "w_q");
    expect_shape(w_k, g * d_h, D, "w_k");
    expect_shape(w_v, g * d_h, D, "w_v");
    expect_shape(w_o, D, h_q * d_h, "w_o");
}

GqaWeights init_random_gqa(std::size_t h_q, std::size_t g, std::size_t d_h, std::size_t d_model,
                           std::uint64_t seed, double rope_base) {
    GqaWeights w;
    w.h_q = h_q;
    w.g = g;
    w.d_h = d_h;
    w.rope = RopeSpec::standard(d_h, rope_base);
    if (h_q == 0 || g == 0 || d_h == 0 || d_model == 0) throw ParameterError("init_random_gqa: zero dimension");
    std::mt19937_64 rng(seed);
    const double bq = 1.0 / std::sqrt(double(d_model));
    const double bo = 1.0 / std::sqrt(double(h_q * d_h));
    w.w_q = random_uniform(h_q * d_h, d_model, -bq, bq, rng);
    w.w_k = random_uniform(g * d_h, d_model, -bq, bq, rng);
    w.w_v = random_uniform(g * d_h, d_model, -bq, bq, rng);
    w.w_o = random_uniform(d_model, h_q * d_h, -bo, bo, rng);
    w.validate();
    return w;
}

Matrix gqa_forward(const GqaWeights& w, const Matrix& tokens, std::size_t s_q) {
    w.validate();
    if (tokens.cols() != w.d_model()) throw ShapeError("gqa_forward: token width != D");
    if (s_q == 0 || s_q > tokens.rows()) throw ParameterError("gqa_forward: invalid s_q");
    const std::size_t L = tokens.rows();
    const std::size_t hpg = w.h_q / w.g;
    Matrix q = matmul(tokens, w.w_q.transposed());
    Matrix k = matmul(tokens, w.w_k.transposed());
    const Matrix v = matmul(tokens, w.w_v.transposed());
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t i = 0; i < w.h_q; ++i) apply_rope_inplace(w.rope, q.row(t).subspan(i * w.d_h, w.d_h), double(t));
        for (std::size_t j = 0; j < w.g; ++j) apply_rope_inplace(w.rope, k.row(t).subspan(j * w.d_h, w.d_h), double(t));
    }
    const double scale = 1.0 / std::sqrt(double(w.d_h));
    Matrix heads(s_q, w.h_q * w.d_h);
    for (std::size_t n = 0; n < s_q; ++n) {
        const std::size_t t = L - s_q + n;
        for (std::size_t i = 0; i < w.h_q; ++i) {
            const std::size_t j = i / hpg;
            const auto qi = q.row(t).subspan(i * w.d_h, w.d_h);
            Vector p(t + 1);
            for (std::size_t s = 0; s <= t; ++s) p[s] = scale * dot(qi, k.row(s).subspan(j * w.d_h, w.d_h));
            softmax_inplace(p);
            auto out = heads.row(n).subspan(i * w.d_h, w.d_h);
            for (std::size_t s = 0; s <= t; ++s) {
                const auto vs = v.row(s).subspan(j * w.d_h, w.d_h);
                for (std::size_t a = 0; a < w.d_h; ++a) out[a] += p[s] * vs[a];
            }
        }
    }
    return matmul(heads, w.w_o.transposed());
}

void MergedWeights::validate() const {
    if (h_q == 0 || g == 0 || d_h == 0 || h_q % g != 0) throw ParameterError("MergedWeights: invalid head counts");
    const std::size_t D = w_q.cols();
    expect_shape(w_q, h_q * d_h, D, "merged w_q");
    expect_shape(w_dkv, n_k + n_v, D, "merged w_dkv");
    expect_shape(w_uk, g * d_h, n_k, "merged w_uk");
    expect_shape(w_uv, g * d_h, n_v, "merged w_uv");
    expect_shape(w_o, D, h_q * d_h, "merged w_o");
    if (rope.dim > n_k) throw ParameterError("MergedWeights: rope dim exceeds key latent width");
    if (rope.dim > 0) rope.validate();
}

MergedWeights merge_heads(const GqaWeights& src) {
    src.validate();
    MergedWeights m;
    m.h_q = src.h_q;
    m.g = src.g;
    m.d_h = src.d_h;
    m.n_k = src.g * src.d_h;
    m.n_v = src.g * src.d_h;
    m.w_q = src.w_q;
    m.w_dkv = vstack(src.w_k, src.w_v);
    m.w_uk = Matrix::identity(m.n_k);
    m.w_uv = Matrix::identity(m.n_v);
    m.w_o = src.w_o;
    m.rope = fold(src.rope, src.g);
    return m;
}

Matrix merged_forward(const MergedWeights& m, const Matrix& tokens, std::size_t s_q) {
    if (s_q == 0 || s_q > tokens.rows()) throw ParameterError("merged_forward: invalid s_q");
    const MergedActivations a = merged_activations(m, tokens);
    const std::size_t L = tokens.rows();
    const std::size_t hpg = m.h_q / m.g;
    const double scale = 1.0 / std::sqrt(double(m.d_h));

    Matrix heads(s_q, m.h_q * m.d_h);
    for (std::size_t n = 0; n < s_q; ++n) {
        const std::size_t t = L - s_q + n;
        for (std::size_t i = 0; i < m.h_q; ++i) {
            const std::size_t j = i / hpg;
            Vector p(t + 1);
            for (std::size_t s = 0; s <= t; ++s) p[s] = scale * dot(a.q_hat[i].row(t), a.k_hat.row(s));
            softmax_inplace(p);
            Vector cv(m.n_v, 0.0);
            for (std::size_t s = 0; s <= t; ++s) {
                const auto row = a.c_v.row(s);
                for (std::size_t r = 0; r < m.n_v; ++r) cv[r] += p[s] * row[r];
            }
            const Vector o = matvec(m.w_uv.row_block(j * m.d_h, m.d_h), cv);
            std::copy(o.begin(), o.end(), heads.row(n).subspan(i * m.d_h, m.d_h).begin());
        }
    }
    return matmul(heads, m.w_o.transposed());
}

std::vector<Matrix> merged_scores(const MergedWeights& m, const Matrix& tokens) {
    const MergedActivations a = merged_activations(m, tokens);
    const double scale = 1.0 / std::sqrt(double(m.d_h));
    std::vector<Matrix> out;
    out.reserve(m.h_q);
    for (std::size_t i = 0; i < m.h_q; ++i) out.push_back(matmul(a.q_hat[i], a.k_hat.transposed()) * scale);
    return out;
}

Matrix key_activations(const MergedWeights& m, const Matrix& tokens) {
    m.validate();
    if (tokens.cols() != m.d_model()) throw ShapeError("key_activations: token width != D");
    return matmul(tokens, m.w_dkv.row_block(0, m.n_k).transposed());
}

RoRopeRotations identity_rotations(std::size_t g, std::size_t d_h) {
    RoRopeRotations r;
    r.per_group.assign(g, Matrix::identity(d_h));
    r.angles.assign(g, Vector(d_h / 2, 0.0));
    return r;
}

RoRopeRotations rorope_rotations(const MergedWeights& merged, const Matrix& calib) {
    if (calib.rows() == 0) throw ParameterError("rorope: empty calibration batch");
    if (merged.n_k != merged.g * merged.d_h || merged.rope.dim != merged.n_k)
        throw ParameterError("rorope: expects a freshly merged block (fully rotary key latent)");
    const Matrix keys = key_activations(merged, calib);
    CovarianceAccumulator acc(merged.n_k);
    acc.add(keys);
    const Matrix& s = acc.second_moment;

    const std::size_t pairs = merged.d_h / 2;
    RoRopeRotations r = identity_rotations(merged.g, merged.d_h);
    for (std::size_t j = 0; j < merged.g; ++j) {
        for (std::size_t m = 0; m < pairs; ++m) {
            const std::size_t x = j * merged.d_h + 2 * m, y = x + 1;
            double phi = 0.5 * std::atan2(2.0 * s(x, y), s(x, x) - s(y, y));
            if (j > 0) {
                // Sign of <leading_0, leading_j> under the second moment.
                const std::size_t x0 = 2 * m, y0 = x0 + 1;
                const double a0 = r.angles[0][m];
                const double c0 = std::cos(a0), s0 = std::sin(a0), c = std::cos(phi), sn = std::sin(phi);
                const double cross = c0 * c * s(x0, x) + c0 * sn * s(x0, y) + s0 * c * s(y0, x) + s0 * sn * s(y0, y);
                if (cross < 0.0) phi += std::numbers::pi;
            }
            r.angles[j][m] = phi;
            Matrix& R = r.per_group[j];
            const double c = std::cos(phi), sn = std::sin(phi);
            R(2 * m, 2 * m) = c;
            R(2 * m, 2 * m + 1) = sn;
            R(2 * m + 1, 2 * m) = -sn;
            R(2 * m + 1, 2 * m + 1) = c;
        }
    }
    return r;
}

MergedWeights apply_rorope(const MergedWeights& merged, const RoRopeRotations& r) {
    merged.validate();
    if (merged.n_k != merged.g * merged.d_h || merged.rope.dim != merged.n_k)
        throw ParameterError("apply_rorope: expects a freshly merged block (fully rotary key latent)");
    if (r.per_group.size() != merged.g) throw ShapeError("apply_rorope: rotation count != g");
    MergedWeights out = merged;
    const std::size_t hpg = merged.h_q / merged.g;
    for (std::size_t j = 0; j < merged.g; ++j) {
        const Matrix& R = r.per_group[j];
        expect_shape(R, merged.d_h, merged.d_h, "rotation");
        out.w_dkv.set_block(j * merged.d_h, 0, matmul(R, merged.w_dkv.row_block(j * merged.d_h, merged.d_h)));
        for (std::size_t i = j * hpg; i < (j + 1) * hpg; ++i)
            out.w_q.set_block(i * merged.d_h, 0, matmul(R, merged.w_q.row_block(i * merged.d_h, merged.d_h)));
    }
    return out;
}

RoRopeAlignment rorope_align(const MergedWeights& merged, const Matrix& calib) {
    RoRopeAlignment a;
    a.rotations = rorope_rotations(merged, calib);
    a.merged = apply_rorope(merged, a.rotations);
    return a;
}

} // namespace gqla
