#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gqla/error.hpp"
#include "gqla/model.hpp"

namespace gqla {

namespace {

void check_sequence(const GqlaConfig& c, const Matrix& tokens, std::size_t s_q) {
    if (tokens.rows() == 0) throw ParameterError("forward: empty token sequence");
    if (tokens.cols() != c.d_model) {
        throw ShapeError("forward: tokens have width " + std::to_string(tokens.cols()) + ", expected D = " +
                         std::to_string(c.d_model));
    }
    if (s_q == 0 || s_q > tokens.rows())
        throw ParameterError("forward: s_q must be in [1, " + std::to_string(tokens.rows()) + "]");
}

void check_positions(std::span<const std::size_t> positions, std::size_t cached) {
    if (positions.empty()) throw ParameterError("attend: empty position set");
    for (std::size_t s : positions)
        if (s >= cached) throw ParameterError("attend: position " + std::to_string(s) + " is not cached");
}

// In-place numerically stable softmax.
void softmax(std::span<double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        total += l;
    }
    for (double& l : logits) l /= total;
}

std::vector<std::size_t> prefix(std::size_t t) {
    std::vector<std::size_t> p(t + 1);
    std::iota(p.begin(), p.end(), 0);
    return p;
}

// W_uk[j]^T q for group j.
Vector group_transpose_apply(const Matrix& w_up, std::size_t group, std::size_t head_dim, std::span<const double> q) {
    Vector out(w_up.cols(), 0.0);
    for (std::size_t a = 0; a < head_dim; ++a) {
        auto wrow = w_up.row(group * head_dim + a);
        for (std::size_t r = 0; r < out.size(); ++r) out[r] += wrow[r] * q[a];
    }
    return out;
}

// Latent query and rotary query for every head, shared by the unfused and fused absorb paths.
struct LatentQuery {
    Matrix q_lat; // h_q x r_kv
    Matrix q_r;   // h_q x d_h_r
};

void attend_latent_heads(const LatentQuery& q, const LatentCache& cache, std::span<const std::size_t> positions,
                           double scale, const auto& emit_head) {
    std::vector<double> logits(positions.size());
    Vector o_hat(cache.c_kv.cols());
    for (std::size_t i = 0; i < q.q_lat.rows(); ++i) {
        for (std::size_t n = 0; n < positions.size(); ++n) {
            const std::size_t s = positions[n];
            logits[n] = (dot(q.q_lat.row(i), cache.c_kv.row(s)) + dot(q.q_r.row(i), cache.k_r.row(s))) * scale;
        }
        softmax(logits);
        std::fill(o_hat.begin(), o_hat.end(), 0.0);
        for (std::size_t n = 0; n < positions.size(); ++n) {
            auto c = cache.c_kv.row(positions[n]);
            for (std::size_t r = 0; r < o_hat.size(); ++r) o_hat[r] += logits[n] * c[r];
        }
        emit_head(i, o_hat);
    }
}

void append_latent(LatentCache& cache, const TokenProjection& p) {
    cache.c_kv.append_row(p.c_kv);
    cache.k_r.append_row(p.k_r);
}

void append_expanded(ExpandedCache& cache, const GqlaWeights& w, const TokenProjection& p) {
    cache.k_c.append_row(matvec(w.w_uk, p.c_kv));
    cache.v.append_row(matvec(w.w_uv, p.c_kv));
    cache.k_r.append_row(p.k_r);
}

} // namespace

TokenProjection project_token(const GqlaWeights& w, const GqlaConfig& c, std::span<const double> x,
                              std::size_t position) {
    if (x.size() != c.d_model) {
        throw ShapeError("project_token: input length " + std::to_string(x.size()) + " != D = " +
                         std::to_string(c.d_model));
    }
    const RopeSpec rope = c.rope();
    const double t = static_cast<double>(position);

    const Vector c_q = matvec(w.w_dq, x);
    TokenProjection p;
    p.c_kv = matvec(w.w_dkv, x);
    p.q_c = Matrix(c.h_q, c.d_h, matvec(w.w_uq, c_q));
    p.q_r = Matrix(c.h_q, c.d_h_r, matvec(w.w_qr, c_q));
    for (std::size_t i = 0; i < c.h_q; ++i) apply_rope_inplace(rope, p.q_r.row(i), t);
    p.k_r = matvec(w.w_kr, x);
    apply_rope_inplace(rope, p.k_r, t);
    return p;
}

Vector attend_expanded(const GqlaWeights& w, const GqlaConfig& c, const ExpandedCache& cache,
                       const TokenProjection& q, std::span<const std::size_t> positions, double scale) {
    check_positions(positions, cache.tokens());
    std::vector<double> logits(positions.size());
    Vector heads(c.h_q * c.d_h_v, 0.0);
    for (std::size_t i = 0; i < c.h_q; ++i) {
        const std::size_t j = c.group_of(i);
        auto q_c = q.q_c.row(i);
        auto q_r = q.q_r.row(i);
        for (std::size_t n = 0; n < positions.size(); ++n) {
            const std::size_t s = positions[n];
            auto k_c = cache.k_c.row(s).subspan(j * c.d_h, c.d_h);
            logits[n] = (dot(q_c, k_c) + dot(q_r, cache.k_r.row(s))) * scale;
        }
        softmax(logits);
        double* o = heads.data() + i * c.d_h_v;
        for (std::size_t n = 0; n < positions.size(); ++n) {
            auto v = cache.v.row(positions[n]).subspan(j * c.d_h_v, c.d_h_v);
            for (std::size_t a = 0; a < c.d_h_v; ++a) o[a] += logits[n] * v[a];
        }
    }
    return matvec(w.w_o, heads);
}

Vector attend_latent(const GqlaWeights& w, const GqlaConfig& c, const LatentCache& cache,
                     const TokenProjection& q, std::span<const std::size_t> positions, double scale) {
    check_positions(positions, cache.tokens());
    LatentQuery lq{Matrix(c.h_q, c.r_kv), q.q_r};
    for (std::size_t i = 0; i < c.h_q; ++i) {
        const Vector q_lat = group_transpose_apply(w.w_uk, c.group_of(i), c.d_h, q.q_c.row(i));
        std::copy(q_lat.begin(), q_lat.end(), lq.q_lat.row(i).begin());
    }
    Vector heads(c.h_q * c.d_h_v, 0.0);
    attend_latent_heads(lq, cache, positions, scale, [&](std::size_t i, const Vector& o_hat) {
        // o_i = W_uv[j(i)] o_hat
        const std::size_t j = c.group_of(i);
        for (std::size_t a = 0; a < c.d_h_v; ++a) heads[i * c.d_h_v + a] = dot(w.w_uv.row(j * c.d_h_v + a), o_hat);
    });
    return matvec(w.w_o, heads);
}

GqaPathResult forward_gqa_path(const GqlaWeights& w, const GqlaConfig& c, const Matrix& tokens, std::size_t s_q) {
    check_sequence(c, tokens, s_q);
    const std::size_t L = tokens.rows();
    std::vector<TokenProjection> proj;
    proj.reserve(L);
    GqaPathResult result;
    for (std::size_t t = 0; t < L; ++t) {
        proj.push_back(project_token(w, c, tokens.row(t), t));
        append_expanded(result.cache, w, proj.back());
    }
    result.outputs = Matrix(s_q, c.d_model);
    for (std::size_t n = 0; n < s_q; ++n) {
        const std::size_t t = L - s_q + n;
        const Vector y = attend_expanded(w, c, result.cache, proj[t], prefix(t), c.softmax_scale());
        std::copy(y.begin(), y.end(), result.outputs.row(n).begin());
    }
    return result;
}

AbsorbPathResult forward_absorb_path(const GqlaWeights& w, const GqlaConfig& c, const Matrix& tokens,
                                     std::size_t s_q) {
    check_sequence(c, tokens, s_q);
    const std::size_t L = tokens.rows();
    std::vector<TokenProjection> proj;
    proj.reserve(L);
    AbsorbPathResult result;
    for (std::size_t t = 0; t < L; ++t) {
        proj.push_back(project_token(w, c, tokens.row(t), t));
        append_latent(result.cache, proj.back());
    }
    result.outputs = Matrix(s_q, c.d_model);
    for (std::size_t n = 0; n < s_q; ++n) {
        const std::size_t t = L - s_q + n;
        const Vector y = attend_latent(w, c, result.cache, proj[t], prefix(t), c.softmax_scale());
        std::copy(y.begin(), y.end(), result.outputs.row(n).begin());
    }
    return result;
}

AbsorbedWeights absorb(const GqlaWeights& w, const GqlaConfig& c) {
    w.validate(c);
    AbsorbedWeights a;
    a.w_q_abs = Matrix(c.h_q * c.r_kv, c.r_q);
    a.w_o_abs = Matrix(c.d_model, c.h_q * c.r_kv);
    for (std::size_t i = 0; i < c.h_q; ++i) {
        const std::size_t j = c.group_of(i);
        const Matrix uk_j = w.w_uk.row_block(j * c.d_h, c.d_h);
        const Matrix uv_j = w.w_uv.row_block(j * c.d_h_v, c.d_h_v);
        a.w_q_abs.set_block(i * c.r_kv, 0, matmul_tn(uk_j, w.w_uq.row_block(i * c.d_h, c.d_h)));
        a.w_o_abs.set_block(0, i * c.r_kv, matmul(w.w_o.col_block(i * c.d_h_v, c.d_h_v), uv_j));
    }
    a.w_dq = w.w_dq;
    a.w_qr = w.w_qr;
    a.w_dkv = w.w_dkv;
    a.w_kr = w.w_kr;
    return a;
}

AbsorbPathResult forward_absorbed(const AbsorbedWeights& a, const GqlaConfig& c, const Matrix& tokens,
                                  std::size_t s_q) {
    check_sequence(c, tokens, s_q);
    const RopeSpec rope = c.rope();
    const std::size_t L = tokens.rows();
    AbsorbPathResult result;
    std::vector<LatentQuery> queries;
    queries.reserve(L);
    for (std::size_t t = 0; t < L; ++t) {
        auto x = tokens.row(t);
        const double pos = static_cast<double>(t);
        const Vector c_q = matvec(a.w_dq, x);
        LatentQuery q{Matrix(c.h_q, c.r_kv, matvec(a.w_q_abs, c_q)), Matrix(c.h_q, c.d_h_r, matvec(a.w_qr, c_q))};
        for (std::size_t i = 0; i < c.h_q; ++i) apply_rope_inplace(rope, q.q_r.row(i), pos);
        queries.push_back(std::move(q));
        result.cache.c_kv.append_row(matvec(a.w_dkv, x));
        result.cache.k_r.append_row(apply_rope(rope, matvec(a.w_kr, x), pos));
    }
    result.outputs = Matrix(s_q, c.d_model);
    for (std::size_t n = 0; n < s_q; ++n) {
        const std::size_t t = L - s_q + n;
        Vector heads(c.h_q * c.r_kv);
        attend_latent_heads(queries[t], result.cache, prefix(t), c.softmax_scale(),
                            [&](std::size_t i, const Vector& o_hat) {
                                std::copy(o_hat.begin(), o_hat.end(), heads.begin() + static_cast<std::ptrdiff_t>(i * c.r_kv));
                            });
        const Vector y = matvec(a.w_o_abs, heads);
        std::copy(y.begin(), y.end(), result.outputs.row(n).begin());
    }
    return result;
}

GqaDecodeStep decode_gqa(const GqlaWeights& w, const GqlaConfig& c, ExpandedCache cache, std::span<const double> x) {
    const std::size_t t = cache.tokens();
    const TokenProjection p = project_token(w, c, x, t);
    append_expanded(cache, w, p);
    Vector y = attend_expanded(w, c, cache, p, prefix(t), c.softmax_scale());
    return {std::move(y), std::move(cache)};
}

AbsorbDecodeStep decode_absorb(const GqlaWeights& w, const GqlaConfig& c, LatentCache cache,
                               std::span<const double> x) {
    const std::size_t t = cache.tokens();
    const TokenProjection p = project_token(w, c, x, t);
    append_latent(cache, p);
    Vector y = attend_latent(w, c, cache, p, prefix(t), c.softmax_scale());
    return {std::move(y), std::move(cache)};
}

} // namespace gqla
