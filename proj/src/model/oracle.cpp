#include <cmath>
#include <vector>

#include "gqla/error.hpp"
#include "gqla/model.hpp"

namespace gqla {

// Straight-line reference. Deliberately does not call project_token, the
// attention kernels, or the RoPE helpers: every quantity is recomputed here
// from the raw weights with explicit index arithmetic.
Matrix oracle_mha(const GqlaWeights& w, const GqlaConfig& c, const Matrix& tokens, std::size_t s_q) {
    if (tokens.rows() == 0) throw ParameterError("oracle_mha: empty token sequence");
    if (tokens.cols() != c.d_model) throw ShapeError("oracle_mha: token width != D");
    if (s_q == 0 || s_q > tokens.rows()) throw ParameterError("oracle_mha: invalid s_q");

    const std::size_t L = tokens.rows();
    const std::size_t H = c.h_q;
    const std::size_t hpg = c.h_q / c.g;
    const std::size_t dk = c.d_h, dv = c.d_h_v, dr = c.d_h_r;

    std::vector<double> freq(dr / 2);
    for (std::size_t k = 0; k < dr / 2; ++k)
        freq[k] = c.rope_inv_freq.empty() ? std::pow(c.rope_base, -2.0 * double(k) / double(dr)) : c.rope_inv_freq[k];

    auto rotate = [&](std::vector<double>& v, std::size_t pos) {
        for (std::size_t k = 0; k < dr / 2; ++k) {
            const double a = double(pos) * freq[k];
            const double x = v[2 * k], y = v[2 * k + 1];
            v[2 * k] = std::cos(a) * x - std::sin(a) * y;
            v[2 * k + 1] = std::sin(a) * x + std::cos(a) * y;
        }
    };

    // Replicated up-projections: head h owns rows of group h / hpg.
    std::vector<double> uk_rep(H * dk * c.r_kv), uv_rep(H * dv * c.r_kv);
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t grp = h / hpg;
        for (std::size_t a = 0; a < dk; ++a)
            for (std::size_t r = 0; r < c.r_kv; ++r) uk_rep[(h * dk + a) * c.r_kv + r] = w.w_uk(grp * dk + a, r);
        for (std::size_t a = 0; a < dv; ++a)
            for (std::size_t r = 0; r < c.r_kv; ++r) uv_rep[(h * dv + a) * c.r_kv + r] = w.w_uv(grp * dv + a, r);
    }

    // Materialise per-head K (NoPE ++ RoPE), V, and Q for every position.
    const std::size_t kd = dk + dr;
    std::vector<double> K(L * H * kd), V(L * H * dv), Q(L * H * kd);
    for (std::size_t t = 0; t < L; ++t) {
        std::vector<double> cq(c.r_q, 0.0), ckv(c.r_kv, 0.0), kr(dr, 0.0);
        for (std::size_t r = 0; r < c.r_q; ++r)
            for (std::size_t d = 0; d < c.d_model; ++d) cq[r] += w.w_dq(r, d) * tokens(t, d);
        for (std::size_t r = 0; r < c.r_kv; ++r)
            for (std::size_t d = 0; d < c.d_model; ++d) ckv[r] += w.w_dkv(r, d) * tokens(t, d);
        for (std::size_t r = 0; r < dr; ++r)
            for (std::size_t d = 0; d < c.d_model; ++d) kr[r] += w.w_kr(r, d) * tokens(t, d);
        rotate(kr, t);

        for (std::size_t h = 0; h < H; ++h) {
            double* k = &K[(t * H + h) * kd];
            double* q = &Q[(t * H + h) * kd];
            double* v = &V[(t * H + h) * dv];
            for (std::size_t a = 0; a < dk; ++a) {
                double sk = 0.0, sq = 0.0;
                for (std::size_t r = 0; r < c.r_kv; ++r) sk += uk_rep[(h * dk + a) * c.r_kv + r] * ckv[r];
                for (std::size_t r = 0; r < c.r_q; ++r) sq += w.w_uq(h * dk + a, r) * cq[r];
                k[a] = sk;
                q[a] = sq;
            }
            for (std::size_t a = 0; a < dv; ++a) {
                double s = 0.0;
                for (std::size_t r = 0; r < c.r_kv; ++r) s += uv_rep[(h * dv + a) * c.r_kv + r] * ckv[r];
                v[a] = s;
            }
            std::vector<double> qr(dr, 0.0);
            for (std::size_t a = 0; a < dr; ++a)
                for (std::size_t r = 0; r < c.r_q; ++r) qr[a] += w.w_qr(h * dr + a, r) * cq[r];
            rotate(qr, t);
            for (std::size_t a = 0; a < dr; ++a) {
                q[dk + a] = qr[a];
                k[dk + a] = kr[a];
            }
        }
    }

    const double scale = 1.0 / std::sqrt(double(kd));
    Matrix out(s_q, c.d_model);
    for (std::size_t n = 0; n < s_q; ++n) {
        const std::size_t t = L - s_q + n;
        std::vector<double> concat(H * dv, 0.0);
        for (std::size_t h = 0; h < H; ++h) {
            std::vector<double> logit(t + 1);
            double mx = -INFINITY;
            for (std::size_t s = 0; s <= t; ++s) {
                double acc = 0.0;
                for (std::size_t a = 0; a < kd; ++a) acc += Q[(t * H + h) * kd + a] * K[(s * H + h) * kd + a];
                logit[s] = acc * scale;
                mx = std::max(mx, logit[s]);
            }
            double z = 0.0;
            for (std::size_t s = 0; s <= t; ++s) z += std::exp(logit[s] - mx);
            for (std::size_t s = 0; s <= t; ++s) {
                const double p = std::exp(logit[s] - mx) / z;
                for (std::size_t a = 0; a < dv; ++a) concat[h * dv + a] += p * V[(s * H + h) * dv + a];
            }
        }
        for (std::size_t d = 0; d < c.d_model; ++d) {
            double acc = 0.0;
            for (std::size_t e = 0; e < H * dv; ++e) acc += w.w_o(d, e) * concat[e];
            out(n, d) = acc;
        }
    }
    return out;
}

} // namespace gqla
