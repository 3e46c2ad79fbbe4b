#include <algorithm>
#include <random>
#include <string>

#include "gqla/convert_mla.hpp"
#include "gqla/error.hpp"

namespace gqla {

namespace {

void check_groups(const GqlaConfig& c, std::size_t g) {
    if (g == 0 || c.h_q % g != 0) {
        throw ParameterError("MLA conversion: g (" + std::to_string(g) + ") must divide h_q (" +
                             std::to_string(c.h_q) + ")");
    }
}

GqlaConfig with_groups(GqlaConfig c, std::size_t g) {
    c.g = g;
    return c;
}

} // namespace

GqlaWeights as_gqla(const MlaWeights& w) {
    return GqlaWeights{w.w_dq, w.w_uq, w.w_qr, w.w_dkv, w.w_uk, w.w_uv, w.w_kr, w.w_o};
}

MlaWeights as_mla(const GqlaWeights& w) {
    return MlaWeights{w.w_dq, w.w_uq, w.w_qr, w.w_dkv, w.w_uk, w.w_uv, w.w_kr, w.w_o};
}

void require_mla_config(const GqlaConfig& c) {
    if (c.g != c.h_q) throw ParameterError("MLA config: up-projections are head-indexed, so g must equal h_q");
}

void MlaWeights::validate(const GqlaConfig& c) const {
    if (w_uk.rows() != c.h_q * c.d_h || w_uv.rows() != c.h_q * c.d_h_v) {
        throw ShapeError("MLA w_uk/w_uv must be head-indexed: expected " + std::to_string(c.h_q * c.d_h) + " and " +
                         std::to_string(c.h_q * c.d_h_v) + " rows, got " + std::to_string(w_uk.rows()) + " and " +
                         std::to_string(w_uv.rows()));
    }
    require_mla_config(c);
    as_gqla(*this).validate(c);
}

MlaWeights init_random_mla(const GqlaConfig& c, std::uint64_t seed) {
    require_mla_config(c);
    return as_mla(init_random(c, seed));
}

Matrix synthetic_calibration(std::size_t d_model, std::uint64_t seed, std::size_t batches, std::size_t batch_tokens) {
    if (d_model == 0 || batches == 0 || batch_tokens == 0) throw ParameterError("synthetic_calibration: zero size");
    std::mt19937_64 rng(seed);
    return random_normal(batches * batch_tokens, d_model, rng);
}

MlaCalibration calibrate(const MlaWeights& src, const GqlaConfig& c, const Matrix& calib, std::size_t g) {
    src.validate(c);
    check_groups(c, g);
    if (calib.rows() == 0) throw ParameterError("calibrate: empty calibration batch");
    if (calib.cols() != c.d_model) throw ShapeError("calibrate: calibration width != D");

    const std::size_t hpg = c.h_q / g;
    const Matrix latent = matmul(calib, src.w_dkv.transposed()); // N x r_kv
    MlaCalibration out;
    out.g = g;
    for (std::size_t j = 0; j < g; ++j) {
        const Matrix wk = src.w_uk.row_block(j * hpg * c.d_h, hpg * c.d_h);
        const Matrix wv = src.w_uv.row_block(j * hpg * c.d_h_v, hpg * c.d_h_v);
        out.k.push_back(accumulate(CovarianceAccumulator(wk.rows()), matmul(latent, wk.transposed())));
        out.v.push_back(accumulate(CovarianceAccumulator(wv.rows()), matmul(latent, wv.transposed())));
    }
    return out;
}

GroupFactorization factor(const MlaWeights& src, const GqlaConfig& c, const MlaCalibration& stats, std::size_t r_k,
                          std::size_t r_v) {
    src.validate(c);
    check_groups(c, stats.g);
    const std::size_t g = stats.g, hpg = c.h_q / g;
    if (stats.k.size() != g || stats.v.size() != g) throw ShapeError("factor: calibration does not cover every group");
    if (r_k == 0 || r_k > hpg * c.d_h)
        throw ParameterError("factor: r_k must lie in [1, (h_q/g)*d_h] = [1, " + std::to_string(hpg * c.d_h) + "]");
    if (r_v == 0 || r_v > hpg * c.d_h_v)
        throw ParameterError("factor: r_v must lie in [1, (h_q/g)*d_h_v] = [1, " + std::to_string(hpg * c.d_h_v) + "]");

    GroupFactorization f;
    f.g = g;
    f.r_k = r_k;
    f.r_v = r_v;
    f.sigma_k = stats.k;
    f.sigma_v = stats.v;
    for (std::size_t j = 0; j < g; ++j) {
        f.k.push_back(pca_factor(src.w_uk.row_block(j * hpg * c.d_h, hpg * c.d_h), stats.k[j], r_k));
        f.v.push_back(pca_factor(src.w_uv.row_block(j * hpg * c.d_h_v, hpg * c.d_h_v), stats.v[j], r_v));
    }
    return f;
}

MlaWeights unfused_weights(const MlaWeights& src, const GqlaConfig& c, const GroupFactorization& f) {
    src.validate(c);
    check_groups(c, f.g);
    const std::size_t hpg = c.h_q / f.g;
    MlaWeights out = src;
    for (std::size_t j = 0; j < f.g; ++j) {
        out.w_uk.set_block(j * hpg * c.d_h, 0, matmul(f.k[j].u, f.k[j].v));
        out.w_uv.set_block(j * hpg * c.d_h_v, 0, matmul(f.v[j].u, f.v[j].v));
    }
    return out;
}

GqlaModel absorb_factors(const MlaWeights& src, const GqlaConfig& c, const GroupFactorization& f) {
    src.validate(c);
    check_groups(c, f.g);
    if (f.r_k != c.d_h || f.r_v != c.d_h_v) {
        throw ParameterError("absorb_factors: ranks (" + std::to_string(f.r_k) + ", " + std::to_string(f.r_v) +
                             ") are not canonical (d_h, d_h_v); per-head blocks are not square");
    }
    const std::size_t g = f.g, hpg = c.h_q / g;

    GqlaModel out;
    out.config = with_groups(c, g);
    GqlaWeights& w = out.weights;
    w = as_gqla(src);
    w.w_uk = Matrix(g * c.d_h, c.r_kv);
    w.w_uv = Matrix(g * c.d_h_v, c.r_kv);
    for (std::size_t j = 0; j < g; ++j) {
        w.w_uk.set_block(j * c.d_h, 0, f.k[j].v);
        w.w_uv.set_block(j * c.d_h_v, 0, f.v[j].v);
        for (std::size_t l = 0; l < hpg; ++l) {
            const std::size_t i = j * hpg + l;
            const Matrix uk = f.k[j].u.row_block(l * c.d_h, c.d_h);     // d_h x d_h
            const Matrix uv = f.v[j].u.row_block(l * c.d_h_v, c.d_h_v); // d_h_v x d_h_v
            w.w_uq.set_block(i * c.d_h, 0, matmul_tn(uk, src.w_uq.row_block(i * c.d_h, c.d_h)));
            w.w_o.set_block(0, i * c.d_h_v, matmul(src.w_o.col_block(i * c.d_h_v, c.d_h_v), uv));
        }
    }
    w.validate(out.config);
    return out;
}

MlaConversion convert_mla(const MlaWeights& src, const GqlaConfig& c, const Matrix& calib, std::size_t g,
                          const MlaConvertOptions& options) {
    if (options.probe_sequences == 0 || options.probe_length == 0)
        throw ParameterError("convert_mla: need at least one non-empty probe sequence");
    const MlaCalibration stats = calibrate(src, c, calib, g);
    const GroupFactorization f = factor(src, c, stats, c.d_h, c.d_h_v);

    MlaConversion out;
    out.model = absorb_factors(src, c, f);
    MlaConversionReport& rep = out.report;
    for (std::size_t j = 0; j < g; ++j) {
        auto retained = [](const CovarianceAccumulator& acc, std::size_t rank) {
            const Vector ev = sym_eig(acc.normalized()).eigenvalues;
            double total = 0.0, top = 0.0;
            for (std::size_t i = 0; i < ev.size(); ++i) {
                total += ev[i];
                if (i < rank) top += ev[i];
            }
            return total > 0.0 ? top / total : 1.0;
        };
        rep.k_energy_retained.push_back(retained(stats.k[j], c.d_h));
        rep.v_energy_retained.push_back(retained(stats.v[j], c.d_h_v));
    }

    const GqlaWeights source = as_gqla(src);
    const GqlaWeights unfused = as_gqla(unfused_weights(src, c, f));
    std::mt19937_64 rng(options.probe_seed);
    const std::size_t L = options.probe_length;
    for (std::size_t p = 0; p < options.probe_sequences; ++p) {
        const Matrix x = random_normal(L, c.d_model, rng);
        const Matrix ref = forward_absorb_path(source, c, x, L).outputs;
        const Matrix gqa = forward_gqa_path(out.model.weights, out.model.config, x, L).outputs;
        const Matrix abs = forward_absorb_path(out.model.weights, out.model.config, x, L).outputs;
        const Matrix unf = forward_absorb_path(unfused, c, x, L).outputs;
        rep.output_deviation = std::max(rep.output_deviation, max_abs_diff(gqa, ref) / std::max(max_abs(ref), 1e-300));
        rep.absorb_gap = std::max(rep.absorb_gap, max_abs_diff(abs, unf));
        rep.dual_path_deviation = std::max(rep.dual_path_deviation, max_abs_diff(gqa, abs));
    }
    return out;
}

} // namespace gqla
