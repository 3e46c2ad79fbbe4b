#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "gqla/convert_gqa.hpp"
#include "gqla/error.hpp"
#include "gqla/numerics.hpp"

namespace gqla {

namespace {

constexpr double kEnergyFloor = 1e-12; // relative to the largest band eigenvalue

void require_fully_rotary(const MergedWeights& m, const char* who) {
    m.validate();
    if (m.n_k != m.g * m.d_h || m.rope.dim != m.n_k)
        throw ParameterError(std::string(who) + ": expects an aligned block with a fully rotary key latent");
}

CovarianceAccumulator activation_covariance(const Matrix& w_rows, const Matrix& calib) {
    CovarianceAccumulator acc(w_rows.rows());
    if (w_rows.rows() > 0) acc.add(matmul(calib, w_rows.transposed()));
    return acc;
}

} // namespace

FreqFoldResult freqfold_compress(const MergedWeights& aligned, const Matrix& calib, std::size_t r_kv,
                                 std::size_t d_h_r) {
    require_fully_rotary(aligned, "freqfold");
    if (calib.rows() == 0) throw ParameterError("freqfold: empty calibration batch");
    const std::size_t g = aligned.g, d_h = aligned.d_h, n = g * d_h;
    if (d_h_r == 0 || d_h_r % 2 != 0) throw ParameterError("freqfold: d_h_r must be even and >= 2");
    if (d_h_r > n) throw ParameterError("freqfold: d_h_r exceeds the key latent width g*d_h");
    if (r_kv == 0 || r_kv + d_h_r > 2 * n) {
        throw ParameterError("freqfold: rank budget r_kv + d_h_r = " + std::to_string(r_kv + d_h_r) +
                             " exceeds 2*g*d_h = " + std::to_string(2 * n));
    }

    const CovarianceAccumulator acc = activation_covariance(aligned.w_dkv.row_block(0, n), calib);
    const Matrix& s = acc.second_moment;
    const std::size_t bands = d_h / 2;

    FreqFoldResult out;
    std::vector<Matrix> band_vectors(bands);
    double lambda_max = 0.0, total = 0.0;
    for (std::size_t m = 0; m < bands; ++m) {
        std::vector<std::size_t> coords;
        Matrix c(g, g);
        for (std::size_t j = 0; j < g; ++j) {
            coords.push_back(j * d_h + 2 * m);
            coords.push_back(j * d_h + 2 * m + 1);
            for (std::size_t k = 0; k < g; ++k) {
                c(j, k) = s(j * d_h + 2 * m, k * d_h + 2 * m) + s(j * d_h + 2 * m + 1, k * d_h + 2 * m + 1);
            }
        }
        EigenResult e = sym_eig(c);
        for (double l : e.eigenvalues) lambda_max = std::max(lambda_max, l);
        out.band_partition.push_back(std::move(coords));
        out.band_energy.push_back(std::move(e.eigenvalues));
        band_vectors[m] = std::move(e.eigenvectors);
    }
    for (Vector& energies : out.band_energy) {
        for (double& l : energies) {
            if (l <= kEnergyFloor * lambda_max) l = 0.0;
            total += l;
        }
    }

    // Greedy by energy; ties prefer lower frequency (larger band index), then lower component.
    std::vector<std::tuple<double, std::size_t, std::size_t>> order;
    for (std::size_t m = 0; m < bands; ++m)
        for (std::size_t c = 0; c < g; ++c) order.emplace_back(out.band_energy[m][c], m, c);
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) > std::get<1>(b);
        return std::get<2>(a) < std::get<2>(b);
    });

    const std::size_t keep = d_h_r / 2;
    std::vector<std::pair<std::size_t, std::size_t>> dropped;
    double kept_energy = 0.0;
    for (std::size_t q = 0; q < order.size(); ++q) {
        const auto [l, m, c] = order[q];
        if (q < keep) {
            out.retained.emplace_back(m, c);
            kept_energy += l;
        } else {
            dropped.emplace_back(m, c);
        }
    }
    std::sort(out.retained.begin(), out.retained.end());
    std::sort(dropped.begin(), dropped.end());
    out.rotary_energy_retained = total > 0.0 ? kept_energy / total : 1.0;

    auto fill_pairs = [&](const std::vector<std::pair<std::size_t, std::size_t>>& comps, Matrix& basis) {
        basis = Matrix(n, 2 * comps.size());
        for (std::size_t q = 0; q < comps.size(); ++q) {
            const auto [m, c] = comps[q];
            for (std::size_t j = 0; j < g; ++j) {
                basis(j * d_h + 2 * m, 2 * q) = band_vectors[m](j, c);
                basis(j * d_h + 2 * m + 1, 2 * q + 1) = band_vectors[m](j, c);
            }
        }
    };
    fill_pairs(out.retained, out.rope_basis);
    fill_pairs(dropped, out.nope_basis);
    for (const auto& [m, c] : out.retained) out.rope_inv_freq.push_back(aligned.rope.inv_freq[m]);
    return out;
}

MergedWeights apply_freqfold(const MergedWeights& aligned, const FreqFoldResult& fold) {
    require_fully_rotary(aligned, "apply_freqfold");
    const std::size_t n = aligned.n_k;
    if (fold.rope_basis.rows() != n || fold.nope_basis.rows() != n ||
        fold.rope_basis.cols() + fold.nope_basis.cols() != n)
        throw ShapeError("apply_freqfold: bases do not span the key latent");
    const Matrix basis = hstack(fold.rope_basis, fold.nope_basis);

    MergedWeights out = aligned;
    out.w_dkv.set_block(0, 0, matmul_tn(basis, aligned.w_dkv.row_block(0, n)));
    out.w_uk = matmul(aligned.w_uk, basis);
    out.rope = RopeSpec::with_frequencies(fold.rope_inv_freq, aligned.rope.base);
    return out;
}

BalanceResult balance_sides(const MergedWeights& folded, const Matrix& calib) {
    folded.validate();
    if (calib.rows() == 0) throw ParameterError("balance: empty calibration batch");
    const std::size_t r0 = folded.rope.dim;
    const std::size_t nk = folded.n_k - r0;

    BalanceResult out{folded, 1.0, 1.0};
    if (nk == 0) return out;

    const double k_norm = frobenius_norm(matmul(calib, folded.w_dkv.row_block(r0, nk).transposed()));
    const double v_norm = frobenius_norm(matmul(calib, folded.w_dkv.row_block(folded.n_k, folded.n_v).transposed()));
    if (k_norm == 0.0) throw DegenerateCalibrationError("balance: K_nope activations have zero norm");
    if (v_norm == 0.0) throw DegenerateCalibrationError("balance: V activations have zero norm");
    const double target = std::sqrt(k_norm * v_norm);
    out.alpha = target / k_norm;
    out.beta = target / v_norm;

    for (std::size_t r = r0; r < folded.n_k; ++r)
        for (double& x : out.merged.w_dkv.row(r)) x *= out.alpha;
    for (std::size_t r = folded.n_k; r < folded.n_k + folded.n_v; ++r)
        for (double& x : out.merged.w_dkv.row(r)) x *= out.beta;
    for (std::size_t r = 0; r < out.merged.w_uk.rows(); ++r)
        for (std::size_t c = r0; c < folded.n_k; ++c) out.merged.w_uk(r, c) /= out.alpha;
    out.merged.w_uv *= 1.0 / out.beta;
    return out;
}

JointFactors joint_pca(const MergedWeights& folded, const Matrix& calib, std::size_t r_kv) {
    folded.validate();
    if (calib.rows() == 0) throw ParameterError("joint_pca: empty calibration batch");
    const std::size_t r0 = folded.rope.dim;
    const std::size_t nk = folded.n_k - r0, nv = folded.n_v;
    const Matrix stacked = folded.w_dkv.row_block(r0, nk + nv);
    const CovarianceAccumulator acc = activation_covariance(stacked, calib);
    const LowRankFactors f = pca_factor(stacked, acc, r_kv);

    JointFactors out;
    out.w_dkv = f.v;
    const Matrix u_k = f.u.row_block(0, nk);
    const Matrix u_v = f.u.row_block(nk, nv);
    out.w_uk_nope = nk > 0 ? matmul(folded.w_uk.col_block(r0, nk), u_k) : Matrix(folded.w_uk.rows(), r_kv);
    out.w_uv = matmul(folded.w_uv, u_v);

    // Per-side residual traces of (I - uu^T) sigma (I - uu^T).
    const Matrix sigma = acc.normalized();
    Matrix p = Matrix::identity(nk + nv) - matmul(f.u, f.u.transposed());
    const Matrix resid = matmul(matmul(p, sigma), p);
    double k_tot = 0.0, k_res = 0.0, v_tot = 0.0, v_res = 0.0;
    for (std::size_t i = 0; i < nk; ++i) {
        k_tot += sigma(i, i);
        k_res += resid(i, i);
    }
    for (std::size_t i = nk; i < nk + nv; ++i) {
        v_tot += sigma(i, i);
        v_res += resid(i, i);
    }
    out.k_energy_retained = k_tot > 0.0 ? 1.0 - k_res / k_tot : 1.0;
    out.v_energy_retained = v_tot > 0.0 ? 1.0 - v_res / v_tot : 1.0;
    return out;
}

JointFactors balance_and_joint_pca(const MergedWeights& folded, const Matrix& calib, std::size_t r_kv,
                                   bool balance) {
    if (!balance) return joint_pca(folded, calib, r_kv);
    const BalanceResult b = balance_sides(folded, calib);
    JointFactors out = joint_pca(b.merged, calib, r_kv);
    out.alpha = b.alpha;
    out.beta = b.beta;
    return out;
}

GqlaModel finalize_gqla(const MergedWeights& folded, const JointFactors& joint) {
    folded.validate();
    const std::size_t D = folded.d_model();
    const std::size_t d_h = folded.d_h, d_h_r = folded.rope.dim;
    const std::size_t hpg = folded.h_q / folded.g;
    if (joint.w_dkv.cols() != D || joint.w_uk_nope.rows() != folded.g * d_h || joint.w_uv.rows() != folded.g * d_h)
        throw ShapeError("finalize_gqla: joint factors do not match the merged block");

    GqlaModel out;
    GqlaConfig& c = out.config;
    c.d_model = D;
    c.h_q = folded.h_q;
    c.g = folded.g;
    c.d_h = d_h;
    c.d_h_v = d_h;
    c.d_h_r = d_h_r;
    c.r_kv = joint.w_dkv.rows();
    c.r_q = D;
    c.rope_base = folded.rope.base;
    c.rope_inv_freq = folded.rope.inv_freq;

    const double s = std::sqrt(double(d_h + d_h_r) / double(d_h));
    GqlaWeights& w = out.weights;
    w.w_dq = Matrix::identity(D);
    w.w_uq = folded.w_q * s;
    w.w_qr = Matrix(folded.h_q * d_h_r, D);
    for (std::size_t i = 0; i < folded.h_q; ++i) {
        const Matrix uk_rope = folded.w_uk.block((i / hpg) * d_h, 0, d_h, d_h_r);
        w.w_qr.set_block(i * d_h_r, 0, matmul_tn(uk_rope, folded.w_q.row_block(i * d_h, d_h)) * s);
    }
    w.w_dkv = joint.w_dkv;
    w.w_uk = joint.w_uk_nope;
    w.w_uv = joint.w_uv;
    w.w_kr = folded.w_dkv.row_block(0, d_h_r);
    w.w_o = folded.w_o;
    w.validate(c);
    return out;
}

} // namespace gqla
