#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "gqla/matrix.hpp"
#include "gqla/model.hpp"
#include "gqla/rope.hpp"

namespace gqla {

// Source grouped-query attention block. Head i reads K/V group i / (h_q / g).
struct GqaWeights {
    std::size_t h_q = 0;
    std::size_t g = 0;
    std::size_t d_h = 0;
    Matrix w_q; // h_q*d_h x D
    Matrix w_k; // g*d_h x D
    Matrix w_v; // g*d_h x D
    Matrix w_o; // D x h_q*d_h
    RopeSpec rope; // dim d_h, applied per head

    std::size_t d_model() const { return w_q.cols(); }
    void validate() const;
    bool operator==(const GqaWeights&) const = default;
};

GqaWeights init_random_gqa(std::size_t h_q, std::size_t g, std::size_t d_h, std::size_t d_model,
                           std::uint64_t seed, double rope_base = 10000.0);

// Causal GQA with scale 1/sqrt(d_h); outputs cover the trailing s_q positions.
Matrix gqa_forward(const GqaWeights& w, const Matrix& tokens, std::size_t s_q);

// Latent-head form of a GQA block.
//
// Per token the cache holds c^K = w_dkv[:n_k] x and c^V = w_dkv[n_k:] x. Head i
// scores against RoPE(c^K) with query RoPE(w_uk[j]^T w_q[i] x), where the rope
// acts on the leading rope.dim coordinates of the latent and the remainder is
// position-free. Values are w_uv[j] c^V. Scale 1/sqrt(d_h).
struct MergedWeights {
    std::size_t h_q = 0;
    std::size_t g = 0;
    std::size_t d_h = 0;
    std::size_t n_k = 0; // key latent width
    std::size_t n_v = 0; // value latent width
    Matrix w_q;   // h_q*d_h x D
    Matrix w_dkv; // (n_k + n_v) x D
    Matrix w_uk;  // g*d_h x n_k, group-indexed
    Matrix w_uv;  // g*d_h x n_v, group-indexed
    Matrix w_o;   // D x h_q*d_h
    RopeSpec rope; // rope.dim <= n_k

    std::size_t d_model() const { return w_q.cols(); }
    void validate() const;
};

// Exact reparameterisation: c^K, c^V are the stacked group keys/values and the
// selectors are sparse identities picking group j.
MergedWeights merge_heads(const GqaWeights& src);

Matrix merged_forward(const MergedWeights& m, const Matrix& tokens, std::size_t s_q);

// Scaled pre-softmax logits per head (L x L, unmasked).
std::vector<Matrix> merged_scores(const MergedWeights& m, const Matrix& tokens);

// Pre-RoPE key latent activations, tokens x n_k.
Matrix key_activations(const MergedWeights& m, const Matrix& tokens);

// Per KV group j: block-diagonal d_h x d_h rotation, one 2x2 block
// [[cos a, sin a], [-sin a, cos a]] per rotary pair.
struct RoRopeRotations {
    std::vector<Matrix> per_group;
    std::vector<Vector> angles; // [group][pair]
};

RoRopeRotations identity_rotations(std::size_t g, std::size_t d_h);

// Each pair's rotation is the 2-d PCA of that pair's key activations, so the
// leading coordinate carries the larger share of energy. Group 0's leading axis
// fixes the sign: other groups flip by pi when anti-correlated with it.
RoRopeRotations rorope_rotations(const MergedWeights& merged, const Matrix& calib);

// Rotates group j's key latent rows and the query rows of its heads by R_j.
// Rotations commute with same-frequency RoPE, so scores are unchanged.
MergedWeights apply_rorope(const MergedWeights& merged, const RoRopeRotations& r);

struct RoRopeAlignment {
    MergedWeights merged;
    RoRopeRotations rotations;
};

RoRopeAlignment rorope_align(const MergedWeights& merged, const Matrix& calib);

struct FreqFoldResult {
    Matrix rope_basis; // g*d_h x d_h_r, columns (x, y) per retained pair
    Matrix nope_basis; // g*d_h x (g*d_h - d_h_r)
    Vector rope_inv_freq; // d_h_r / 2 frequencies of the retained pairs
    // Band m = pair m of every group: key coordinates {j*d_h + 2m, j*d_h + 2m + 1}.
    std::vector<std::vector<std::size_t>> band_partition;
    std::vector<Vector> band_energy; // per band, non-increasing
    std::vector<std::pair<std::size_t, std::size_t>> retained; // (band, component), sorted
    double rotary_energy_retained = 0.0; // fraction of total key energy kept rotary
};

// Band-wise PCA of the key latent. Each band's g x g pair covariance
// sum(x x^T + y y^T) is diagonalised; a component applies the same mixing to
// the x and y coordinates, so it stays a rotary pair of the band's frequency.
// The d_h_r / 2 highest-energy components become rotary, ties broken toward
// lower frequency and then lower component index.
FreqFoldResult freqfold_compress(const MergedWeights& aligned, const Matrix& calib, std::size_t r_kv,
                                 std::size_t d_h_r);

// Re-expresses c^K in [rope_basis, nope_basis] coordinates and truncates the
// rope to the retained pairs. Exact iff the dropped rotary components are idle.
MergedWeights apply_freqfold(const MergedWeights& aligned, const FreqFoldResult& fold);

struct BalanceResult {
    MergedWeights merged;
    double alpha = 1.0; // K_nope scale
    double beta = 1.0;  // V scale
};

// Scales K_nope and V activations to the common Frobenius norm sqrt(|K||V|) and
// absorbs the inverse into the selectors.
BalanceResult balance_sides(const MergedWeights& folded, const Matrix& calib);

struct JointFactors {
    Matrix w_dkv;     // r_kv x D
    Matrix w_uk_nope; // g*d_h x r_kv
    Matrix w_uv;      // g*d_h x r_kv
    double alpha = 1.0;
    double beta = 1.0;
    double k_energy_retained = 1.0;
    double v_energy_retained = 1.0;
};

// One PCA over stacked [K_nope; V] latent activations to rank r_kv.
JointFactors joint_pca(const MergedWeights& folded, const Matrix& calib, std::size_t r_kv);

JointFactors balance_and_joint_pca(const MergedWeights& folded, const Matrix& calib, std::size_t r_kv,
                                   bool balance = true);

// Emits GQLA weights with w_dq = I (r_q = D). Queries are rescaled by
// sqrt((d_h + d_h_r) / d_h) so the merged 1/sqrt(d_h) scores survive the
// model's 1/sqrt(d_h + d_h_r) softmax scale.
GqlaModel finalize_gqla(const MergedWeights& folded, const JointFactors& joint);

struct GqaConvertOptions {
    bool balance = true;
    std::size_t probe_sequences = 4;
    std::size_t probe_length = 16;
    std::uint64_t probe_seed = 0;
};

struct GqaConversionReport {
    double merge_deviation = 0.0;        // merged vs source, max abs
    double rorope_score_deviation = 0.0; // scores before vs after, max abs
    double balance_deviation = 0.0;      // merged forward before vs after balancing, max abs
    double rotary_energy_retained = 0.0;
    double k_energy_retained = 0.0;
    double v_energy_retained = 0.0;
    double output_deviation = 0.0; // converted vs source, max abs relative to max |source|
    double dual_path_deviation = 0.0;
    double cache_ratio = 0.0; // (r_kv + d_h_r) / (2 g d_h)
};

struct GqaConversion {
    GqlaModel model;
    GqaConversionReport report;
};

// target supplies h_q, g, d_h, D (must match src) and r_kv, d_h_r. d_h_v is
// forced to d_h and r_q to D (the query path is not compressed).
GqaConversion convert_gqa(const GqaWeights& src, const Matrix& calib, const GqlaConfig& target,
                          const GqaConvertOptions& options = {});

} // namespace gqla
