#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gqla/matrix.hpp"
#include "gqla/rope.hpp"

namespace gqla {

// Architecture dimensions of one latent-attention block.
struct GqlaConfig {
    std::size_t d_model = 0; // D
    std::size_t h_q = 0;     // query heads
    std::size_t g = 0;       // KV groups
    std::size_t d_h = 0;     // per-head key / NoPE query dim
    std::size_t d_h_v = 0;   // per-head value dim
    std::size_t d_h_r = 0;   // decoupled rotary dim (even)
    std::size_t r_kv = 0;    // KV latent rank
    std::size_t r_q = 0;     // query latent rank
    double rope_base = 10000.0;
    // Explicit rotary frequency table (d_h_r / 2 entries); empty means the
    // standard table derived from rope_base.
    std::vector<double> rope_inv_freq;

    static std::size_t default_query_rank(std::size_t r_kv) { return 3 * r_kv; }

    // (h_q, g, d_h, d_h_v, d_h_r, r_kv) = (128, 8, 128, 128, 64, 512), D = 7168.
    static GqlaConfig canonical();
    // (h_q, g, d_h, d_h_v, d_h_r, r_kv, r_q, D) = (8, 2, 16, 16, 8, 32, 48, 64).
    static GqlaConfig desk();

    std::size_t heads_per_group() const { return h_q / g; }
    // 0-based j(i): contiguous blocks of heads_per_group() heads share a group.
    std::size_t group_of(std::size_t head) const { return head / heads_per_group(); }
    RopeSpec rope() const;
    double softmax_scale() const;

    // Elements per cached token on each path.
    std::size_t latent_cache_elements() const { return r_kv + d_h_r; }
    std::size_t expanded_cache_elements() const { return g * (d_h + d_h_v) + d_h_r; }

    void validate() const;
    bool operator==(const GqlaConfig&) const = default;
};

struct GqlaWeights {
    Matrix w_dq;  // r_q x D
    Matrix w_uq;  // h_q*d_h x r_q
    Matrix w_qr;  // h_q*d_h_r x r_q
    Matrix w_dkv; // r_kv x D
    Matrix w_uk;  // g*d_h x r_kv
    Matrix w_uv;  // g*d_h_v x r_kv
    Matrix w_kr;  // d_h_r x D
    Matrix w_o;   // D x h_q*d_h_v

    void validate(const GqlaConfig& config) const;
    bool operator==(const GqlaWeights&) const = default;
};

// Up-projections folded into the query and output maps (MQA-absorb kernel weights).
struct AbsorbedWeights {
    Matrix w_q_abs; // h_q*r_kv x r_q; head i block = W_uk[j(i)]^T W_uq[i]
    Matrix w_o_abs; // D x h_q*r_kv;   head i block = W_o[:, i] W_uv[j(i)]
    Matrix w_dq;
    Matrix w_qr;
    Matrix w_dkv;
    Matrix w_kr;

    void validate(const GqlaConfig& config) const;
    bool operator==(const AbsorbedWeights&) const = default;
};

struct GqlaModel {
    GqlaConfig config;
    GqlaWeights weights;
    std::optional<AbsorbedWeights> absorbed;

    bool operator==(const GqlaModel&) const = default;
};

// Per-token cache of the MQA-absorb path: latent plus the shared rotary key.
struct LatentCache {
    Matrix c_kv; // tokens x r_kv
    Matrix k_r;  // tokens x d_h_r, post-RoPE

    std::size_t tokens() const { return c_kv.rows(); }
    std::size_t elements_per_token() const { return c_kv.cols() + k_r.cols(); }
};

// Per-token cache of the GQA path: per-group expanded keys and values.
struct ExpandedCache {
    Matrix k_c; // tokens x g*d_h
    Matrix v;   // tokens x g*d_h_v
    Matrix k_r; // tokens x d_h_r, post-RoPE

    std::size_t tokens() const { return k_c.rows(); }
    std::size_t elements_per_token() const { return k_c.cols() + v.cols() + k_r.cols(); }
};

struct TokenProjection {
    Matrix q_c;  // h_q x d_h
    Matrix q_r;  // h_q x d_h_r, post-RoPE
    Vector c_kv; // r_kv
    Vector k_r;  // d_h_r, post-RoPE, shared by all heads
};

struct GqaPathResult {
    Matrix outputs; // s_q x D
    ExpandedCache cache;
};

struct AbsorbPathResult {
    Matrix outputs; // s_q x D
    LatentCache cache;
};

struct CompressedCache {
    LatentCache latent;
    // max over tokens of ||A c - [k_c; v]|| / ||[k_c; v]||.
    double max_relative_residual = 0.0;
};

struct GqaDecodeStep {
    Vector output;
    ExpandedCache cache;
};

struct AbsorbDecodeStep {
    Vector output;
    LatentCache cache;
};

// Entries i.i.d. uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per matrix.
GqlaWeights init_random(const GqlaConfig& config, std::uint64_t seed);

TokenProjection project_token(const GqlaWeights& w, const GqlaConfig& config, std::span<const double> x,
                              std::size_t position);

// Attention of one projected query over the selected cache rows, combined through W^O.
Vector attend_expanded(const GqlaWeights& w, const GqlaConfig& config, const ExpandedCache& cache,
                       const TokenProjection& query, std::span<const std::size_t> positions, double scale);
Vector attend_latent(const GqlaWeights& w, const GqlaConfig& config, const LatentCache& cache,
                     const TokenProjection& query, std::span<const std::size_t> positions, double scale);

// tokens is L x D (position t = row t); outputs cover the trailing s_q positions.
GqaPathResult forward_gqa_path(const GqlaWeights& w, const GqlaConfig& config, const Matrix& tokens,
                               std::size_t s_q);
AbsorbPathResult forward_absorb_path(const GqlaWeights& w, const GqlaConfig& config, const Matrix& tokens,
                                     std::size_t s_q);

AbsorbedWeights absorb(const GqlaWeights& w, const GqlaConfig& config);
AbsorbPathResult forward_absorbed(const AbsorbedWeights& a, const GqlaConfig& config, const Matrix& tokens,
                                  std::size_t s_q);

ExpandedCache cache_expand(const LatentCache& cache, const GqlaWeights& w, const GqlaConfig& config);
// Least-squares recovery of the latent from [k_c; v]; throws OutOfSubspaceError
// when any entry's relative residual exceeds 1e-6.
CompressedCache cache_compress(const ExpandedCache& cache, const GqlaWeights& w, const GqlaConfig& config);

// Appends token x at position cache.tokens() and attends over the whole prefix.
GqaDecodeStep decode_gqa(const GqlaWeights& w, const GqlaConfig& config, ExpandedCache cache,
                      std::span<const double> x);
AbsorbDecodeStep decode_absorb(const GqlaWeights& w, const GqlaConfig& config, LatentCache cache,
                         std::span<const double> x);

// Brute-force reference: replicates the up-projections to all h_q heads,
// materialises every per-head key and value, and evaluates causal attention
// with explicit loops. Shares no code with the two decoding paths.
Matrix oracle_mha(const GqlaWeights& w, const GqlaConfig& config, const Matrix& tokens, std::size_t s_q);

} // namespace gqla
