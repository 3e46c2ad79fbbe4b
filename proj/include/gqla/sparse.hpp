#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gqla/model.hpp"

namespace gqla {

// Positions of the k largest scores (all of them when k >= size), ties toward
// the smaller position, returned in ascending order.
std::vector<std::size_t> topk_select(std::span<const double> scores, std::size_t k);

// Stub indexer: I_s = mean over heads of <q_r[i], k_r[s]> for s < prefix.
Vector indexer_scores(const TokenProjection& query, const Matrix& k_r, std::size_t prefix);

enum class SparseScale {
    head_dim, // 1/sqrt(d_h), as in the sparse per-head equation
    dense,    // 1/sqrt(d_h + d_h_r), the dense paths' convention
};

double sparse_scale(const GqlaConfig& config, SparseScale scale);

// Token x at `position` attends over the cached rows in `selected` only.
Vector sparse_attention(const GqlaWeights& w, const GqlaConfig& config, const ExpandedCache& cache,
                        std::span<const double> x, std::size_t position, std::span<const std::size_t> selected,
                        SparseScale scale = SparseScale::head_dim);

// Same contract over the latent cache (MQA-absorb kernel).
Vector sparse_attention(const GqlaWeights& w, const GqlaConfig& config, const LatentCache& cache,
                        std::span<const double> x, std::size_t position, std::span<const std::size_t> selected,
                        SparseScale scale = SparseScale::head_dim);

// Reference for sparse_attention: dense softmax over every cached position up
// to `position`, with -1e9 added to the logits of unselected positions.
Vector masked_dense_attention(const GqlaWeights& w, const GqlaConfig& config, const ExpandedCache& cache,
                              std::span<const double> x, std::size_t position, std::span<const std::size_t> selected,
                              SparseScale scale = SparseScale::head_dim);

inline constexpr std::size_t kMmaTileM = 16;

struct TileReport {
    std::size_t heads_per_group = 0;
    std::size_t tile_m = kMmaTileM;
    bool gqa_path_feasible = false;
    std::string rationale;
};

// The GQA-path sparse kernel stacks the h_q/g heads sharing a KV group into
// the M dimension of one MMA, so it needs h_q/g >= 16.
TileReport tile_feasibility(const GqlaConfig& config);

} // namespace gqla
