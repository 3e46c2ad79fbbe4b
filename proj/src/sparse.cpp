#include "gqla/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "gqla/error.hpp"

namespace gqla {

std::vector<std::size_t> topk_select(std::span<const double> scores, std::size_t k) {
    if (scores.empty()) throw ParameterError("topk_select: empty score vector");
    if (k == 0) throw ParameterError("topk_select: k must be >= 1");
    for (double s : scores)
        if (std::isnan(s)) throw ParameterError("topk_select: NaN score");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t keep = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    return idx;
}

Vector indexer_scores(const TokenProjection& query, const Matrix& k_r, std::size_t prefix) {
    if (prefix == 0 || prefix > k_r.rows()) throw ParameterError("indexer_scores: prefix outside the cache");
    if (query.q_r.cols() != k_r.cols()) throw ShapeError("indexer_scores: rotary widths differ");
    const std::size_t heads = query.q_r.rows();
    Vector out(prefix, 0.0);
    for (std::size_t s = 0; s < prefix; ++s) {
        for (std::size_t i = 0; i < heads; ++i) out[s] += dot(query.q_r.row(i), k_r.row(s));
        out[s] /= double(heads);
    }
    return out;
}

double sparse_scale(const GqlaConfig& c, SparseScale scale) {
    return scale == SparseScale::head_dim ? 1.0 / std::sqrt(double(c.d_h)) : c.softmax_scale();
}

namespace {

void check_selection(std::span<const std::size_t> selected, std::size_t position, std::size_t cached) {
    if (selected.empty()) throw ParameterError("sparse_attention: empty selection");
    if (position >= cached) throw ParameterError("sparse_attention: query position is not cached");
    for (std::size_t s : selected)
        if (s > position) throw ParameterError(fmt::format("sparse_attention: position {} is in the future", s));
}

} // namespace

Vector sparse_attention(const GqlaWeights& w, const GqlaConfig& c, const ExpandedCache& cache,
                        std::span<const double> x, std::size_t position, std::span<const std::size_t> selected,
                        SparseScale scale) {
    check_selection(selected, position, cache.tokens());
    const TokenProjection q = project_token(w, c, x, position);
    return attend_expanded(w, c, cache, q, selected, sparse_scale(c, scale));
}

Vector sparse_attention(const GqlaWeights& w, const GqlaConfig& c, const LatentCache& cache,
                        std::span<const double> x, std::size_t position, std::span<const std::size_t> selected,
                        SparseScale scale) {
    check_selection(selected, position, cache.tokens());
    const TokenProjection q = project_token(w, c, x, position);
    return attend_latent(w, c, cache, q, selected, sparse_scale(c, scale));
}

Vector masked_dense_attention(const GqlaWeights& w, const GqlaConfig& c, const ExpandedCache& cache,
                              std::span<const double> x, std::size_t position, std::span<const std::size_t> selected,
                              SparseScale scale) {
    check_selection(selected, position, cache.tokens());
    constexpr double kMask = -1e9;
    const TokenProjection q = project_token(w, c, x, position);
    const double sc = sparse_scale(c, scale);
    const std::size_t hpg = c.h_q / c.g;

    std::vector<bool> keep(position + 1, false);
    for (std::size_t s : selected) keep[s] = true;

    Vector heads(c.h_q * c.d_h_v, 0.0);
    Vector logits(position + 1);
    for (std::size_t i = 0; i < c.h_q; ++i) {
        const std::size_t j = i / hpg;
        for (std::size_t s = 0; s <= position; ++s) {
            double acc = 0.0;
            for (std::size_t a = 0; a < c.d_h; ++a) acc += q.q_c(i, a) * cache.k_c(s, j * c.d_h + a);
            for (std::size_t a = 0; a < c.d_h_r; ++a) acc += q.q_r(i, a) * cache.k_r(s, a);
            logits[s] = sc * acc + (keep[s] ? 0.0 : kMask);
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t s = 0; s <= position; ++s)
            for (std::size_t a = 0; a < c.d_h_v; ++a) heads[i * c.d_h_v + a] += logits[s] / z * cache.v(s, j * c.d_h_v + a);
    }
    return matvec(w.w_o, heads);
}

TileReport tile_feasibility(const GqlaConfig& c) {
    if (c.g == 0 || c.h_q % c.g != 0) throw ParameterError("tile_feasibility: g must divide h_q");
    TileReport r;
    r.heads_per_group = c.h_q / c.g;
    r.gqa_path_feasible = r.heads_per_group >= kMmaTileM;
    if (r.heads_per_group == 1) {
        r.rationale = fmt::format("h_q/g = 1: one query head per KV head, the score GEMM degenerates to a GEMV "
                                  "and cannot fill an m = {} MMA tile",
                                  kMmaTileM);
    } else if (r.gqa_path_feasible) {
        r.rationale = fmt::format("h_q/g = {} query heads share each KV group and fill the m = {} MMA tile",
                                  r.heads_per_group, kMmaTileM);
    } else {
        r.rationale = fmt::format("h_q/g = {} < {}: the shared-KV head block underfills the MMA tile",
                                  r.heads_per_group, kMmaTileM);
    }
    return r;
}

} // namespace gqla
