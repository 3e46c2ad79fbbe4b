#include <algorithm>
#include <string>

#include "gqla/error.hpp"
#include "gqla/model.hpp"
#include "gqla/numerics.hpp"

namespace gqla {

namespace {

constexpr double kOutOfSubspaceTol = 1e-6;

} // namespace

ExpandedCache cache_expand(const LatentCache& cache, const GqlaWeights& w, const GqlaConfig& c) {
    if (cache.tokens() > 0 && cache.c_kv.cols() != c.r_kv) throw ShapeError("cache_expand: latent width != r_kv");
    ExpandedCache out;
    if (cache.tokens() == 0) return out;
    out.k_c = matmul(cache.c_kv, w.w_uk.transposed());
    out.v = matmul(cache.c_kv, w.w_uv.transposed());
    out.k_r = cache.k_r;
    return out;
}

CompressedCache cache_compress(const ExpandedCache& cache, const GqlaWeights& w, const GqlaConfig& c) {
    CompressedCache out;
    if (cache.tokens() == 0) return out;
    if (cache.k_c.cols() != c.g * c.d_h || cache.v.cols() != c.g * c.d_h_v)
        throw ShapeError("cache_compress: expanded cache widths do not match the config");
    if (c.r_kv > c.g * (c.d_h + c.d_h_v)) {
        throw ParameterError("cache_compress: r_kv exceeds g*(d_h + d_h_v); the latent is not recoverable");
    }

    const Matrix stacked = vstack(w.w_uk, w.w_uv);
    const LeastSquaresSolver solver(stacked);
    out.latent.c_kv = Matrix(cache.tokens(), c.r_kv);
    out.latent.k_r = cache.k_r;

    Vector entry(stacked.rows());
    for (std::size_t t = 0; t < cache.tokens(); ++t) {
        auto k = cache.k_c.row(t);
        auto v = cache.v.row(t);
        std::copy(k.begin(), k.end(), entry.begin());
        std::copy(v.begin(), v.end(), entry.begin() + static_cast<std::ptrdiff_t>(k.size()));

        const Vector latent = solver.solve(entry);
        const Vector recon = matvec(stacked, latent);
        Vector diff(entry.size());
        for (std::size_t i = 0; i < entry.size(); ++i) diff[i] = recon[i] - entry[i];
        const double scale = norm(entry);
        const double rel = scale > 0.0 ? norm(diff) / scale : 0.0;
        if (rel > kOutOfSubspaceTol) {
            throw OutOfSubspaceError("cache_compress: token " + std::to_string(t) + " has relative residual " +
                                     std::to_string(rel) + "; cache was not produced by these weights");
        }
        out.max_relative_residual = std::max(out.max_relative_residual, rel);
        std::copy(latent.begin(), latent.end(), out.latent.c_kv.row(t).begin());
    }
    return out;
}

} // namespace gqla
