#include "gqla/rope.hpp"

#include <cmath>
#include <string>

#include "gqla/error.hpp"

namespace gqla {

RopeSpec RopeSpec::standard(std::size_t dim, double base) {
    if (dim % 2 != 0) throw ShapeError("RopeSpec: dim must be even, got " + std::to_string(dim));
    RopeSpec s;
    s.dim = dim;
    s.base = base;
    s.inv_freq.resize(dim / 2);
    for (std::size_t k = 0; k < dim / 2; ++k)
        s.inv_freq[k] = std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    return s;
}

RopeSpec RopeSpec::with_frequencies(std::vector<double> inv_freq, double base) {
    RopeSpec s;
    s.dim = 2 * inv_freq.size();
    s.base = base;
    s.inv_freq = std::move(inv_freq);
    return s;
}

void RopeSpec::validate() const {
    if (dim % 2 != 0) throw ShapeError("RopeSpec: dim must be even, got " + std::to_string(dim));
    if (inv_freq.size() != dim / 2) throw ShapeError("RopeSpec: frequency table does not match dim");
    if (!(base > 1.0)) throw ParameterError("RopeSpec: base must exceed 1");
    for (double f : inv_freq)
        if (!std::isfinite(f)) throw ParameterError("RopeSpec: non-finite frequency");
}

void apply_rope_inplace(const RopeSpec& spec, std::span<double> v, double position) {
    if (v.size() % 2 != 0) throw ShapeError("apply_rope: odd-length input");
    if (v.size() != spec.dim) {
        throw ShapeError("apply_rope: length " + std::to_string(v.size()) + " != rope dim " +
                         std::to_string(spec.dim));
    }
    for (std::size_t k = 0; k < spec.pairs(); ++k) {
        const double angle = position * spec.inv_freq[k];
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double x = v[2 * k];
        const double y = v[2 * k + 1];
        v[2 * k] = c * x - s * y;
        v[2 * k + 1] = s * x + c * y;
    }
}

Vector apply_rope(const RopeSpec& spec, std::span<const double> v, double position) {
    Vector out(v.begin(), v.end());
    apply_rope_inplace(spec, out, position);
    return out;
}

Vector apply_folded_rope(const RopeSpec& spec, std::span<const double> v, double position) {
    if (spec.dim == 0 || v.size() % spec.dim != 0) {
        throw ShapeError("apply_folded_rope: length " + std::to_string(v.size()) + " not divisible by " +
                         std::to_string(spec.dim));
    }
    Vector out(v.begin(), v.end());
    for (std::size_t b = 0; b < v.size() / spec.dim; ++b)
        apply_rope_inplace(spec, std::span<double>(out).subspan(b * spec.dim, spec.dim), position);
    return out;
}

RopeSpec fold(const RopeSpec& spec, std::size_t blocks) {
    RopeSpec out;
    out.dim = spec.dim * blocks;
    out.base = spec.base;
    out.inv_freq.reserve(spec.pairs() * blocks);
    for (std::size_t b = 0; b < blocks; ++b) out.inv_freq.insert(out.inv_freq.end(), spec.inv_freq.begin(), spec.inv_freq.end());
    return out;
}

Matrix rope_matrix(const RopeSpec& spec, double position) {
    Matrix r(spec.dim, spec.dim);
    for (std::size_t k = 0; k < spec.pairs(); ++k) {
        const double angle = position * spec.inv_freq[k];
        r(2 * k, 2 * k) = std::cos(angle);
        r(2 * k, 2 * k + 1) = -std::sin(angle);
        r(2 * k + 1, 2 * k) = std::sin(angle);
        r(2 * k + 1, 2 * k + 1) = std::cos(angle);
    }
    return r;
}

} // namespace gqla
