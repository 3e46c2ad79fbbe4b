#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gqla/matrix.hpp"

namespace gqla {

// Rotary position embedding over adjacent pairs (2k, 2k+1).
//
// Pair k rotates by angle t * inv_freq[k]. The standard table is
// inv_freq[k] = base^(-2k/dim); converted checkpoints carry an explicit table
// because their retained rotary pairs come from arbitrary source frequencies.
struct RopeSpec {
    std::size_t dim = 0;
    double base = 10000.0;
    std::vector<double> inv_freq; // dim / 2 entries

    static RopeSpec standard(std::size_t dim, double base = 10000.0);
    static RopeSpec with_frequencies(std::vector<double> inv_freq, double base = 10000.0);

    std::size_t pairs() const { return dim / 2; }
    void validate() const;
    bool operator==(const RopeSpec&) const = default;
};

Vector apply_rope(const RopeSpec& spec, std::span<const double> v, double position);
void apply_rope_inplace(const RopeSpec& spec, std::span<double> v, double position);

// Applies apply_rope independently to each consecutive spec.dim-sized block.
Vector apply_folded_rope(const RopeSpec& spec, std::span<const double> v, double position);

// A spec over blocks * spec.dim coordinates equivalent to apply_folded_rope.
RopeSpec fold(const RopeSpec& spec, std::size_t blocks);

// Same-angle rotation matrix of one RoPE pair: [[c, -s], [s, c]] embedded at (2k, 2k+1).
Matrix rope_matrix(const RopeSpec& spec, double position);

} // namespace gqla
