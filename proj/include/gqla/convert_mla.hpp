#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gqla/matrix.hpp"
#include "gqla/model.hpp"
#include "gqla/numerics.hpp"

namespace gqla {

// MLA block: GqlaWeights layout with head-indexed up-projections. Its config is
// a GqlaConfig with g == h_q, and it runs through the model paths unchanged.
struct MlaWeights {
    Matrix w_dq;
    Matrix w_uq;
    Matrix w_qr;
    Matrix w_dkv;
    Matrix w_uk; // h_q*d_h x r_kv
    Matrix w_uv; // h_q*d_h_v x r_kv
    Matrix w_kr;
    Matrix w_o;

    void validate(const GqlaConfig& mla_config) const;
    bool operator==(const MlaWeights&) const = default;
};

GqlaWeights as_gqla(const MlaWeights& w);
MlaWeights as_mla(const GqlaWeights& w);

// Throws ParameterError unless g == h_q.
void require_mla_config(const GqlaConfig& c);

MlaWeights init_random_mla(const GqlaConfig& mla_config, std::uint64_t seed);

// Default synthetic calibration stream: batches x batch_tokens rows of N(0, 1).
Matrix synthetic_calibration(std::size_t d_model, std::uint64_t seed, std::size_t batches = 32,
                             std::size_t batch_tokens = 64);

// Contiguous head blocks: group j owns heads [j*h_q/g, (j+1)*h_q/g).
struct MlaCalibration {
    std::size_t g = 0;
    std::vector<CovarianceAccumulator> k; // per group, dim (h_q/g)*d_h
    std::vector<CovarianceAccumulator> v; // per group, dim (h_q/g)*d_h_v
};

// Second moments of W_j^K c_kv and W_j^V c_kv over the calibration tokens.
MlaCalibration calibrate(const MlaWeights& src, const GqlaConfig& mla_config, const Matrix& calib, std::size_t g);

struct GroupFactorization {
    std::size_t g = 0;
    std::size_t r_k = 0;
    std::size_t r_v = 0;
    std::vector<LowRankFactors> k; // per group: u (h_q/g)*d_h x r_k, v r_k x r_kv
    std::vector<LowRankFactors> v;
    std::vector<CovarianceAccumulator> sigma_k;
    std::vector<CovarianceAccumulator> sigma_v;
};

GroupFactorization factor(const MlaWeights& src, const GqlaConfig& mla_config, const MlaCalibration& stats,
                          std::size_t r_k, std::size_t r_v);

// Head-indexed weights with W_i^K replaced by u_{j,i} v_j (and likewise V).
// Latent and rotary paths are untouched, so the latent cache is identical.
MlaWeights unfused_weights(const MlaWeights& src, const GqlaConfig& mla_config, const GroupFactorization& f);

// Folds the square blocks u_{j,i} into W^UQ_i and W^O_i; requires r_k = d_h and
// r_v = d_h_v. Returns the GQLA config (g groups) alongside the weights.
GqlaModel absorb_factors(const MlaWeights& src, const GqlaConfig& mla_config, const GroupFactorization& f);

struct MlaConvertOptions {
    std::size_t probe_sequences = 4;
    std::size_t probe_length = 16;
    std::uint64_t probe_seed = 0;
};

struct MlaConversionReport {
    Vector k_energy_retained; // per group
    Vector v_energy_retained;
    double output_deviation = 0.0; // converted vs source, max abs relative to max |source|
    double absorb_gap = 0.0;       // absorbed vs unfused forward, max abs
    double dual_path_deviation = 0.0;
};

struct MlaConversion {
    GqlaModel model;
    MlaConversionReport report;
};

MlaConversion convert_mla(const MlaWeights& src, const GqlaConfig& mla_config, const Matrix& calib, std::size_t g,
                          const MlaConvertOptions& options = {});

} // namespace gqla
