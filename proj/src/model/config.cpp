#include <cmath>
#include <random>
#include <string>

#include "gqla/error.hpp"
#include "gqla/model.hpp"

namespace gqla {

namespace {

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(std::string(name) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    if (!all_finite(m)) throw ParameterError(std::string(name) + ": non-finite entry");
}

} // namespace

GqlaConfig GqlaConfig::canonical() {
    GqlaConfig c;
    c.d_model = 7168;
    c.h_q = 128;
    c.g = 8;
    c.d_h = 128;
    c.d_h_v = 128;
    c.d_h_r = 64;
    c.r_kv = 512;
    c.r_q = default_query_rank(c.r_kv);
    return c;
}

GqlaConfig GqlaConfig::desk() {
    GqlaConfig c;
    c.d_model = 64;
    c.h_q = 8;
    c.g = 2;
    c.d_h = 16;
    c.d_h_v = 16;
    c.d_h_r = 8;
    c.r_kv = 32;
    c.r_q = 48;
    return c;
}

RopeSpec GqlaConfig::rope() const {
    if (rope_inv_freq.empty()) return RopeSpec::standard(d_h_r, rope_base);
    return RopeSpec::with_frequencies(rope_inv_freq, rope_base);
}

double GqlaConfig::softmax_scale() const { return 1.0 / std::sqrt(static_cast<double>(d_h + d_h_r)); }

void GqlaConfig::validate() const {
    if (d_model == 0 || h_q == 0 || g == 0 || d_h == 0 || d_h_v == 0 || d_h_r == 0 || r_kv == 0 || r_q == 0)
        throw ParameterError("GqlaConfig: all dimensions must be >= 1");
    if (h_q % g != 0) {
        throw ParameterError("GqlaConfig: h_q (" + std::to_string(h_q) + ") is not divisible by g (" +
                             std::to_string(g) + ")");
    }
    if (d_h_r % 2 != 0) throw ParameterError("GqlaConfig: d_h_r must be even");
    if (!rope_inv_freq.empty() && rope_inv_freq.size() != d_h_r / 2)
        throw ParameterError("GqlaConfig: rope frequency table must have d_h_r/2 entries");
    rope().validate();
}

void GqlaWeights::validate(const GqlaConfig& c) const {
    c.validate();
    expect_shape(w_dq, c.r_q, c.d_model, "w_dq");
    expect_shape(w_uq, c.h_q * c.d_h, c.r_q, "w_uq");
    expect_shape(w_qr, c.h_q * c.d_h_r, c.r_q, "w_qr");
    expect_shape(w_dkv, c.r_kv, c.d_model, "w_dkv");
    expect_shape(w_uk, c.g * c.d_h, c.r_kv, "w_uk");
    expect_shape(w_uv, c.g * c.d_h_v, c.r_kv, "w_uv");
    expect_shape(w_kr, c.d_h_r, c.d_model, "w_kr");
    expect_shape(w_o, c.d_model, c.h_q * c.d_h_v, "w_o");
}

void AbsorbedWeights::validate(const GqlaConfig& c) const {
    c.validate();
    expect_shape(w_q_abs, c.h_q * c.r_kv, c.r_q, "w_q_abs");
    expect_shape(w_o_abs, c.d_model, c.h_q * c.r_kv, "w_o_abs");
    expect_shape(w_dq, c.r_q, c.d_model, "w_dq");
    expect_shape(w_qr, c.h_q * c.d_h_r, c.r_q, "w_qr");
    expect_shape(w_dkv, c.r_kv, c.d_model, "w_dkv");
    expect_shape(w_kr, c.d_h_r, c.d_model, "w_kr");
}

GqlaWeights init_random(const GqlaConfig& c, std::uint64_t seed) {
    c.validate();
    std::mt19937_64 rng(seed);
    auto init = [&](std::size_t rows, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        return random_uniform(rows, fan_in, -bound, bound, rng);
    };
    GqlaWeights w;
    w.w_dq = init(c.r_q, c.d_model);
    w.w_uq = init(c.h_q * c.d_h, c.r_q);
    w.w_qr = init(c.h_q * c.d_h_r, c.r_q);
    w.w_dkv = init(c.r_kv, c.d_model);
    w.w_uk = init(c.g * c.d_h, c.r_kv);
    w.w_uv = init(c.g * c.d_h_v, c.r_kv);
    w.w_kr = init(c.d_h_r, c.d_model);
    w.w_o = init(c.d_model, c.h_q * c.d_h_v);
    return w;
}

} // namespace gqla
