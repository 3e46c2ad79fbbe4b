#include "gqla/roofline.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gqla/error.hpp"

namespace gqla {

namespace {

constexpr double kTieTolerance = 1e-9;

void check_point(const GqlaConfig& c, AttentionPath path, std::size_t g, std::size_t s_q) {
    if (s_q == 0) throw ParameterError("roofline: s_q must be >= 1");
    if (c.h_q == 0 || c.d_h == 0 || c.r_kv == 0) throw ParameterError("roofline: config has zero dimensions");
    if (path == AttentionPath::gqa && (g == 0 || c.h_q % g != 0))
        throw ParameterError(fmt::format("roofline: g = {} must divide h_q = {}", g, c.h_q));
}

std::size_t value_dim(const GqlaConfig& c) { return c.d_h_v == 0 ? c.d_h : c.d_h_v; }

} // namespace

void HardwareSpec::validate() const {
    if (!(flops_peak > 0.0) || !(bandwidth > 0.0) || !std::isfinite(flops_peak) || !std::isfinite(bandwidth))
        throw ParameterError("HardwareSpec " + name + ": peak FLOP/s and bandwidth must be positive");
}

const char* path_name(AttentionPath p) { return p == AttentionPath::mqa_absorb ? "MQA-absorb" : "GQA"; }

double ridge(const HardwareSpec& hw) {
    hw.validate();
    return hw.flops_peak / hw.bandwidth;
}

double bytes_per_token(const GqlaConfig& c, AttentionPath path, std::size_t g, double element_bytes) {
    if (path == AttentionPath::mqa_absorb) return element_bytes * double(c.r_kv + c.d_h_r);
    return element_bytes * double(g * (c.d_h + value_dim(c)) + c.d_h_r);
}

double flops_per_step(const GqlaConfig& c, AttentionPath path, std::size_t s_q, std::size_t context) {
    const double per = path == AttentionPath::mqa_absorb ? double(2 * c.r_kv + c.d_h_r)
                                                         : double(c.d_h + value_dim(c) + c.d_h_r);
    return 2.0 * double(context) * double(c.h_q) * double(s_q) * per;
}

double intensity(const GqlaConfig& c, AttentionPath path, std::size_t g, std::size_t s_q, double element_bytes) {
    check_point(c, path, g, s_q);
    return flops_per_step(c, path, s_q, 1) / bytes_per_token(c, path, g, element_bytes);
}

OperatingPoint step_time(const HardwareSpec& hw, const GqlaConfig& c, AttentionPath path, std::size_t g,
                         std::size_t s_q, std::size_t context, double element_bytes) {
    hw.validate();
    check_point(c, path, g, s_q);
    if (context == 0) throw ParameterError("roofline: context length must be >= 1");
    OperatingPoint p;
    p.gpu = hw.name;
    p.path = path;
    p.g = path == AttentionPath::mqa_absorb ? 1 : g;
    p.s_q = s_q;
    p.cache_bytes_per_token = bytes_per_token(c, path, g, element_bytes);
    p.bytes = double(context) * p.cache_bytes_per_token;
    p.flops = flops_per_step(c, path, s_q, context);
    p.intensity = p.flops / p.bytes;
    p.mem_time = p.bytes / hw.bandwidth;
    p.cmp_time = p.flops / hw.flops_peak;
    p.step_time = std::max(p.mem_time, p.cmp_time);
    p.throughput = double(s_q) / p.step_time;
    return p;
}

std::vector<TableRow> default_table_rows() {
    using P = AttentionPath;
    return {
        {"H100", P::mqa_absorb, 1, 1}, {"H100", P::mqa_absorb, 1, 2}, {"H20", P::mqa_absorb, 1, 1},
        {"H20", P::mqa_absorb, 1, 2},  {"H20", P::gqa, 8, 1},         {"H20", P::gqa, 8, 2},
        {"H20", P::gqa, 4, 1},         {"H20", P::gqa, 4, 2},
    };
}

std::vector<OperatingPoint> operating_table(const std::vector<HardwareSpec>& hardware, const GqlaConfig& c,
                                            const std::vector<TableRow>& rows, std::size_t context) {
    std::vector<OperatingPoint> out;
    for (const TableRow& row : rows) {
        for (const HardwareSpec& hw : hardware)
            if (hw.name == row.gpu) out.push_back(step_time(hw, c, row.path, row.g, row.s_q, context));
    }
    return out;
}

std::vector<OperatingPoint> sweep(const std::vector<HardwareSpec>& hardware, const GqlaConfig& c, bool allow_mtp,
                                  std::size_t max_g, std::size_t context) {
    const std::size_t max_sq = allow_mtp ? 2 : 1;
    std::vector<OperatingPoint> out;
    for (const HardwareSpec& hw : hardware) {
        for (std::size_t s = 1; s <= max_sq; ++s) out.push_back(step_time(hw, c, AttentionPath::mqa_absorb, 1, s, context));
        for (std::size_t g = 1; g <= std::min(max_g, c.h_q); ++g) {
            if (c.h_q % g != 0 || g * c.d_h < c.r_kv) continue;
            for (std::size_t s = 1; s <= max_sq; ++s) out.push_back(step_time(hw, c, AttentionPath::gqa, g, s, context));
        }
    }
    return out;
}

Recommendation recommend(const HardwareSpec& hw, const GqlaConfig& c, bool allow_mtp, std::size_t max_g,
                         std::size_t context) {
    Recommendation r;
    r.candidates = sweep({hw}, c, allow_mtp, max_g, context);
    const double ridge_point = ridge(hw);

    auto per_token = [](const OperatingPoint& p) { return p.step_time / double(p.s_q); };
    auto better = [&](const OperatingPoint& a, const OperatingPoint& b) {
        const double ta = per_token(a), tb = per_token(b);
        if (std::abs(ta - tb) > kTieTolerance * std::max(ta, tb)) return ta < tb;
        const bool a_under = a.intensity <= ridge_point, b_under = b.intensity <= ridge_point;
        if (a_under != b_under) return a_under;
        if (a_under && a.intensity != b.intensity) return a.intensity > b.intensity;
        if (a.g != b.g) return a.g > b.g;
        return a.s_q < b.s_q;
    };
    r.point = r.candidates.front();
    for (const OperatingPoint& p : r.candidates)
        if (better(p, r.point)) r.point = p;

    if (r.point.path == AttentionPath::gqa)
        r.notes.push_back(fmt::format("GQA path shards the {} KV groups: tensor parallelism capped at {}-way", r.point.g,
                                      r.point.g));
    const bool has_g4_mtp = std::any_of(r.candidates.begin(), r.candidates.end(), [](const OperatingPoint& p) {
        return p.path == AttentionPath::gqa && p.g == 4 && p.s_q == 2;
    });
    if (has_g4_mtp && c.r_kv > 256)
        r.notes.push_back(fmt::format("g = 4 with s_q = 2 would require r_kv <= 256 (r_kv = {}); not enforced", c.r_kv));
    r.notes.push_back("throughput is per attention layer per sequence");
    return r;
}

} // namespace gqla
