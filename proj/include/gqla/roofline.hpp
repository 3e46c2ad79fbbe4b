#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gqla/model.hpp"

namespace gqla {

struct HardwareSpec {
    std::string name;
    double flops_peak = 0.0; // FLOP/s, BF16 dense
    double bandwidth = 0.0;  // bytes/s, HBM

    static HardwareSpec h100() { return {"H100", 989e12, 3.35e12}; }
    static HardwareSpec h20() { return {"H20", 148e12, 4.0e12}; }

    void validate() const;
};

enum class AttentionPath { mqa_absorb, gqa };

const char* path_name(AttentionPath p);

inline constexpr double kBf16Bytes = 2.0;
inline constexpr std::size_t kDefaultContext = 8192;

// Decode-attention cost model: counts only KV-cache reads and the score/value
// FLOPs of one attention layer for one sequence.
struct OperatingPoint {
    std::string gpu;
    AttentionPath path = AttentionPath::mqa_absorb;
    std::size_t g = 1;
    std::size_t s_q = 1;
    double cache_bytes_per_token = 0.0;
    double intensity = 0.0; // FLOPs / byte
    double flops = 0.0;     // per step
    double bytes = 0.0;     // per step
    double mem_time = 0.0;  // seconds
    double cmp_time = 0.0;
    double step_time = 0.0;  // max(mem_time, cmp_time)
    double throughput = 0.0; // s_q / step_time, tokens/s per layer per sequence
};

double ridge(const HardwareSpec& hw);

// For the GQA path `g` replaces config.g; the MQA-absorb path ignores it.
double bytes_per_token(const GqlaConfig& config, AttentionPath path, std::size_t g,
                       double element_bytes = kBf16Bytes);
double flops_per_step(const GqlaConfig& config, AttentionPath path, std::size_t s_q, std::size_t context);
double intensity(const GqlaConfig& config, AttentionPath path, std::size_t g, std::size_t s_q,
                 double element_bytes = kBf16Bytes);

OperatingPoint step_time(const HardwareSpec& hw, const GqlaConfig& config, AttentionPath path, std::size_t g,
                         std::size_t s_q, std::size_t context = kDefaultContext, double element_bytes = kBf16Bytes);

struct TableRow {
    std::string gpu;
    AttentionPath path;
    std::size_t g;
    std::size_t s_q;
};

// Two H100 MQA-absorb rows (s_q = 1, 2) followed by six H20 rows.
std::vector<TableRow> default_table_rows();

// Rows whose gpu matches none of `hardware` are skipped.
std::vector<OperatingPoint> operating_table(const std::vector<HardwareSpec>& hardware, const GqlaConfig& config,
                                            const std::vector<TableRow>& rows,
                                            std::size_t context = kDefaultContext);

// Every (path, g, s_q) the planner considers, for each given GPU.
std::vector<OperatingPoint> sweep(const std::vector<HardwareSpec>& hardware, const GqlaConfig& config,
                                  bool allow_mtp, std::size_t max_g, std::size_t context = kDefaultContext);

struct Recommendation {
    OperatingPoint point;
    std::vector<OperatingPoint> candidates;
    std::vector<std::string> notes;
};

// Minimises per-token step time over MQA-absorb and every GQA split with
// g | h_q, r_kv <= g*d_h and g <= max_g, at s_q = 1 (or s_q in {1, 2} with
// MTP). Ties (relative 1e-9) prefer intensity at or below the ridge and
// closest to it, then larger g, then smaller s_q.
Recommendation recommend(const HardwareSpec& hw, const GqlaConfig& config, bool allow_mtp, std::size_t max_g,
                         std::size_t context = kDefaultContext);

} // namespace gqla
