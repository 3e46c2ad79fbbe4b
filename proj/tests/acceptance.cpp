// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <cmath>
#include <exception>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gqla/convert_gqa.hpp"
#include "gqla/convert_mla.hpp"
#include "gqla/model.hpp"
#include "gqla/numerics.hpp"
#include "gqla/roofline.hpp"
#include "gqla/sparse.hpp"
#include "operating_points.hpp"
#include "support.hpp"

using namespace gqla;
using namespace gqla::testing;

namespace {

// Accumulates the failures of one criterion and the worst observed margin.
struct Check {
    std::vector<std::string> failures;
    std::string detail;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

bool within(double a, double b, double tol) { return std::abs(a - b) <= tol; }

void ridges(Check& c) {
    const double h100 = ridge(HardwareSpec::h100()), h20 = ridge(HardwareSpec::h20());
    c.expect(within(h100, 295.2, 0.1), fmt::format("H100 ridge {}", h100));
    c.expect(h20 == 37.0, fmt::format("H20 ridge {}", h20));
    c.detail = fmt::format("H100 {:.2f}, H20 {:.2f} FLOP/B", h100, h20);
}

void operating_points(Check& c) {
    const auto pts = operating_table({HardwareSpec::h100(), HardwareSpec::h20()}, GqlaConfig::canonical(),
                                     default_table_rows(), 8192);
    c.expect(pts.size() == kReferenceTable.size(), fmt::format("{} rows", pts.size()));
    double worst_time = 0.0, worst_tp = 0.0;
    for (std::size_t i = 0; i < std::min(pts.size(), kReferenceTable.size()); ++i) {
        const OperatingPoint& p = pts[i];
        const ReferenceRow& want = kReferenceTable[i];
        const double mem = p.mem_time * 1e6, cmp = p.cmp_time * 1e6, tp = p.throughput / 1e3;
        c.expect(within(p.intensity, want.intensity, kIntensityTol), fmt::format("row {} intensity {}", i, p.intensity));
        c.expect(within(mem, want.mem_us, kTimeTolUs), fmt::format("row {} mem {} us", i, mem));
        c.expect(within(cmp, want.cmp_us, kTimeTolUs), fmt::format("row {} cmp {} us", i, cmp));
        c.expect(within(tp, want.throughput_k, kThroughputTolK), fmt::format("row {} throughput {}K", i, tp));
        worst_time = std::max({worst_time, std::abs(mem - want.mem_us), std::abs(cmp - want.cmp_us)});
        worst_tp = std::max(worst_tp, std::abs(tp - want.throughput_k));
    }
    c.detail = fmt::format("8 rows, worst time error {:.3f} us, worst throughput error {:.2f}K", worst_time, worst_tp);
}

void dual_path(Check& c) {
    const std::size_t heads[] = {4, 8, 16};
    const std::size_t lengths[] = {1, 2, 17, 64};
    double worst = 0.0;
    for (std::size_t n = 0; n < 20; ++n) {
        GqlaConfig cfg = GqlaConfig::desk();
        cfg.h_q = heads[n % 3];
        const std::size_t groups[] = {1, 2, 4, cfg.h_q};
        cfg.g = groups[n % 4];
        const std::size_t L = lengths[(n / 3) % 4];
        const std::size_t s_q = std::min<std::size_t>(1 + n % 2, L);
        const GqlaWeights w = init_random(cfg, 500 + n);
        const Matrix x = random_tokens(L, cfg.d_model, 700 + n);
        const Matrix gqa = forward_gqa_path(w, cfg, x, s_q).outputs;
        const Matrix abs = forward_absorb_path(w, cfg, x, s_q).outputs;
        const Matrix ref = oracle_mha(w, cfg, x, s_q);
        const double bound = 1e-10 * (1.0 + max_abs(gqa));
        const double d = std::max({max_abs_diff(gqa, abs), max_abs_diff(gqa, ref), max_abs_diff(abs, ref)});
        c.expect(d <= bound, fmt::format("h_q={} g={} L={} s_q={}: {:.2e}", cfg.h_q, cfg.g, L, s_q, d));
        worst = std::max(worst, d / bound);
    }
    c.detail = fmt::format("20 configs, worst deviation {:.2e} of bound", worst);
}

void gqa_ladder(Check& c) {
    const std::size_t h_q = 8, g = 2, d_h = 16, D = 64;
    const GqaWeights src = init_random_gqa(h_q, g, d_h, D, 41);
    const Matrix calib = random_tokens(256, D, 41);

    const MergedWeights merged = merge_heads(src);
    const Matrix x = random_tokens(24, D, 42);
    const double d_merge = max_abs_diff(merged_forward(merged, x, 24), reference_gqa(src, x, 24));
    c.expect(d_merge <= 1e-10, fmt::format("merge {:.2e}", d_merge));

    const RoRopeAlignment aligned = rorope_align(merged, calib);
    double d_scores = 0.0;
    for (std::uint64_t p = 0; p < 5; ++p) {
        const Matrix probe = random_tokens(12, D, 50 + p);
        const auto before = merged_scores(merged, probe);
        const auto after = merged_scores(aligned.merged, probe);
        for (std::size_t i = 0; i < before.size(); ++i) d_scores = std::max(d_scores, max_abs_diff(before[i], after[i]));
    }
    c.expect(d_scores <= 1e-10, fmt::format("RoRoPE scores {:.2e}", d_scores));

    GqlaConfig full;
    full.d_model = D;
    full.h_q = h_q;
    full.g = g;
    full.d_h = d_h;
    full.d_h_v = d_h;
    full.d_h_r = g * d_h;
    full.r_kv = g * d_h;
    full.r_q = D;
    const GqaConversion conv = convert_gqa(src, calib, full);
    c.expect(conv.report.balance_deviation <= 1e-12, fmt::format("balance {:.2e}", conv.report.balance_deviation));
    double d_full = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Matrix probe = random_tokens(12, D, 60 + s);
        const Matrix out = forward_gqa_path(conv.model.weights, conv.model.config, probe, 12).outputs;
        d_full = std::max(d_full, max_abs_diff(out, reference_gqa(src, probe, 12)));
    }
    c.expect(d_full <= 1e-8, fmt::format("full-rank convert {:.2e}", d_full));

    // h_q = 32, g = 8 with every width scaled by 1/8.
    const GqaWeights llama = init_random_gqa(32, 8, 16, 64, 43);
    GqlaConfig budget = full;
    budget.h_q = 32;
    budget.g = 8;
    budget.r_kv = 64;
    budget.d_h_r = 8;
    const GqaConversion small = convert_gqa(llama, random_tokens(256, 64, 43), budget);
    const std::string pct = fmt::format("{:.3f}%", 100.0 * small.report.cache_ratio);
    c.expect(small.report.cache_ratio == 0.28125 && pct == "28.125%", fmt::format("cache ratio {}", pct));

    c.detail = fmt::format("merge {:.1e}, scores {:.1e}, balance {:.1e}, full-rank {:.1e}, cache {}", d_merge,
                           d_scores, conv.report.balance_deviation, d_full, pct);
}

Matrix mla_forward(const MlaWeights& w, const GqlaConfig& cfg, const Matrix& x) {
    return forward_absorb_path(as_gqla(w), cfg, x, x.rows()).outputs;
}

void mla_conversion(Check& c) {
    GqlaConfig cfg = GqlaConfig::desk();
    cfg.g = cfg.h_q;

    const MlaWeights w = init_random_mla(cfg, 71);
    const MlaCalibration stats = calibrate(w, cfg, random_tokens(512, cfg.d_model, 71), 2);
    const GroupFactorization f = factor(w, cfg, stats, cfg.d_h, cfg.d_h_v);
    const GqlaModel absorbed = absorb_factors(w, cfg, f);
    const Matrix x = random_tokens(16, cfg.d_model, 72);
    const double gap = max_abs_diff(forward_gqa_path(absorbed.weights, absorbed.config, x, 16).outputs,
                                    mla_forward(unfused_weights(w, cfg, f), cfg, x));
    c.expect(gap <= 1e-10, fmt::format("absorb gap {:.2e}", gap));

    const MlaWeights planted = planted_mla(cfg, 2, 73);
    const MlaConversion conv = convert_mla(planted, cfg, random_tokens(512, cfg.d_model, 73), 2);
    double d_planted = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Matrix probe = random_tokens(16, cfg.d_model, 80 + s);
        const Matrix ref = mla_forward(planted, cfg, probe);
        const Matrix out = forward_gqa_path(conv.model.weights, conv.model.config, probe, 16).outputs;
        d_planted = std::max(d_planted, max_abs_diff(out, ref) / (1.0 + max_abs(ref)));
    }
    c.expect(d_planted <= 1e-8, fmt::format("planted {:.2e}", d_planted));

    const MlaConversion exact = convert_mla(w, cfg, random_tokens(256, cfg.d_model, 74), cfg.h_q);
    c.expect(exact.report.output_deviation <= 1e-10, fmt::format("g = h_q {:.2e}", exact.report.output_deviation));

    c.detail = fmt::format("absorb gap {:.1e}, planted {:.1e}, g = h_q {:.1e}", gap, d_planted,
                           exact.report.output_deviation);
}

// Each instance checks the activation residual trace((I-P) S (I-P)) with S
// the activation second moment, and the input-weighted error
// trace((w-uv) S_in (w-uv)^T), which coincide when S = w S_in w^T.
void pca_optimality(Check& c) {
    std::mt19937_64 rng(90);
    std::uniform_int_distribution<std::size_t> out_dim(4, 20), in_dim(3, 16);
    std::uniform_real_distribution<double> spread(0.1, 3.0);
    std::size_t comparisons = 0;
    for (int n = 0; n < 50; ++n) {
        const std::size_t rows = out_dim(rng), cols = in_dim(rng);
        const std::size_t rank = std::uniform_int_distribution<std::size_t>(1, rows - 1)(rng);
        const Matrix w = random_normal(rows, cols, rng);
        Matrix inputs = random_normal(4 * cols + 8, cols, rng);
        for (std::size_t k = 0; k < cols; ++k) {
            const double s = spread(rng);
            for (std::size_t r = 0; r < inputs.rows(); ++r) inputs(r, k) *= s;
        }
        CovarianceAccumulator sigma_in(cols), sigma(rows);
        sigma_in.add(inputs);
        sigma.add(matmul(inputs, w.transposed()));

        const LowRankFactors f = pca_factor(w, sigma, rank);
        const Matrix s = sigma.normalized(), s_in = sigma_in.normalized();
        const double best = projection_residual(s, f.u);
        const double best_in = input_weighted_error(w, s_in, matmul(f.u, f.v));
        for (int t = 0; t < 100; ++t) {
            const Matrix b = random_orthonormal(rows, rank, rng);
            const double other = projection_residual(s, b);
            const double other_in = input_weighted_error(w, s_in, matmul(b, matmul_tn(b, w)));
            c.expect(best <= other + 1e-9, fmt::format("instance {} basis {}: {} > {}", n, t, best, other));
            c.expect(best_in <= other_in + 1e-9, fmt::format("instance {} basis {}: {} > {}", n, t, best_in, other_in));
            ++comparisons;
        }
    }
    c.detail = fmt::format("50 instances x 100 random bases, {} comparisons", comparisons);
}

void sparse_and_tile(Check& c) {
    double worst = 0.0;
    for (std::size_t L : {1u, 5u, 24u}) {
        const GqlaConfig cfg = GqlaConfig::desk();
        const GqlaWeights w = init_random(cfg, 100 + L);
        const Matrix x = random_tokens(L, cfg.d_model, 100 + L);
        const std::size_t t = L - 1;
        const GqaPathResult dense = forward_gqa_path(w, cfg, x, 1);
        const TokenProjection q = project_token(w, cfg, x.row(t), t);
        const auto selected = topk_select(indexer_scores(q, dense.cache.k_r, L), L + 3);
        c.expect(selected.size() == L, fmt::format("L={}: selected {}", L, selected.size()));
        const Vector out = sparse_attention(w, cfg, dense.cache, x.row(t), t, selected, SparseScale::dense);
        const double d = max_abs_diff(out, dense.outputs.row(0));
        c.expect(d <= 1e-10 * (1.0 + max_abs(dense.outputs)), fmt::format("L={}: saturation {:.2e}", L, d));
        worst = std::max(worst, d);
    }

    GqlaConfig cfg = GqlaConfig::canonical();
    const TileReport canon = tile_feasibility(cfg);
    c.expect(canon.gqa_path_feasible && canon.heads_per_group == 16, "canonical grouping not feasible");
    cfg.h_q = 64;
    const TileReport half = tile_feasibility(cfg);
    c.expect(!half.gqa_path_feasible && half.heads_per_group == 8, "h_q = 64, g = 8 reported feasible");
    for (std::size_t h_q : {16u, 32u, 64u, 128u}) {
        cfg.h_q = h_q;
        for (std::size_t g = 1; g <= h_q; g *= 2) {
            cfg.g = g;
            const bool feasible = tile_feasibility(cfg).gqa_path_feasible;
            c.expect(feasible == (h_q / g >= 16), fmt::format("h_q={} g={} feasible={}", h_q, g, feasible));
        }
    }
    c.detail = fmt::format("saturation {:.1e}; 128/8 feasible, 64/8 infeasible", worst);
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<void(Check&)> run;
    };
    const std::vector<Criterion> criteria = {
        {"roofline ridges", ridges},
        {"operating point table at L=8192", operating_points},
        {"dual-path equivalence", dual_path},
        {"GQA conversion exactness ladder", gqa_ladder},
        {"MLA conversion", mla_conversion},
        {"PCA optimality", pca_optimality},
        {"sparse saturation and tile rule", sparse_and_tile},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Check c;
        try {
            criteria[i].run(c);
        } catch (const std::exception& e) {
            c.failures.push_back(fmt::format("threw: {}", e.what()));
        }
        const bool ok = c.failures.empty();
        failed += ok ? 0 : 1;
        fmt::print("[{}] criterion {}: {}  ({})\n", ok ? "PASS" : "FAIL", i + 1, criteria[i].name, c.detail);
        for (std::size_t k = 0; k < std::min<std::size_t>(c.failures.size(), 5); ++k)
            fmt::print("       {}\n", c.failures[k]);
    }
    fmt::print("[EXCLUDED] criterion 8: downstream task accuracies need pretrained multi-billion-parameter "
               "checkpoints; not reproducible here\n");
    return failed == 0 ? 0 : 1;
}
