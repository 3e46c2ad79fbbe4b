#include <algorithm>
#include <random>
#include <string>

#include "gqla/convert_gqa.hpp"
#include "gqla/error.hpp"

namespace gqla {

GqaConversion convert_gqa(const GqaWeights& src, const Matrix& calib, const GqlaConfig& target,
                          const GqaConvertOptions& options) {
    src.validate();
    if (target.h_q != src.h_q || target.g != src.g || target.d_h != src.d_h || target.d_model != src.d_model())
        throw ParameterError("convert_gqa: target h_q, g, d_h and D must match the source");
    if (target.d_h_v != 0 && target.d_h_v != src.d_h)
        throw ParameterError("convert_gqa: a converted GQA block has d_h_v = d_h");
    if (calib.rows() == 0) throw ParameterError("convert_gqa: empty calibration batch");
    if (calib.cols() != src.d_model()) throw ShapeError("convert_gqa: calibration width != D");
    if (options.probe_sequences == 0 || options.probe_length == 0)
        throw ParameterError("convert_gqa: need at least one non-empty probe sequence");

    std::mt19937_64 rng(options.probe_seed);
    std::vector<Matrix> probes;
    for (std::size_t p = 0; p < options.probe_sequences; ++p)
        probes.push_back(random_normal(options.probe_length, src.d_model(), rng));
    const std::size_t L = options.probe_length;

    GqaConversion out;
    GqaConversionReport& rep = out.report;

    const MergedWeights merged = merge_heads(src);
    std::vector<Matrix> reference;
    for (const Matrix& x : probes) {
        reference.push_back(gqa_forward(src, x, L));
        rep.merge_deviation = std::max(rep.merge_deviation, max_abs_diff(merged_forward(merged, x, L), reference.back()));
    }

    const RoRopeAlignment aligned = rorope_align(merged, calib);
    for (const Matrix& x : probes) {
        const auto before = merged_scores(merged, x);
        const auto after = merged_scores(aligned.merged, x);
        for (std::size_t i = 0; i < before.size(); ++i)
            rep.rorope_score_deviation = std::max(rep.rorope_score_deviation, max_abs_diff(before[i], after[i]));
    }

    const FreqFoldResult fold = freqfold_compress(aligned.merged, calib, target.r_kv, target.d_h_r);
    rep.rotary_energy_retained = fold.rotary_energy_retained;
    MergedWeights folded = apply_freqfold(aligned.merged, fold);

    JointFactors joint;
    if (options.balance) {
        const BalanceResult b = balance_sides(folded, calib);
        for (const Matrix& x : probes)
            rep.balance_deviation =
                std::max(rep.balance_deviation, max_abs_diff(merged_forward(b.merged, x, L), merged_forward(folded, x, L)));
        joint = joint_pca(b.merged, calib, target.r_kv);
        joint.alpha = b.alpha;
        joint.beta = b.beta;
        folded = b.merged;
    } else {
        joint = joint_pca(folded, calib, target.r_kv);
    }
    rep.k_energy_retained = joint.k_energy_retained;
    rep.v_energy_retained = joint.v_energy_retained;

    out.model = finalize_gqla(folded, joint);
    const GqlaConfig& c = out.model.config;
    for (std::size_t p = 0; p < probes.size(); ++p) {
        const GqaPathResult gqa = forward_gqa_path(out.model.weights, c, probes[p], L);
        const AbsorbPathResult abs = forward_absorb_path(out.model.weights, c, probes[p], L);
        const double scale = std::max(max_abs(reference[p]), 1e-300);
        rep.output_deviation = std::max(rep.output_deviation, max_abs_diff(gqa.outputs, reference[p]) / scale);
        rep.dual_path_deviation = std::max(rep.dual_path_deviation, max_abs_diff(gqa.outputs, abs.outputs));
    }
    rep.cache_ratio = double(c.r_kv + c.d_h_r) / double(2 * src.g * src.d_h);
    return out;
}

} // namespace gqla
