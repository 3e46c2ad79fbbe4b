// gqla: verify, convert, and plan grouped latent attention blocks.
//
// Exit codes: 0 success, 1 a check failed, 2 usage or input error.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gqla/convert_gqa.hpp"
#include "gqla/convert_mla.hpp"
#include "gqla/error.hpp"
#include "gqla/io.hpp"
#include "gqla/model.hpp"
#include "gqla/roofline.hpp"
#include "gqla/sparse.hpp"

namespace {

using namespace gqla;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

// Thrown for bad flag combinations; main maps it to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t default_seed() {
    const char* env = std::getenv("GQLA_SEED");
    if (env == nullptr || *env == '\0') return 0;
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
        return v;
    } catch (const std::exception&) {
        throw UsageError(fmt::format("GQLA_SEED must be an unsigned integer, got '{}'", env));
    }
}

// Deviation check that treats NaN as failure.
bool within(double deviation, double tolerance) { return deviation <= tolerance; }

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

GqlaModel load_gqla(const std::string& path) {
    Checkpoint ckpt = read_checkpoint(path);
    if (kind_of(ckpt.model) != ModelKind::gqla) {
        throw UsageError(fmt::format("{} holds a {} checkpoint; this command needs GQLA", path,
                                     kind_name(kind_of(ckpt.model))));
    }
    return std::get<GqlaModel>(std::move(ckpt.model));
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
    std::string checkpoint;
    std::size_t seq_len = 16;
    std::size_t s_q = 1;
    double tolerance = 1e-9;
};

int run_verify(const VerifyArgs& a) {
    const GqlaModel m = load_gqla(a.checkpoint);
    if (a.s_q > a.seq_len) throw UsageError("--sq cannot exceed --seq-len");
    std::mt19937_64 rng(default_seed());
    const Matrix tokens = random_normal(a.seq_len, m.config.d_model, rng);

    const GqaPathResult gqa = forward_gqa_path(m.weights, m.config, tokens, a.s_q);
    const AbsorbPathResult abs = m.absorbed ? forward_absorbed(*m.absorbed, m.config, tokens, a.s_q)
                                            : forward_absorb_path(m.weights, m.config, tokens, a.s_q);
    const Matrix oracle = oracle_mha(m.weights, m.config, tokens, a.s_q);
    const ExpandedCache expanded = cache_expand(abs.cache, m.weights, m.config);

    const double d_paths = max_abs_diff(gqa.outputs, abs.outputs);
    const double d_gqa = max_abs_diff(gqa.outputs, oracle);
    const double d_abs = max_abs_diff(abs.outputs, oracle);
    const double d_cache = std::max(max_abs_diff(expanded.k_c, gqa.cache.k_c), max_abs_diff(expanded.v, gqa.cache.v));
    const bool ok = within(d_paths, a.tolerance) && within(d_gqa, a.tolerance) && within(d_abs, a.tolerance) &&
                    within(d_cache, a.tolerance);

    fmt::print("checkpoint   {}\n", a.checkpoint);
    fmt::print("config       h_q={} g={} d_h={} d_h_v={} d_h_r={} r_kv={} r_q={} D={}\n", m.config.h_q, m.config.g,
               m.config.d_h, m.config.d_h_v, m.config.d_h_r, m.config.r_kv, m.config.r_q, m.config.d_model);
    fmt::print("absorb path  {}\n", m.absorbed ? "stored absorbed weights" : "absorbed on the fly");
    fmt::print("sequence     L={} s_q={} seed={}\n", a.seq_len, a.s_q, default_seed());
    fmt::print("max |GQA - absorb|          {:.3e}\n", d_paths);
    fmt::print("max |GQA - oracle|          {:.3e}\n", d_gqa);
    fmt::print("max |absorb - oracle|       {:.3e}\n", d_abs);
    fmt::print("max |expand(latent) - GQA|  {:.3e}\n", d_cache);
    fmt::print("cache elements/token        latent {}  expanded {}\n", m.config.latent_cache_elements(),
               m.config.expanded_cache_elements());
    fmt::print("{} (tolerance {:.1e})\n", verdict(ok), a.tolerance);
    return ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------- convert

struct ConvertArgs {
    std::string from;
    std::string in;
    std::string out;
    std::optional<std::size_t> g;
    std::optional<std::size_t> r_kv;
    std::optional<std::size_t> d_h_r;
    std::size_t calib_tokens = 32 * 64;
    std::optional<std::uint64_t> seed;
};

constexpr double kDualPathTolerance = 1e-9;

int run_convert(const ConvertArgs& a) {
    const std::uint64_t seed = a.seed.value_or(default_seed());
    const Checkpoint in = read_checkpoint(a.in);
    const ModelKind expected = a.from == "gqa" ? ModelKind::gqa : ModelKind::mla;
    if (kind_of(in.model) != expected) {
        throw UsageError(fmt::format("--from {} but {} holds a {} checkpoint", a.from, a.in, kind_name(kind_of(in.model))));
    }
    if (a.calib_tokens == 0) throw UsageError("--calib-tokens must be >= 1");

    GqlaModel model;
    double dual_path = 0.0;
    if (expected == ModelKind::gqa) {
        const auto& src = std::get<GqaWeights>(in.model);
        if (a.g && *a.g != src.g)
            throw UsageError(fmt::format("--g {} does not match the source's {} KV heads", *a.g, src.g));
        if (!a.r_kv || !a.d_h_r) throw UsageError("GQA conversion needs --rkv and --dhr");
        GqlaConfig target;
        target.d_model = src.d_model();
        target.h_q = src.h_q;
        target.g = src.g;
        target.d_h = src.d_h;
        target.d_h_v = src.d_h;
        target.r_kv = *a.r_kv;
        target.d_h_r = *a.d_h_r;
        target.r_q = src.d_model();
        const Matrix calib = synthetic_calibration(src.d_model(), seed, 1, a.calib_tokens);
        GqaConvertOptions opts;
        opts.probe_seed = seed + 1;
        const GqaConversion conv = convert_gqa(src, calib, target, opts);
        const GqaConversionReport& r = conv.report;
        model = conv.model;
        dual_path = r.dual_path_deviation;

        fmt::print("GQA -> GQLA  h_q={} g={} d_h={} D={}  r_kv={} d_h_r={}  calib={} tokens seed={}\n", src.h_q,
                   src.g, src.d_h, src.d_model(), target.r_kv, target.d_h_r, a.calib_tokens, seed);
        fmt::print("merge        max |merged - source|       {:.3e}\n", r.merge_deviation);
        fmt::print("RoRoPE       max |score change|          {:.3e}\n", r.rorope_score_deviation);
        fmt::print("FreqFold     rotary energy retained      {:.6f}\n", r.rotary_energy_retained);
        fmt::print("balance      max |forward change|        {:.3e}\n", r.balance_deviation);
        fmt::print("joint PCA    K_nope energy retained      {:.6f}\n", r.k_energy_retained);
        fmt::print("joint PCA    V energy retained           {:.6f}\n", r.v_energy_retained);
        fmt::print("output       rel. deviation vs source    {:.3e}\n", r.output_deviation);
        fmt::print("cache ratio  {}/{} elements per token = {}%\n", target.r_kv + target.d_h_r, 2 * src.g * src.d_h,
                   fmt::format("{:.3f}", 100.0 * r.cache_ratio));
    } else {
        const auto& src = std::get<MlaModel>(in.model);
        if (!a.g) throw UsageError("MLA conversion needs --g");
        if (a.r_kv && *a.r_kv != src.config.r_kv) throw UsageError("MLA conversion keeps the source r_kv");
        if (a.d_h_r && *a.d_h_r != src.config.d_h_r) throw UsageError("MLA conversion keeps the source d_h_r");
        if (*a.g == 0 || src.config.h_q % *a.g != 0)
            throw UsageError(fmt::format("--g {} must divide h_q = {}", *a.g, src.config.h_q));
        const Matrix calib = synthetic_calibration(src.config.d_model, seed, 1, a.calib_tokens);
        MlaConvertOptions opts;
        opts.probe_seed = seed + 1;
        const MlaConversion conv = convert_mla(src.weights, src.config, calib, *a.g, opts);
        const MlaConversionReport& r = conv.report;
        model = conv.model;
        dual_path = r.dual_path_deviation;

        fmt::print("MLA -> GQLA  h_q={} g={} d_h={} d_h_v={} r_kv={}  calib={} tokens seed={}\n", src.config.h_q,
                   *a.g, src.config.d_h, src.config.d_h_v, src.config.r_kv, a.calib_tokens, seed);
        for (std::size_t j = 0; j < r.k_energy_retained.size(); ++j) {
            fmt::print("group {:<4}   energy retained  K {:.6f}  V {:.6f}\n", j, r.k_energy_retained[j],
                       r.v_energy_retained[j]);
        }
        fmt::print("absorb       max |absorbed - unfused|    {:.3e}\n", r.absorb_gap);
        fmt::print("output       rel. deviation vs source    {:.3e}\n", r.output_deviation);
        fmt::print("cache        latent {} elements/token, GQA path {} elements/token\n",
                   model.config.latent_cache_elements(), model.config.expanded_cache_elements());
    }

    model.absorbed = absorb(model.weights, model.config);
    Checkpoint out;
    out.model = model;
    out.provenance = fmt::format("gqla convert --from {} seed={} calib_tokens={}", a.from, seed, a.calib_tokens);
    write_checkpoint(a.out, out);

    const bool ok = within(dual_path, kDualPathTolerance);
    fmt::print("dual-path    max |GQA - absorb|          {:.3e}  {}\n", dual_path, verdict(ok));
    fmt::print("wrote        {}\n", a.out);
    return ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------- roofline

struct RooflineArgs {
    std::vector<std::string> hw = {"h100", "h20"};
    std::string config = "canonical";
    std::string rows = "default";
    std::size_t seq_len = kDefaultContext;
    std::string format = "text";
    bool recommend = false;
    bool mtp = false;
    std::size_t max_g = 8;
};

double parse_positive(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || !(v > 0.0) || !std::isfinite(v))
        throw UsageError(fmt::format("{}: expected a positive number, got '{}'", what, s));
    return v;
}

HardwareSpec parse_hw(const std::string& s) {
    if (s == "h100" || s == "H100") return HardwareSpec::h100();
    if (s == "h20" || s == "H20") return HardwareSpec::h20();
    const std::string prefix = "custom:";
    if (s.rfind(prefix, 0) == 0) {
        const std::string rest = s.substr(prefix.size());
        const auto comma = rest.find(',');
        if (comma == std::string::npos) throw UsageError("--hw custom:FLOPS,BW needs two comma-separated values");
        return {"custom", parse_positive(rest.substr(0, comma), "custom FLOP/s"),
                parse_positive(rest.substr(comma + 1), "custom bandwidth")};
    }
    throw UsageError(fmt::format("unknown --hw '{}' (expected h100, h20 or custom:FLOPS,BW)", s));
}

GqlaConfig roofline_config(const std::string& spec) {
    if (spec == "canonical") return GqlaConfig::canonical();
    const Checkpoint ckpt = read_checkpoint(spec);
    if (const auto* g = std::get_if<GqlaModel>(&ckpt.model)) return g->config;
    if (const auto* m = std::get_if<MlaModel>(&ckpt.model)) return m->config;
    throw UsageError("--config must name a GQLA or MLA checkpoint");
}

// --rows value: comma-separated PATH:G:SQ entries, PATH in {mqa, gqa}.
std::vector<TableRow> parse_rows(const std::string& spec, const std::vector<HardwareSpec>& hardware) {
    std::vector<TableRow> rows;
    if (spec == "default") {
        const std::vector<TableRow> table = default_table_rows();
        for (const HardwareSpec& hw : hardware) {
            bool matched = false;
            for (const TableRow& r : table) {
                if (r.gpu == hw.name) {
                    rows.push_back(r);
                    matched = true;
                }
            }
            if (!matched) {
                for (const TableRow& r : table)
                    if (r.gpu == "H20") rows.push_back({hw.name, r.path, r.g, r.s_q});
            }
        }
        return rows;
    }
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto a = item.find(':'), b = item.rfind(':');
        if (a == std::string::npos || a == b) throw UsageError(fmt::format("--rows entry '{}' is not PATH:G:SQ", item));
        const std::string path = item.substr(0, a);
        AttentionPath p;
        if (path == "mqa" || path == "mqa-absorb") {
            p = AttentionPath::mqa_absorb;
        } else if (path == "gqa") {
            p = AttentionPath::gqa;
        } else {
            throw UsageError(fmt::format("--rows path '{}' must be mqa or gqa", path));
        }
        std::size_t g = 0, sq = 0;
        try {
            g = std::stoul(item.substr(a + 1, b - a - 1));
            sq = std::stoul(item.substr(b + 1));
        } catch (const std::exception&) {
            throw UsageError(fmt::format("--rows entry '{}' has a non-numeric g or s_q", item));
        }
        for (const HardwareSpec& hw : hardware) rows.push_back({hw.name, p, g, sq});
    }
    return rows;
}

int run_roofline(const RooflineArgs& a) {
    std::vector<HardwareSpec> hardware;
    for (const std::string& h : a.hw) hardware.push_back(parse_hw(h));
    if (a.seq_len == 0) throw UsageError("--seq-len must be >= 1");
    const GqlaConfig c = roofline_config(a.config);
    const std::vector<OperatingPoint> points = operating_table(hardware, c, parse_rows(a.rows, hardware), a.seq_len);
    const ResultTable table = operating_point_table(points);

    if (a.format == "csv") {
        std::cout << emit_table(table, TableFormat::csv);
        return kOk;
    }
    fmt::print("# decode attention, one layer, one sequence; L={} BF16; h_q={} d_h={} d_h_r={} r_kv={}\n", a.seq_len,
               c.h_q, c.d_h, c.d_h_r, c.r_kv);
    for (const HardwareSpec& hw : hardware) {
        fmt::print("# {}: {:.4g} FLOP/s, {:.4g} B/s, ridge {:.1f} FLOP/B\n", hw.name, hw.flops_peak, hw.bandwidth,
                   ridge(hw));
    }
    std::cout << emit_table(table, TableFormat::text);

    if (a.recommend) {
        for (const HardwareSpec& hw : hardware) {
            const Recommendation r = gqla::recommend(hw, c, a.mtp, a.max_g, a.seq_len);
            fmt::print("recommend {} (MTP {}): {} g={} s_q={}  step {:.2f} us  {:.1f}K tok/s\n", hw.name,
                       a.mtp ? "on" : "off", path_name(r.point.path), r.point.g, r.point.s_q,
                       r.point.step_time * 1e6, r.point.throughput / 1e3);
            for (const std::string& note : r.notes) fmt::print("  note: {}\n", note);
        }
    }
    return kOk;
}

// ---------------------------------------------------------------- sparse-check

struct SparseArgs {
    std::string checkpoint;
    std::size_t k = 8;
    std::size_t seq_len = 32;
};

constexpr double kSparseTolerance = 1e-10;
constexpr double kMaskTolerance = 1e-8;

int run_sparse(const SparseArgs& a) {
    const GqlaModel m = load_gqla(a.checkpoint);
    if (a.seq_len == 0) throw UsageError("--seq-len must be >= 1");
    if (a.k == 0) throw UsageError("--k must be >= 1");
    std::mt19937_64 rng(default_seed());
    const Matrix tokens = random_normal(a.seq_len, m.config.d_model, rng);
    const std::size_t t = a.seq_len - 1;
    const auto x = tokens.row(t);

    const GqaPathResult dense = forward_gqa_path(m.weights, m.config, tokens, 1);
    const AbsorbPathResult latent = forward_absorb_path(m.weights, m.config, tokens, 1);
    const TokenProjection q = project_token(m.weights, m.config, x, t);
    const std::vector<std::size_t> selected = topk_select(indexer_scores(q, dense.cache.k_r, t + 1), a.k);
    std::vector<std::size_t> all(t + 1);
    for (std::size_t s = 0; s <= t; ++s) all[s] = s;

    const Vector saturated = sparse_attention(m.weights, m.config, dense.cache, x, t, all, SparseScale::dense);
    const double d_sat = max_abs_diff(std::span<const double>(saturated), dense.outputs.row(0));
    const double sat_bound = kSparseTolerance * (1.0 + max_abs(dense.outputs));

    const Vector sparse = sparse_attention(m.weights, m.config, dense.cache, x, t, selected);
    const Vector masked = masked_dense_attention(m.weights, m.config, dense.cache, x, t, selected);
    const Vector sparse_latent = sparse_attention(m.weights, m.config, latent.cache, x, t, selected);
    const double d_mask = max_abs_diff(sparse, masked);
    const double d_dual = max_abs_diff(sparse, sparse_latent);

    const bool sat_ok = within(d_sat, sat_bound);
    const bool mask_ok = within(d_mask, kMaskTolerance);
    const bool dual_ok = within(d_dual, kSparseTolerance * (1.0 + max_abs(sparse)));

    fmt::print("checkpoint  {}\n", a.checkpoint);
    fmt::print("selection   k={} of L={} -> {} positions\n", a.k, a.seq_len, selected.size());
    fmt::print("saturation  all positions, dense scale vs dense GQA path  {:.3e}  {}\n", d_sat, verdict(sat_ok));
    if (a.k >= a.seq_len) fmt::print("            k >= L: top-k selects every position\n");
    fmt::print("masking     top-k sparse vs -1e9 masked dense             {:.3e}  {}\n", d_mask, verdict(mask_ok));
    fmt::print("dual path   top-k sparse GQA vs MQA-absorb                {:.3e}  {}\n", d_dual, verdict(dual_ok));

    const TileReport tile = tile_feasibility(m.config);
    fmt::print("tile        {}, {} heads/group (MMA m = {})\n", tile.gqa_path_feasible ? "feasible" : "infeasible",
               tile.heads_per_group, tile.tile_m);
    fmt::print("            {}\n", tile.rationale);
    return sat_ok && mask_ok && dual_ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------- init

struct InitArgs {
    std::string kind = "gqla";
    std::string out;
    std::optional<std::uint64_t> seed;
    GqlaConfig config = GqlaConfig::desk();
    bool with_absorbed = false;
};

int run_init(InitArgs a) {
    const std::uint64_t seed = a.seed.value_or(default_seed());
    Checkpoint ckpt;
    ckpt.provenance = fmt::format("gqla init --kind {} seed={}", a.kind, seed);
    GqlaConfig& c = a.config;
    if (a.kind == "gqa") {
        if (a.with_absorbed) throw UsageError("--with-absorbed applies to GQLA checkpoints only");
        ckpt.model = init_random_gqa(c.h_q, c.g, c.d_h, c.d_model, seed, c.rope_base);
    } else if (a.kind == "mla") {
        if (a.with_absorbed) throw UsageError("--with-absorbed applies to GQLA checkpoints only");
        c.g = c.h_q;
        ckpt.model = MlaModel{c, init_random_mla(c, seed)};
    } else {
        GqlaModel m{c, init_random(c, seed), std::nullopt};
        if (a.with_absorbed) m.absorbed = absorb(m.weights, m.config);
        ckpt.model = std::move(m);
    }
    write_checkpoint(a.out, ckpt);
    fmt::print("wrote {} checkpoint {} (seed {})\n", kind_name(kind_of(ckpt.model)), a.out, seed);
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gqla: grouped latent attention verification, conversion and roofline planning"};
    app.require_subcommand(1);

    VerifyArgs verify;
    auto* v = app.add_subcommand("verify", "Check GQA-path / MQA-absorb / oracle agreement on a GQLA checkpoint");
    v->add_option("--checkpoint", verify.checkpoint, "GQLA checkpoint")->required();
    v->add_option("--seq-len", verify.seq_len, "Sequence length L")->check(CLI::PositiveNumber);
    v->add_option("--sq", verify.s_q, "Queries per step")->check(CLI::IsMember({1, 2}));
    v->add_option("--tolerance", verify.tolerance, "Maximum allowed absolute deviation");

    ConvertArgs convert;
    auto* cv = app.add_subcommand("convert", "Convert a GQA or MLA checkpoint to GQLA");
    cv->add_option("--from", convert.from, "Source architecture")->required()->check(CLI::IsMember({"gqa", "mla"}));
    cv->add_option("--in", convert.in, "Source checkpoint")->required();
    cv->add_option("--out", convert.out, "Destination GQLA checkpoint")->required();
    cv->add_option("--g", convert.g, "KV groups of the result");
    cv->add_option("--rkv", convert.r_kv, "Latent rank (GQA source)");
    cv->add_option("--dhr", convert.d_h_r, "Decoupled rotary dim (GQA source)");
    cv->add_option("--calib-tokens", convert.calib_tokens, "Synthetic calibration tokens");
    cv->add_option("--seed", convert.seed, "Calibration seed (default GQLA_SEED or 0)");

    RooflineArgs roof;
    auto* rf = app.add_subcommand("roofline", "Decode-attention roofline operating points");
    rf->add_option("--hw", roof.hw, "h100, h20 or custom:FLOPS,BW (repeatable)");
    rf->add_option("--config", roof.config, "canonical or a GQLA/MLA checkpoint");
    rf->add_option("--rows", roof.rows, "default or PATH:G:SQ[,...] with PATH in {mqa, gqa}");
    rf->add_option("--seq-len", roof.seq_len, "Context length L");
    rf->add_option("--format", roof.format, "Output format")->check(CLI::IsMember({"text", "csv"}));
    rf->add_flag("--recommend", roof.recommend, "Also print the recommended (path, g, s_q)");
    rf->add_flag("--mtp", roof.mtp, "Allow s_q = 2 in the recommendation");
    rf->add_option("--max-g", roof.max_g, "Largest g considered (tensor-parallel cap)");

    SparseArgs sparse;
    auto* sp = app.add_subcommand("sparse-check", "Top-k sparse attention oracles and MMA tile feasibility");
    sp->add_option("--checkpoint", sparse.checkpoint, "GQLA checkpoint")->required();
    sp->add_option("--k", sparse.k, "Positions kept by top-k");
    sp->add_option("--seq-len", sparse.seq_len, "Sequence length L");

    InitArgs init;
    auto* in = app.add_subcommand("init", "Write a randomly initialised checkpoint");
    in->add_option("--kind", init.kind, "Architecture")->check(CLI::IsMember({"gqa", "mla", "gqla"}));
    in->add_option("--out", init.out, "Destination checkpoint")->required();
    in->add_option("--seed", init.seed, "Initialisation seed (default GQLA_SEED or 0)");
    in->add_option("--d-model", init.config.d_model, "D");
    in->add_option("--h-q", init.config.h_q, "Query heads");
    in->add_option("--g", init.config.g, "KV groups (ignored for MLA)");
    in->add_option("--d-h", init.config.d_h, "Per-head key dim");
    in->add_option("--d-h-v", init.config.d_h_v, "Per-head value dim");
    in->add_option("--d-h-r", init.config.d_h_r, "Decoupled rotary dim");
    in->add_option("--r-kv", init.config.r_kv, "KV latent rank");
    in->add_option("--r-q", init.config.r_q, "Query latent rank");
    in->add_flag("--with-absorbed", init.with_absorbed, "Also store absorbed query/output weights (GQLA)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*v) return run_verify(verify);
        if (*cv) return run_convert(convert);
        if (*rf) return run_roofline(roof);
        if (*sp) return run_sparse(sparse);
        if (*in) return run_init(init);
    } catch (const UsageError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    } catch (const IoError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    } catch (const ParseError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    } catch (const ParameterError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    } catch (const ShapeError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kCheckFailed;
    }
    return kUsage;
}
