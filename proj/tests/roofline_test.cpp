#include <cmath>

#include "doctest.h"
#include "gqla/error.hpp"
#include "gqla/roofline.hpp"
#include "operating_points.hpp"

using namespace gqla;
using gqla::testing::kReferenceTable;

namespace {

const GqlaConfig kCanon = GqlaConfig::canonical();

bool within(double a, double b, double tol) { return std::abs(a - b) <= tol; }

} // namespace

TEST_CASE("ridges of the two GPUs") {
    CHECK(within(ridge(HardwareSpec::h100()), 295.2, 0.1));
    CHECK(ridge(HardwareSpec::h20()) == 37.0);
    CHECK(ridge(HardwareSpec{"eq", 5e12, 5e12}) == 1.0);
    CHECK_THROWS_AS(ridge(HardwareSpec{"bad", 0.0, 1.0}), ParameterError);
}

TEST_CASE("cache bytes per token") {
    CHECK(bytes_per_token(kCanon, AttentionPath::mqa_absorb, 1) == 1152.0);
    CHECK(bytes_per_token(kCanon, AttentionPath::gqa, 8) == 4224.0);
    CHECK(bytes_per_token(kCanon, AttentionPath::gqa, 4) == 2176.0);
    GqlaConfig wide = kCanon;
    wide.d_h_v = 256;
    CHECK(bytes_per_token(wide, AttentionPath::gqa, 8) == 2.0 * (8 * (128 + 256) + 64));
}

TEST_CASE("closed-form intensities") {
    CHECK(within(intensity(kCanon, AttentionPath::mqa_absorb, 1, 1), 241.78, 0.005));
    CHECK(within(intensity(kCanon, AttentionPath::gqa, 8, 2), 38.79, 0.005));
    CHECK(within(intensity(kCanon, AttentionPath::gqa, 4, 1), 37.65, 0.005));
    const double hq = 128, r = 512, dr = 64, dh = 128;
    for (std::size_t s : {1u, 2u, 3u}) {
        CHECK(intensity(kCanon, AttentionPath::mqa_absorb, 1, s) ==
              doctest::Approx(hq * s * (2 * r + dr) / (r + dr)).epsilon(1e-14));
        for (std::size_t g : {1u, 2u, 4u, 8u})
            CHECK(intensity(kCanon, AttentionPath::gqa, g, s) ==
                  doctest::Approx(hq * s * (2 * dh + dr) / (2 * g * dh + dr)).epsilon(1e-14));
    }
}

TEST_CASE("intensity equals per-step FLOPs over bytes") {
    for (AttentionPath p : {AttentionPath::mqa_absorb, AttentionPath::gqa}) {
        for (std::size_t s : {1u, 2u}) {
            const OperatingPoint op = step_time(HardwareSpec::h20(), kCanon, p, 8, s, 8192);
            CHECK(op.intensity == doctest::Approx(op.flops / op.bytes).epsilon(1e-15));
            CHECK(op.intensity == doctest::Approx(intensity(kCanon, p, 8, s)).epsilon(1e-14));
        }
    }
    const OperatingPoint a = step_time(HardwareSpec::h100(), kCanon, AttentionPath::mqa_absorb, 1, 1);
    const OperatingPoint b = step_time(HardwareSpec::h100(), kCanon, AttentionPath::mqa_absorb, 1, 2);
    CHECK(a.bytes == b.bytes);
    CHECK(b.intensity == doctest::Approx(2.0 * a.intensity).epsilon(1e-15));
}

TEST_CASE("default table reproduces the reference operating points") {
    const auto pts = operating_table({HardwareSpec::h100(), HardwareSpec::h20()}, kCanon, default_table_rows());
    REQUIRE(pts.size() == kReferenceTable.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CAPTURE(i);
        const auto& want = kReferenceTable[i];
        const OperatingPoint& p = pts[i];
        CHECK(within(p.intensity, want.intensity, 0.005));
        CHECK(within(p.mem_time * 1e6, want.mem_us, gqla::testing::kTimeTolUs));
        CHECK(within(p.cmp_time * 1e6, want.cmp_us, gqla::testing::kTimeTolUs));
        CHECK(within(p.throughput / 1e3, want.throughput_k, gqla::testing::kThroughputTolK));
        CHECK(p.cache_bytes_per_token == want.cache_bytes);
        CHECK(p.step_time == std::max(p.mem_time, p.cmp_time));
        CHECK(p.throughput == double(p.s_q) / p.step_time);
    }
}

TEST_CASE("unknown GPU rows are skipped") {
    const auto pts = operating_table({HardwareSpec::h20()}, kCanon, default_table_rows());
    CHECK(pts.size() == 6);
}

TEST_CASE("doubling the context doubles times but not intensity") {
    for (const TableRow& row : default_table_rows()) {
        const HardwareSpec hw = row.gpu == "H100" ? HardwareSpec::h100() : HardwareSpec::h20();
        const OperatingPoint a = step_time(hw, kCanon, row.path, row.g, row.s_q, 8192);
        const OperatingPoint b = step_time(hw, kCanon, row.path, row.g, row.s_q, 16384);
        CHECK(b.mem_time == doctest::Approx(2.0 * a.mem_time).epsilon(1e-15));
        CHECK(b.cmp_time == doctest::Approx(2.0 * a.cmp_time).epsilon(1e-15));
        CHECK(b.intensity == a.intensity);
    }
}

TEST_CASE("halving the query heads halves every intensity") {
    GqlaConfig half = kCanon;
    half.h_q = 64;
    for (const TableRow& row : default_table_rows())
        CHECK(intensity(half, row.path, row.g, row.s_q) ==
              doctest::Approx(0.5 * intensity(kCanon, row.path, row.g, row.s_q)).epsilon(1e-15));
}

TEST_CASE("memory-bound exactly when intensity is at or below the ridge") {
    for (const HardwareSpec& hw : {HardwareSpec::h100(), HardwareSpec::h20(), HardwareSpec{"x", 1e14, 1e12}}) {
        for (const OperatingPoint& p : sweep({hw}, kCanon, true, 128)) {
            const bool memory_bound = p.step_time == p.mem_time;
            const double r = ridge(hw);
            if (std::abs(p.intensity - r) > 1e-9 * r) CHECK(memory_bound == (p.intensity <= r));
        }
    }
}

TEST_CASE("sweep honours the planner constraints") {
    const auto pts = sweep({HardwareSpec::h20()}, kCanon, false, 8);
    for (const OperatingPoint& p : pts) {
        CHECK(p.s_q == 1);
        if (p.path == AttentionPath::gqa) {
            CHECK(128 % p.g == 0);
            CHECK(p.g <= 8);
            CHECK(p.g * kCanon.d_h >= kCanon.r_kv);
        }
    }
    CHECK(pts.size() == 1 + 2); // MQA-absorb plus g = 4, 8
}

TEST_CASE("H100 without MTP recommends MQA-absorb") {
    const Recommendation r = recommend(HardwareSpec::h100(), kCanon, false, 8);
    CHECK(r.point.path == AttentionPath::mqa_absorb);
    CHECK(r.point.s_q == 1);
    CHECK(within(r.point.step_time * 1e6, 2.82, 0.02));
}

TEST_CASE("H20 with MTP recommends the eight-group GQA path") {
    const Recommendation r = recommend(HardwareSpec::h20(), kCanon, true, 8);
    CHECK(r.point.path == AttentionPath::gqa);
    CHECK(r.point.g == 8);
    CHECK(r.point.s_q == 2);
    CHECK(within(r.point.throughput / 1e3, 221.0, 1.0));
    bool cap = false, note = false;
    for (const std::string& n : r.notes) {
        cap = cap || n.find("8-way") != std::string::npos;
        note = note || n.find("r_kv <= 256") != std::string::npos;
    }
    CHECK(cap);
    CHECK(note);
}

TEST_CASE("H20 without MTP recommends four groups") {
    const Recommendation r = recommend(HardwareSpec::h20(), kCanon, false, 8);
    CHECK(r.point.path == AttentionPath::gqa);
    CHECK(r.point.g == 4);
    CHECK(r.point.s_q == 1);
}

TEST_CASE("roofline rejects invalid points") {
    CHECK_THROWS_AS(intensity(kCanon, AttentionPath::gqa, 3, 1), ParameterError);
    CHECK_THROWS_AS(intensity(kCanon, AttentionPath::gqa, 8, 0), ParameterError);
    CHECK_THROWS_AS(step_time(HardwareSpec::h100(), kCanon, AttentionPath::gqa, 8, 1, 0), ParameterError);
}
