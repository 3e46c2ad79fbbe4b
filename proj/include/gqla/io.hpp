#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gqla/convert_gqa.hpp"
#include "gqla/convert_mla.hpp"
#include "gqla/model.hpp"
#include "gqla/roofline.hpp"

namespace gqla {

enum class ModelKind { gqa, mla, gqla };
enum class Dtype { f64, f32 };

const char* kind_name(ModelKind k); // "GQA", "MLA", "GQLA"
ModelKind parse_kind(std::string_view s); // case-insensitive; throws ParseError

struct MlaModel {
    GqlaConfig config; // g == h_q
    MlaWeights weights;
    bool operator==(const MlaModel&) const = default;
};

using AnyModel = std::variant<GqaWeights, MlaModel, GqlaModel>;

ModelKind kind_of(const AnyModel& m);

// GQCK container:
//   "GQCK" | u32 LE version | u64 LE manifest length | JSON manifest | payload
// The manifest records kind, config, and a tensor directory (name, shape,
// byte offset into the payload, dtype). Payload values are row-major little
// endian. A GQLA file may also carry the absorbed tensors w_q_abs / w_o_abs.
struct Checkpoint {
    AnyModel model;
    std::string provenance; // free text; excluded from equality

    bool operator==(const Checkpoint& o) const { return model == o.model; }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt, Dtype dtype = Dtype::f64);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt, Dtype dtype = Dtype::f64);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Rectangular table of pre-formatted cells with a fixed column order.
class ResultTable {
  public:
    ResultTable() = default;
    explicit ResultTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }

    // Throws ShapeError unless the row has one cell per column.
    void add_row(std::vector<std::string> cells);

    bool operator==(const ResultTable&) const = default;

  private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

enum class TableFormat { text, csv };

// Text: space-padded columns, numeric cells right-aligned. CSV: comma
// separated, fields containing commas, quotes or newlines are double-quoted.
std::string emit_table(const ResultTable& table, TableFormat format);
ResultTable parse_csv(std::string_view csv);

// GPU, Path, g, s_q, cache (B/tok), I, mem (us), cmp (us), step (us), tok/s (K).
ResultTable operating_point_table(const std::vector<OperatingPoint>& points);

} // namespace gqla
