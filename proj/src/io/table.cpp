#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "gqla/error.hpp"
#include "gqla/io.hpp"

namespace gqla {

namespace {

bool is_numeric(const std::string& s) {
    if (s.empty()) return false;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

} // namespace

void ResultTable::add_row(std::vector<std::string> cells) {
    if (cells.size() != columns_.size()) {
        throw ShapeError(fmt::format("ResultTable: row has {} cells, table has {} columns", cells.size(),
                                     columns_.size()));
    }
    rows_.push_back(std::move(cells));
}

std::string emit_table(const ResultTable& table, TableFormat format) {
    const auto& cols = table.columns();
    std::string out;
    if (format == TableFormat::csv) {
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i > 0) out += ',';
                out += csv_field(cells[i]);
            }
            out += '\n';
        };
        line(cols);
        for (const auto& row : table.rows()) line(row);
        return out;
    }

    std::vector<std::size_t> width(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) width[i] = cols[i].size();
    for (const auto& row : table.rows())
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());

    auto line = [&](const std::vector<std::string>& cells, bool header) {
        std::string l;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) l += "  ";
            if (!header && is_numeric(cells[i])) {
                l += fmt::format("{:>{}}", cells[i], width[i]);
            } else {
                l += fmt::format("{:<{}}", cells[i], width[i]);
            }
        }
        while (!l.empty() && l.back() == ' ') l.pop_back();
        out += l;
        out += '\n';
    };
    line(cols, true);
    std::size_t total = 0;
    for (std::size_t w : width) total += w;
    out += std::string(total + (cols.empty() ? 0 : 2 * (cols.size() - 1)), '-');
    out += '\n';
    for (const auto& row : table.rows()) line(row, false);
    return out;
}

ResultTable parse_csv(std::string_view csv) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, field_started = false;
    for (std::size_t i = 0; i < csv.size(); ++i) {
        const char c = csv[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < csv.size() && csv[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < csv.size() && csv[i + 1] == '\n') ++i;
            record.push_back(std::move(field));
            records.push_back(std::move(record));
            field.clear();
            record.clear();
            field_started = false;
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw ParseError("parse_csv: unterminated quoted field");
    if (field_started || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    if (records.empty()) throw ParseError("parse_csv: missing header line");

    ResultTable table(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.columns().size())
            throw ParseError(fmt::format("parse_csv: line {} has {} fields, expected {}", r + 1, records[r].size(),
                                         table.columns().size()));
        table.add_row(std::move(records[r]));
    }
    return table;
}

ResultTable operating_point_table(const std::vector<OperatingPoint>& points) {
    ResultTable t({"GPU", "Path", "g", "s_q", "cache (B/tok)", "I", "mem (us)", "cmp (us)", "step (us)", "tok/s (K)"});
    for (const OperatingPoint& p : points) {
        t.add_row({p.gpu, path_name(p.path), fmt::format("{}", p.g), fmt::format("{}", p.s_q),
                   fmt::format("{:.0f}", p.cache_bytes_per_token), fmt::format("{:.2f}", p.intensity),
                   fmt::format("{:.2f}", p.mem_time * 1e6), fmt::format("{:.2f}", p.cmp_time * 1e6),
                   fmt::format("{:.2f}", p.step_time * 1e6), fmt::format("{:.1f}", p.throughput / 1e3)});
    }
    return t;
}

} // namespace gqla
