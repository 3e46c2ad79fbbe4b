#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "gqla/error.hpp"
#include "gqla/io.hpp"

namespace gqla {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'G', 'Q', 'C', 'K'};
constexpr std::size_t kPreamble = 4 + 4 + 8;

struct TensorRef {
    std::string name;
    const Matrix* value;
};

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_le(std::string_view bytes, std::size_t at, int width) {
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) v |= std::uint64_t(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
    return v;
}

const char* dtype_name(Dtype d) { return d == Dtype::f64 ? "f64" : "f32"; }
std::size_t dtype_size(Dtype d) { return d == Dtype::f64 ? 8 : 4; }

json config_json(const GqlaConfig& c) {
    return json{{"d_model", c.d_model}, {"h_q", c.h_q},     {"g", c.g},       {"d_h", c.d_h},
                {"d_h_v", c.d_h_v},     {"d_h_r", c.d_h_r}, {"r_kv", c.r_kv}, {"r_q", c.r_q},
                {"rope_base", c.rope_base}, {"rope_inv_freq", c.rope_inv_freq}};
}

GqlaConfig config_from_json(const json& j) {
    GqlaConfig c;
    c.d_model = j.at("d_model").get<std::size_t>();
    c.h_q = j.at("h_q").get<std::size_t>();
    c.g = j.at("g").get<std::size_t>();
    c.d_h = j.at("d_h").get<std::size_t>();
    c.d_h_v = j.at("d_h_v").get<std::size_t>();
    c.d_h_r = j.at("d_h_r").get<std::size_t>();
    c.r_kv = j.at("r_kv").get<std::size_t>();
    c.r_q = j.at("r_q").get<std::size_t>();
    c.rope_base = j.at("rope_base").get<double>();
    c.rope_inv_freq = j.at("rope_inv_freq").get<std::vector<double>>();
    return c;
}

std::vector<TensorRef> latent_tensors(const GqlaWeights& w) {
    return {{"w_dq", &w.w_dq}, {"w_uq", &w.w_uq}, {"w_qr", &w.w_qr}, {"w_dkv", &w.w_dkv},
            {"w_uk", &w.w_uk}, {"w_uv", &w.w_uv}, {"w_kr", &w.w_kr}, {"w_o", &w.w_o}};
}

void append_tensor(std::string& payload, const Matrix& m, Dtype dtype) {
    for (double x : m.data()) {
        if (dtype == Dtype::f64) {
            put_u64(payload, std::bit_cast<std::uint64_t>(x));
        } else {
            put_u32(payload, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
        }
    }
}

// Parsed tensor directory keyed by name, with payload bounds already checked.
class TensorTable {
  public:
    TensorTable(const json& directory, std::string_view payload) : payload_(payload) {
        struct Span {
            std::size_t begin, end;
            std::string name;
        };
        std::vector<Span> spans;
        for (const json& t : directory) {
            Entry e;
            e.name = t.at("name").get<std::string>();
            const auto shape = t.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2) throw ParseError("tensor '" + e.name + "': shape must be two-dimensional");
            e.rows = shape[0];
            e.cols = shape[1];
            e.offset = t.at("offset").get<std::size_t>();
            const std::string dt = t.at("dtype").get<std::string>();
            if (dt == "f64") {
                e.dtype = Dtype::f64;
            } else if (dt == "f32") {
                e.dtype = Dtype::f32;
            } else {
                throw ParseError("tensor '" + e.name + "': unknown dtype '" + dt + "'");
            }
            const std::size_t bytes = e.rows * e.cols * dtype_size(e.dtype);
            if (e.offset > payload_.size() || bytes > payload_.size() - e.offset) {
                throw ParseError(fmt::format("tensor '{}': payload truncated (needs bytes [{}, {}), have {})", e.name,
                                             e.offset, e.offset + bytes, payload_.size()));
            }
            if (std::any_of(entries_.begin(), entries_.end(), [&](const Entry& o) { return o.name == e.name; }))
                throw ParseError("tensor '" + e.name + "' listed more than once");
            spans.push_back({e.offset, e.offset + bytes, e.name});
            entries_.push_back(std::move(e));
        }
        std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
        for (std::size_t i = 1; i < spans.size(); ++i) {
            if (spans[i].begin < spans[i - 1].end)
                throw ParseError("tensors '" + spans[i - 1].name + "' and '" + spans[i].name + "' overlap");
        }
    }

    bool has(const std::string& name) const { return find(name) != nullptr; }

    Matrix take(const std::string& name, std::size_t rows, std::size_t cols) {
        const Entry* e = find(name);
        if (e == nullptr) throw ParseError("tensor '" + name + "' missing from checkpoint");
        if (e->rows != rows || e->cols != cols) {
            throw ShapeError(fmt::format("tensor '{}': shape {}x{} does not match config ({}x{})", name, e->rows,
                                         e->cols, rows, cols));
        }
        ++consumed_;
        Matrix m(rows, cols);
        auto out = m.data();
        const std::size_t w = dtype_size(e->dtype);
        for (std::size_t k = 0; k < out.size(); ++k) {
            const std::uint64_t bits = get_le(payload_, e->offset + k * w, static_cast<int>(w));
            out[k] = e->dtype == Dtype::f64 ? std::bit_cast<double>(bits)
                                            : static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits)));
        }
        return m;
    }

    void expect_all_consumed() const {
        if (consumed_ != entries_.size()) throw ParseError("checkpoint contains tensors not implied by its kind/config");
    }

  private:
    struct Entry {
        std::string name;
        std::size_t rows = 0, cols = 0, offset = 0;
        Dtype dtype = Dtype::f64;
    };

    const Entry* find(const std::string& name) const {
        for (const Entry& e : entries_)
            if (e.name == name) return &e;
        return nullptr;
    }

    std::string_view payload_;
    std::vector<Entry> entries_;
    std::size_t consumed_ = 0;
};

GqlaWeights read_latent(TensorTable& t, const GqlaConfig& c, std::size_t up_groups) {
    GqlaWeights w;
    w.w_dq = t.take("w_dq", c.r_q, c.d_model);
    w.w_uq = t.take("w_uq", c.h_q * c.d_h, c.r_q);
    w.w_qr = t.take("w_qr", c.h_q * c.d_h_r, c.r_q);
    w.w_dkv = t.take("w_dkv", c.r_kv, c.d_model);
    w.w_uk = t.take("w_uk", up_groups * c.d_h, c.r_kv);
    w.w_uv = t.take("w_uv", up_groups * c.d_h_v, c.r_kv);
    w.w_kr = t.take("w_kr", c.d_h_r, c.d_model);
    w.w_o = t.take("w_o", c.d_model, c.h_q * c.d_h_v);
    return w;
}

} // namespace

const char* kind_name(ModelKind k) {
    switch (k) {
    case ModelKind::gqa:
        return "GQA";
    case ModelKind::mla:
        return "MLA";
    case ModelKind::gqla:
        return "GQLA";
    }
    return "?";
}

ModelKind parse_kind(std::string_view s) {
    std::string u(s);
    std::transform(u.begin(), u.end(), u.begin(), [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
    if (u == "GQA") return ModelKind::gqa;
    if (u == "MLA") return ModelKind::mla;
    if (u == "GQLA") return ModelKind::gqla;
    throw ParseError("unknown model kind '" + std::string(s) + "'");
}

ModelKind kind_of(const AnyModel& m) { return static_cast<ModelKind>(m.index()); }

std::string encode_checkpoint(const Checkpoint& ckpt, Dtype dtype) {
    json manifest;
    std::vector<TensorRef> tensors;
    const ModelKind kind = kind_of(ckpt.model);
    manifest["kind"] = kind_name(kind);

    if (const auto* gqa = std::get_if<GqaWeights>(&ckpt.model)) {
        gqa->validate();
        manifest["config"] = json{{"d_model", gqa->d_model()}, {"h_q", gqa->h_q},
                                  {"g", gqa->g},               {"d_h", gqa->d_h},
                                  {"rope_base", gqa->rope.base}, {"rope_inv_freq", gqa->rope.inv_freq}};
        tensors = {{"w_q", &gqa->w_q}, {"w_k", &gqa->w_k}, {"w_v", &gqa->w_v}, {"w_o", &gqa->w_o}};
    } else if (const auto* mla = std::get_if<MlaModel>(&ckpt.model)) {
        mla->weights.validate(mla->config);
        manifest["config"] = config_json(mla->config);
        tensors = {{"w_dq", &mla->weights.w_dq}, {"w_uq", &mla->weights.w_uq}, {"w_qr", &mla->weights.w_qr},
                   {"w_dkv", &mla->weights.w_dkv}, {"w_uk", &mla->weights.w_uk}, {"w_uv", &mla->weights.w_uv},
                   {"w_kr", &mla->weights.w_kr}, {"w_o", &mla->weights.w_o}};
    } else {
        const auto& gqla = std::get<GqlaModel>(ckpt.model);
        gqla.weights.validate(gqla.config);
        manifest["config"] = config_json(gqla.config);
        tensors = latent_tensors(gqla.weights);
        if (gqla.absorbed) {
            gqla.absorbed->validate(gqla.config);
            tensors.push_back({"w_q_abs", &gqla.absorbed->w_q_abs});
            tensors.push_back({"w_o_abs", &gqla.absorbed->w_o_abs});
        }
    }

    std::string payload;
    json directory = json::array();
    for (const TensorRef& t : tensors) {
        directory.push_back(json{{"name", t.name},
                                 {"shape", {t.value->rows(), t.value->cols()}},
                                 {"offset", payload.size()},
                                 {"dtype", dtype_name(dtype)}});
        append_tensor(payload, *t.value, dtype);
    }
    manifest["tensors"] = std::move(directory);
    if (!ckpt.provenance.empty()) manifest["provenance"] = ckpt.provenance;

    const std::string header = manifest.dump();
    std::string out(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, header.size());
    out += header;
    out += payload;
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < kPreamble || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ParseError("not a GQCK checkpoint (bad magic)");
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    if (version != kCheckpointVersion) throw ParseError(fmt::format("unsupported GQCK version {}", version));
    const std::uint64_t header_len = get_le(bytes, 8, 8);
    if (header_len > bytes.size() - kPreamble) throw ParseError("checkpoint truncated inside the manifest");

    json manifest;
    try {
        manifest = json::parse(bytes.substr(kPreamble, header_len));
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed manifest: ") + e.what());
    }

    Checkpoint ckpt;
    try {
        const ModelKind kind = parse_kind(manifest.at("kind").get<std::string>());
        TensorTable table(manifest.at("tensors"), bytes.substr(kPreamble + header_len));
        const json& cfg = manifest.at("config");
        if (manifest.contains("provenance")) ckpt.provenance = manifest.at("provenance").get<std::string>();

        if (kind == ModelKind::gqa) {
            GqaWeights w;
            w.h_q = cfg.at("h_q").get<std::size_t>();
            w.g = cfg.at("g").get<std::size_t>();
            w.d_h = cfg.at("d_h").get<std::size_t>();
            w.rope = RopeSpec::with_frequencies(cfg.at("rope_inv_freq").get<std::vector<double>>(),
                                                cfg.at("rope_base").get<double>());
            const auto D = cfg.at("d_model").get<std::size_t>();
            w.w_q = table.take("w_q", w.h_q * w.d_h, D);
            w.w_k = table.take("w_k", w.g * w.d_h, D);
            w.w_v = table.take("w_v", w.g * w.d_h, D);
            w.w_o = table.take("w_o", D, w.h_q * w.d_h);
            w.validate();
            ckpt.model = std::move(w);
        } else if (kind == ModelKind::mla) {
            MlaModel m;
            m.config = config_from_json(cfg);
            m.weights = as_mla(read_latent(table, m.config, m.config.h_q));
            m.weights.validate(m.config);
            ckpt.model = std::move(m);
        } else {
            GqlaModel m;
            m.config = config_from_json(cfg);
            m.config.validate();
            m.weights = read_latent(table, m.config, m.config.g);
            m.weights.validate(m.config);
            if (table.has("w_q_abs") || table.has("w_o_abs")) {
                AbsorbedWeights a;
                a.w_q_abs = table.take("w_q_abs", m.config.h_q * m.config.r_kv, m.config.r_q);
                a.w_o_abs = table.take("w_o_abs", m.config.d_model, m.config.h_q * m.config.r_kv);
                a.w_dq = m.weights.w_dq;
                a.w_qr = m.weights.w_qr;
                a.w_dkv = m.weights.w_dkv;
                a.w_kr = m.weights.w_kr;
                m.absorbed = std::move(a);
            }
            ckpt.model = std::move(m);
        }
        table.expect_all_consumed();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed manifest: ") + e.what());
    }
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt, Dtype dtype) {
    const std::string bytes = encode_checkpoint(ckpt, dtype);
    std::filesystem::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move checkpoint into place at '" + path.string() + "'");
    }
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_checkpoint(buf.str());
}

} // namespace gqla
