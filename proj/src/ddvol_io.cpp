#include "ddreg/ddvol_io.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

namespace ddreg {

static_assert(std::endian::native == std::endian::little,
              "ddvol payloads are little-endian; big-endian hosts are unsupported");

namespace {

using nlohmann::json;

json header_json(const Grid& g, const char* dtype) {
    return json{{"shape", {g.shape[0], g.shape[1], g.shape[2]}},
                {"spacing", {g.spacing.x, g.spacing.y, g.spacing.z}},
                {"origin", {g.origin.x, g.origin.y, g.origin.z}},
                {"dtype", dtype},
                {"order", "x-fastest"},
                {"endianness", "little"}};
}

void write_file(const std::string& path, const void* bytes, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("ddvol: cannot open for writing: " + path);
    out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
    if (!out) throw IoError("ddvol: short write: " + path);
}

void write_header(const Grid& g, const char* dtype, const std::string& path) {
    std::string text = header_json(g, dtype).dump(2);
    text.push_back('\n');
    write_file(path, text.data(), text.size());
}

json read_header(const std::string& path, Grid& g) {
    std::ifstream in(path);
    if (!in) throw IoError("ddvol: cannot open header: " + path);
    json h;
    try {
        in >> h;
    } catch (const json::exception& e) {
        throw IoError("ddvol: malformed header " + path + ": " + e.what());
    }
    try {
        auto shape = h.at("shape");
        auto spacing = h.at("spacing");
        auto origin = h.at("origin");
        if (shape.size() != 3 || spacing.size() != 3 || origin.size() != 3)
            throw IoError("ddvol: shape/spacing/origin must have 3 components: " + path);
        for (int a = 0; a < 3; ++a) {
            g.shape[a] = shape[a].get<int>();
            g.spacing[a] = spacing[a].get<double>();
            g.origin[a] = origin[a].get<double>();
        }
        if (h.at("order").get<std::string>() != "x-fastest")
            throw IoError("ddvol: unsupported order in " + path);
        if (h.at("endianness").get<std::string>() != "little")
            throw IoError("ddvol: unsupported endianness in " + path);
    } catch (const json::exception& e) {
        throw IoError("ddvol: bad header field in " + path + ": " + e.what());
    }
    g.validate();
    return h;
}

std::vector<char> read_payload(const std::string& raw_path, std::size_t expect_bytes) {
    std::ifstream in(raw_path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("ddvol: cannot open payload: " + raw_path);
    auto size = static_cast<std::size_t>(in.tellg());
    if (size != expect_bytes)
        throw IoError("ddvol: payload size mismatch in " + raw_path + ": got " +
                      std::to_string(size) + " bytes, expected " + std::to_string(expect_bytes));
    std::vector<char> bytes(size);
    in.seekg(0);
    in.read(bytes.data(), static_cast<std::streamsize>(size));
    if (!in) throw IoError("ddvol: short read: " + raw_path);
    return bytes;
}

std::string dtype_of(const json& h, const std::string& path) {
    try {
        return h.at("dtype").get<std::string>();
    } catch (const json::exception&) {
        throw IoError("ddvol: missing dtype in " + path);
    }
}

}  // namespace

void save_ddvol(const Volume& v, const std::string& path) {
    v.validate();
    write_header(v.grid, "f32", path);
    std::vector<float> payload(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) payload[i] = static_cast<float>(v.data[i]);
    write_file(path + ".raw", payload.data(), payload.size() * sizeof(float));
}

void save_ddvol(const LabelMap& m, const std::string& path) {
    write_header(m.grid, "u8", path);
    write_file(path + ".raw", m.data.data(), m.data.size());
}

Volume load_volume(const std::string& path) {
    Grid g;
    json h = read_header(path, g);
    if (dtype_of(h, path) != "f32") throw IoError("ddvol: expected dtype f32 in " + path);
    auto bytes = read_payload(path + ".raw", static_cast<std::size_t>(g.voxel_count()) * sizeof(float));
    Volume v(g);
    const float* src = reinterpret_cast<const float*>(bytes.data());
    for (std::int64_t i = 0; i < g.voxel_count(); ++i) v.data[i] = src[i];
    return v;
}

LabelMap load_labelmap(const std::string& path) {
    Grid g;
    json h = read_header(path, g);
    if (dtype_of(h, path) != "u8") throw IoError("ddvol: expected dtype u8 in " + path);
    auto bytes = read_payload(path + ".raw", static_cast<std::size_t>(g.voxel_count()));
    std::vector<std::uint8_t> data(bytes.begin(), bytes.end());
    return LabelMap(g, std::move(data));
}

void save_field(const DisplacementField& f, const std::string& prefix) {
    f.validate();
    const char* axes[3] = {".x.ddvol", ".y.ddvol", ".z.ddvol"};
    for (int a = 0; a < 3; ++a) {
        Volume comp(f.grid);
        for (std::size_t i = 0; i < f.vectors.size(); ++i) comp.data[i] = f.vectors[i][a];
        save_ddvol(comp, prefix + axes[a]);
    }
}

DisplacementField load_field(const std::string& prefix) {
    Volume x = load_volume(prefix + ".x.ddvol");
    Volume y = load_volume(prefix + ".y.ddvol");
    Volume z = load_volume(prefix + ".z.ddvol");
    if (!(x.grid == y.grid) || !(x.grid == z.grid))
        throw IoError("ddvol field: component grids disagree under " + prefix);
    DisplacementField f(x.grid);
    for (std::size_t i = 0; i < f.vectors.size(); ++i)
        f.vectors[i] = {x.data[i], y.data[i], z.data[i]};
    return f;
}

}  // namespace ddreg
