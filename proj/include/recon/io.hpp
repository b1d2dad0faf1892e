#pragma once

// File formats:
//   volume  <name>.json header + <name>.raw little-endian payload, x-fastest
//   mesh    binary STL, ASCII PLY

#include "recon/grid.hpp"
#include "recon/mesh.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace recon {

namespace fs = std::filesystem;

enum class VoxelType { int16, uint8 };
enum class VolumeKind { scalar, mask };

struct VolumeHeader {
    std::array<std::int64_t, 3> dims{1, 1, 1};
    Vec3 spacing_mm{1, 1, 1};
    Vec3 origin_mm{0, 0, 0};
    VoxelType dtype = VoxelType::int16;
    VolumeKind kind = VolumeKind::scalar;

    std::size_t width() const { return dtype == VoxelType::int16 ? 2 : 1; }
    std::size_t payload_bytes() const {
        return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]) * width();
    }
    GridGeometry geometry() const { return GridGeometry(dims, spacing_mm, origin_mm); }
};

using AnyVolume = std::variant<ScalarVolume, BinaryMask>;

namespace detail {

inline fs::path raw_path_for(const fs::path& header) {
    fs::path p = header;
    p.replace_extension(".raw");
    return p;
}

inline fs::path header_path_for(const fs::path& p) {
    if (p.extension() == ".json") return p;
    fs::path h = p;
    h.replace_extension(".json");
    return h;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, const void* data, std::size_t n) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed for " + p.string());
}

inline Vec3 vec3_from_json(const nlohmann::json& j, const char* key) {
    if (!j.is_array() || j.size() != 3) throw IoError(std::string(key) + " must be an array of 3 numbers");
    Vec3 v;
    for (int a = 0; a < 3; ++a) {
        if (!j[a].is_number()) throw IoError(std::string(key) + " must be an array of 3 numbers");
        v[a] = j[a].get<double>();
    }
    return v;
}

inline nlohmann::json vec3_to_json(const Vec3& v) { return nlohmann::json::array({v[0], v[1], v[2]}); }

inline VolumeHeader parse_header(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("volume header is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw IoError("volume header must be a JSON object");
    static const char* keys[] = {"dims", "spacing_mm", "origin_mm", "dtype", "byte_order", "kind"};
    for (const auto& [k, v] : j.items()) {
        if (std::find(std::begin(keys), std::end(keys), k) == std::end(keys)) {
            throw IoError("unknown volume header key '" + k + "'");
        }
    }
    for (const char* k : keys) {
        if (!j.contains(k)) throw IoError(std::string("volume header is missing '") + k + "'");
    }
    VolumeHeader h;
    const auto& d = j["dims"];
    if (!d.is_array() || d.size() != 3) throw IoError("dims must be an array of 3 integers");
    for (int a = 0; a < 3; ++a) {
        if (!d[a].is_number_integer() || d[a].get<std::int64_t>() < 1) throw IoError("dims must be positive integers");
        h.dims[a] = d[a].get<std::int64_t>();
    }
    h.spacing_mm = vec3_from_json(j["spacing_mm"], "spacing_mm");
    h.origin_mm = vec3_from_json(j["origin_mm"], "origin_mm");
    for (int a = 0; a < 3; ++a) {
        if (!(h.spacing_mm[a] > 0.0)) throw IoError("spacing_mm must be positive");
    }
    if (!j["dtype"].is_string()) throw IoError("dtype must be a string");
    const auto dtype = j["dtype"].get<std::string>();
    if (dtype == "int16") h.dtype = VoxelType::int16;
    else if (dtype == "uint8") h.dtype = VoxelType::uint8;
    else throw IoError("unsupported dtype '" + dtype + "'");
    if (j["byte_order"] != "little") throw IoError("byte_order must be \"little\"");
    if (!j["kind"].is_string()) throw IoError("kind must be a string");
    const auto kind = j["kind"].get<std::string>();
    if (kind == "scalar") h.kind = VolumeKind::scalar;
    else if (kind == "mask") h.kind = VolumeKind::mask;
    else throw IoError("unsupported kind '" + kind + "'");
    if (h.kind == VolumeKind::mask && h.dtype != VoxelType::uint8) throw IoError("mask payload must be uint8");
    const double total = static_cast<double>(h.dims[0]) * static_cast<double>(h.dims[1]) * static_cast<double>(h.dims[2]);
    if (total > 4.0e9) throw IoError("volume dims are implausibly large");
    return h;
}

inline nlohmann::json header_json(const VolumeHeader& h) {
    nlohmann::json j;
    j["dims"] = h.dims;
    j["spacing_mm"] = vec3_to_json(h.spacing_mm);
    j["origin_mm"] = vec3_to_json(h.origin_mm);
    j["dtype"] = h.dtype == VoxelType::int16 ? "int16" : "uint8";
    j["byte_order"] = "little";
    j["kind"] = h.kind == VolumeKind::scalar ? "scalar" : "mask";
    return j;
}

inline void write_header(const fs::path& header, const VolumeHeader& h) {
    const auto text = header_json(h).dump(2) + "\n";
    write_file(header, text.data(), text.size());
}

}  // namespace detail

inline VolumeHeader read_volume_header(const fs::path& path) {
    return detail::parse_header(detail::read_file(detail::header_path_for(path)));
}

/// Reads `<name>.json` and its sibling `<name>.raw`.
inline AnyVolume read_volume(const fs::path& path) {
    const fs::path header = detail::header_path_for(path);
    const VolumeHeader h = detail::parse_header(detail::read_file(header));
    const std::string payload = detail::read_file(detail::raw_path_for(header));
    if (payload.size() != h.payload_bytes()) {
        throw IoError("payload size mismatch for " + header.string() + ": expected " + std::to_string(h.payload_bytes()) +
                      " bytes, found " + std::to_string(payload.size()));
    }
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
    const GridGeometry g = h.geometry();
    if (h.kind == VolumeKind::mask) {
        std::vector<std::uint8_t> bits(bytes, bytes + payload.size());
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i] > 1) {
                throw IoError("mask payload value " + std::to_string(bits[i]) + " at voxel " + std::to_string(i) +
                              " is not 0 or 1");
            }
        }
        return BinaryMask(g, std::move(bits));
    }
    std::vector<std::int16_t> data(g.voxel_count());
    if (h.dtype == VoxelType::int16) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto u = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
            data[i] = static_cast<std::int16_t>(u);
        }
    } else {
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = bytes[i];
    }
    return ScalarVolume(g, std::move(data));
}

inline ScalarVolume read_scalar_volume(const fs::path& path) {
    auto v = read_volume(path);
    if (auto* s = std::get_if<ScalarVolume>(&v)) return std::move(*s);
    throw IoError(path.string() + " holds a mask, expected a scalar volume");
}

inline BinaryMask read_mask(const fs::path& path) {
    auto v = read_volume(path);
    if (auto* m = std::get_if<BinaryMask>(&v)) return std::move(*m);
    throw IoError(path.string() + " holds a scalar volume, expected a mask");
}

inline void write_volume(const ScalarVolume& vol, const fs::path& path) {
    const fs::path header = detail::header_path_for(path);
    VolumeHeader h;
    h.dims = vol.geometry().dims;
    h.spacing_mm = vol.geometry().spacing;
    h.origin_mm = vol.geometry().origin;
    h.dtype = VoxelType::int16;
    h.kind = VolumeKind::scalar;
    std::vector<unsigned char> bytes(vol.size() * 2);
    for (std::size_t i = 0; i < vol.size(); ++i) {
        const auto u = static_cast<std::uint16_t>(vol[i]);
        bytes[2 * i] = static_cast<unsigned char>(u & 0xff);
        bytes[2 * i + 1] = static_cast<unsigned char>(u >> 8);
    }
    detail::write_file(detail::raw_path_for(header), bytes.data(), bytes.size());
    detail::write_header(header, h);
}

inline void write_volume(const BinaryMask& mask, const fs::path& path) {
    const fs::path header = detail::header_path_for(path);
    VolumeHeader h;
    h.dims = mask.geometry().dims;
    h.spacing_mm = mask.geometry().spacing;
    h.origin_mm = mask.geometry().origin;
    h.dtype = VoxelType::uint8;
    h.kind = VolumeKind::mask;
    std::vector<unsigned char> bytes(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 1 : 0;
    detail::write_file(detail::raw_path_for(header), bytes.data(), bytes.size());
    detail::write_header(header, h);
}

// ---------------------------------------------------------------------------
// Meshes

namespace detail {

inline std::uint32_t le_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float le_f32(const unsigned char* p) { return std::bit_cast<float>(le_u32(p)); }

inline void put_u32(std::string& s, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) s.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline void put_f32(std::string& s, float v) { put_u32(s, std::bit_cast<std::uint32_t>(v)); }

inline std::string lower_ext(const fs::path& p) {
    auto e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

}  // namespace detail

/// Binary STL. Vertices that are bitwise identical as float triples are welded.
inline TriangleMesh parse_stl(const std::string& bytes) {
    if (bytes.size() < 84) throw IoError("STL file shorter than its 84-byte header");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t n = detail::le_u32(p + 80);
    if (n == 0) throw IoError("STL declares zero triangles");
    const std::uint64_t expected = 84ull + 50ull * n;
    if (bytes.size() != expected) {
        throw IoError("STL declares " + std::to_string(n) + " triangles (" + std::to_string(expected) +
                      " bytes) but file has " + std::to_string(bytes.size()) + " bytes");
    }
    TriangleMesh mesh;
    std::map<std::array<std::uint32_t, 3>, std::uint32_t> weld;
    mesh.triangles.reserve(n);
    for (std::uint32_t t = 0; t < n; ++t) {
        const unsigned char* rec = p + 84 + 50ull * t;
        Triangle tri{};
        for (int v = 0; v < 3; ++v) {
            const unsigned char* q = rec + 12 + 12 * v;
            const std::array<std::uint32_t, 3> key{detail::le_u32(q), detail::le_u32(q + 4), detail::le_u32(q + 8)};
            auto [it, inserted] = weld.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
            if (inserted) {
                const Vec3 pos(detail::le_f32(q), detail::le_f32(q + 4), detail::le_f32(q + 8));
                if (!pos.allFinite()) throw IoError("STL vertex is not finite");
                mesh.vertices.push_back(pos);
            }
            tri[v] = it->second;
        }
        mesh.triangles.push_back(tri);
    }
    return mesh;
}

inline std::string format_stl(const TriangleMesh& mesh) {
    std::string s(80, '\0');
    const std::string tag = "binary STL";
    std::copy(tag.begin(), tag.end(), s.begin());
    detail::put_u32(s, static_cast<std::uint32_t>(mesh.triangles.size()));
    for (const auto& t : mesh.triangles) {
        Vec3 n = mesh.face_normal_area_weighted(t);
        if (n.norm() > 0.0) n.normalize();
        for (int a = 0; a < 3; ++a) detail::put_f32(s, static_cast<float>(n[a]));
        for (auto v : t) {
            for (int a = 0; a < 3; ++a) detail::put_f32(s, static_cast<float>(mesh.vertices[v][a]));
        }
        s.push_back('\0');
        s.push_back('\0');
    }
    return s;
}

/// ASCII PLY with x/y/z vertex properties and polygon faces (fan-triangulated).
inline TriangleMesh parse_ply(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw IoError("PLY magic 'ply' missing");
    std::size_t nvert = 0, nface = 0;
    std::vector<std::string> vprops;
    std::string current;
    bool ascii = false, have_list = false;
    while (true) {
        if (!std::getline(in, line)) throw IoError("PLY header is not terminated by end_header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end_header") break;
        if (word == "format") {
            std::string f;
            ls >> f;
            ascii = (f == "ascii");
        } else if (word == "element") {
            std::size_t count = 0;
            ls >> current >> count;
            if (!ls) throw IoError("malformed PLY element line");
            if (current == "vertex") nvert = count;
            else if (current == "face") nface = count;
            else if (count != 0) throw IoError("unsupported PLY element '" + current + "'");
        } else if (word == "property") {
            std::string type;
            ls >> type;
            if (current == "vertex") {
                std::string name;
                ls >> name;
                vprops.push_back(name);
            } else if (current == "face") {
                have_list = (type == "list");
            }
        }
    }
    if (!ascii) throw IoError("only ASCII PLY is supported");
    auto col = [&](const std::string& name) -> std::size_t {
        auto it = std::find(vprops.begin(), vprops.end(), name);
        if (it == vprops.end()) throw IoError("PLY vertex property '" + name + "' missing");
        return static_cast<std::size_t>(it - vprops.begin());
    };
    const std::size_t cx = col("x"), cy = col("y"), cz = col("z");
    if (nface == 0) throw IoError("PLY declares zero faces");
    if (!have_list) throw IoError("PLY face element lacks a vertex index list");
    if (nvert > 500'000'000 || nface > 500'000'000) throw IoError("PLY element counts are implausibly large");
    TriangleMesh mesh;
    mesh.vertices.reserve(std::min(nvert, text.size() / 6));
    std::vector<double> vals(vprops.size());
    for (std::size_t v = 0; v < nvert; ++v) {
        for (auto& x : vals) {
            if (!(in >> x)) throw IoError("PLY vertex data truncated at vertex " + std::to_string(v));
        }
        mesh.vertices.emplace_back(vals[cx], vals[cy], vals[cz]);
    }
    for (std::size_t f = 0; f < nface; ++f) {
        long long count = 0;
        if (!(in >> count) || count < 3 || count > 1'000'000) throw IoError("PLY face " + std::to_string(f) + " is malformed");
        std::vector<std::uint32_t> idx(static_cast<std::size_t>(count));
        for (auto& i : idx) {
            long long v = 0;
            if (!(in >> v) || v < 0 || static_cast<std::size_t>(v) >= nvert) {
                throw IoError("PLY face " + std::to_string(f) + " has an invalid vertex index");
            }
            i = static_cast<std::uint32_t>(v);
        }
        for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
    return mesh;
}

inline std::string format_ply(const TriangleMesh& mesh) {
    std::ostringstream out;
    out.precision(17);
    out << "ply\nformat ascii 1.0\n"
        << "element vertex " << mesh.vertices.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "element face " << mesh.triangles.size() << "\n"
        << "property list uchar int vertex_indices\nend_header\n";
    for (const auto& v : mesh.vertices) out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    return out.str();
}

/// Dispatches on content: PLY by its magic line, otherwise binary STL.
inline TriangleMesh read_mesh(const fs::path& path) {
    const std::string bytes = detail::read_file(path);
    TriangleMesh mesh = bytes.rfind("ply", 0) == 0 ? parse_ply(bytes) : parse_stl(bytes);
    if (mesh.triangles.empty()) throw IoError(path.string() + " contains no triangles");
    return mesh;
}

/// Format chosen by extension: .ply writes ASCII PLY, anything else binary STL.
inline void write_mesh(const TriangleMesh& mesh, const fs::path& path) {
    if (mesh.triangles.empty()) throw IoError("refusing to write a mesh without triangles");
    const std::string s = detail::lower_ext(path) == ".ply" ? format_ply(mesh) : format_stl(mesh);
    detail::write_file(path, s.data(), s.size());
}

}  // namespace recon
