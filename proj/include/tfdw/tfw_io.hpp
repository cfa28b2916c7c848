#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "tfdw/error.hpp"
#include "tfdw/field.hpp"

namespace tfdw {

// .tfw layout: one line of JSON (grid metadata), '\n', then size() little-endian
// IEEE-754 doubles in row-major axis order.

inline nlohmann::json grid_to_json(const GridSpec& g) {
    nlohmann::json cell = nlohmann::json::array();
    for (int c = 0; c < 3; ++c) {
        cell.push_back({g.lattice().vectors(0, c), g.lattice().vectors(1, c), g.lattice().vectors(2, c)});
    }
    return {{"cell_vectors", cell}, {"resolution", g.resolution()}, {"supercell", g.supercell()}};
}

inline GridSpec grid_from_json(const nlohmann::json& j) {
    try {
        Lattice l;
        const auto& cell = j.at("cell_vectors");
        for (int c = 0; c < 3; ++c) {
            for (int r = 0; r < 3; ++r) l.vectors(r, c) = cell.at(c).at(r).get<double>();
        }
        auto res = j.at("resolution").get<std::array<int, 3>>();
        auto sc = j.value("supercell", std::array<int, 3>{1, 1, 1});
        return GridSpec(l, res, sc);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, std::string("malformed grid metadata: ") + e.what());
    }
}

/// Write through a temporary file and rename, so readers never see partial output.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << text;
        if (!out) fail(ErrorKind::io, "cannot write " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline void write_tfw(const std::filesystem::path& path, const ScalarField& f,
                      const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json header = grid_to_json(f.grid());
    header["format"] = "tfw";
    header["version"] = 1;
    header["domain"] = f.domain() == Domain::cell ? "cell" : "supercell";
    header["count"] = f.size();
    if (!extra.empty()) header["meta"] = extra;

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) fail(ErrorKind::io, "cannot open for writing: " + tmp);
        const std::string line = header.dump() + "\n";
        out.write(line.data(), std::streamsize(line.size()));
        for (double v : f.values()) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            char bytes[8];
            for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
            out.write(bytes, 8);
        }
        if (!out) fail(ErrorKind::io, "write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline ScalarField read_tfw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open: " + path.string());
    std::string line;
    std::getline(in, line);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, "bad .tfw header in " + path.string() + ": " + e.what());
    }
    if (header.value("format", "") != "tfw") fail(ErrorKind::io, "not a .tfw file: " + path.string());
    GridSpec g = grid_from_json(header);
    if (header.value("count", std::size_t{0}) != g.size()) fail(ErrorKind::io, "count does not match grid");
    std::vector<double> values(g.size());
    for (auto& v : values) {
        unsigned char bytes[8];
        in.read(reinterpret_cast<char*>(bytes), 8);
        if (!in) fail(ErrorKind::io, "truncated .tfw payload: " + path.string());
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t(bytes[b]) << (8 * b);
        v = std::bit_cast<double>(bits);
    }
    return ScalarField(g, std::move(values));
}

}  // namespace tfdw
