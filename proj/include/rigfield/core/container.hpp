#pragma once

// Binary container shared by checkpoints and rig files.
//
//   offset 0   8 bytes  magic (ASCII, zero padded)
//   offset 8   u32 LE   container version (currently 1)
//   offset 12  u32 LE   header length N in bytes
//   offset 16  N bytes  UTF-8 JSON header
//   then       float32 little-endian blocks, back to back, in the order
//              listed by header["blocks"] = [{"name", "shape", "count"}, ...]

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rigfield/core/errors.hpp"

namespace rigfield::container {

inline constexpr std::uint32_t kVersion = 1;

struct Block {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<float> data;
};

struct Document {
    nlohmann::json header;  // user keys; "blocks" is filled on write
    std::vector<Block> blocks;

    const Block& block(const std::string& name) const {
        for (const auto& b : blocks)
            if (b.name == name) return b;
        throw FormatError("missing block '" + name + "'");
    }
    bool has_block(const std::string& name) const {
        for (const auto& b : blocks)
            if (b.name == name) return true;
        return false;
    }
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                         static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b.data()), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    is.read(reinterpret_cast<char*>(b.data()), 4);
    if (!is) throw FormatError("truncated container");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline void write_floats_le(std::ostream& os, const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    } else {
        for (float f : v) put_u32(os, std::bit_cast<std::uint32_t>(f));
    }
}

inline void read_floats_le(std::istream& is, std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
        if (!is) throw FormatError("truncated float block");
    } else {
        for (float& f : v) f = std::bit_cast<float>(get_u32(is));
    }
}

inline std::array<char, 8> magic_bytes(const std::string& magic) {
    if (magic.size() > 8) throw PreconditionError("container magic longer than 8 bytes");
    std::array<char, 8> m{};
    std::memcpy(m.data(), magic.data(), magic.size());
    return m;
}

}  // namespace detail

inline void write(const std::string& path, const std::string& magic, const Document& doc) {
    nlohmann::json header = doc.header;
    header["blocks"] = nlohmann::json::array();
    for (const auto& b : doc.blocks) {
        std::int64_t count = 1;
        for (auto d : b.shape) count *= d;
        if (count != static_cast<std::int64_t>(b.data.size()))
            throw PreconditionError("block '" + b.name + "' shape does not match its data size");
        header["blocks"].push_back({{"name", b.name}, {"shape", b.shape}, {"count", count}});
    }
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    const auto m = detail::magic_bytes(magic);
    os.write(m.data(), 8);
    detail::put_u32(os, kVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : doc.blocks) detail::write_floats_le(os, b.data);
    if (!os) throw Error("failed writing '" + path + "'");
}

inline Document read(const std::string& path, const std::string& magic) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path + "'");
    std::array<char, 8> m{};
    is.read(m.data(), 8);
    if (!is || m != detail::magic_bytes(magic))
        throw FormatError("'" + path + "' is not a " + magic + " file");
    const std::uint32_t version = detail::get_u32(is);
    if (version != kVersion) throw FormatError("unsupported container version " + std::to_string(version));
    const std::uint32_t len = detail::get_u32(is);
    std::string text(len, '\0');
    is.read(text.data(), len);
    if (!is) throw FormatError("truncated header in '" + path + "'");

    Document doc;
    try {
        doc.header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad JSON header: ") + e.what());
    }
    if (!doc.header.contains("blocks")) throw FormatError("header lacks 'blocks'");
    for (const auto& jb : doc.header["blocks"]) {
        Block b;
        b.name = jb.at("name").get<std::string>();
        b.shape = jb.at("shape").get<std::vector<std::int64_t>>();
        const auto count = jb.at("count").get<std::int64_t>();
        if (count < 0) throw FormatError("negative block size");
        b.data.resize(static_cast<std::size_t>(count));
        detail::read_floats_le(is, b.data);
        doc.blocks.push_back(std::move(b));
    }
    return doc;
}

}  // namespace rigfield::container
