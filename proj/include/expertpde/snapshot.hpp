// SPDX-License-Identifier: MIT
/**
 * @file snapshot.hpp
 * @brief Binary field snapshots: solver output persisted for later
 *        analysis, checkpoint/resume, and cross-implementation exchange.
 *
 * Layout (all integers and doubles little-endian):
 *
 *   offset  size  field
 *   0       8     magic "EXPWFLD1"
 *   8       4     format version (u32, currently 1)
 *   12      4     grid kind (u32: 0 sector, 1 full)
 *   16      4     n_experts (u32)
 *   20      4     reduced dimension d (u32)
 *   24      8     m, nodes per axis above zero (i64)
 *   32      8     grid spacing h (f64)
 *   40      8     node count (u64)
 *   48      8     relaxation step dt (f64)
 *   56      8     final residual (f64)
 *   64      8     iterations (u64)
 *   72      8N    payload: N node values (f64), ascending rank order
 *   72+8N   4     CRC-32 over bytes [0, 72+8N)
 */
#pragma once

#include <zlib.h>

#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include "expertpde/field.hpp"

namespace expertpde {

class SnapshotError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SnapshotMeta {
    double dt = 0.0;
    double final_residual = 0.0;
    std::uint64_t iterations = 0;
};

namespace detail {

inline constexpr char kSnapshotMagic[8] = {'E', 'X', 'P', 'W', 'F', 'L', 'D', '1'};
inline constexpr std::uint32_t kSnapshotVersion = 1;
inline constexpr std::size_t kHeaderBytes = 72;

template <class T>
inline void put_le(std::vector<std::uint8_t>& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    out.insert(out.end(), raw, raw + sizeof(T));
}

template <class T>
inline T get_le(const std::uint8_t* p) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
}

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t len) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (len > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        len -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

/// Serializes a snapshot to bytes (exact on-disk representation).
inline std::vector<std::uint8_t> encode_snapshot(const Field& f, const SnapshotMeta& meta) {
    if (f.values.size() != expected_count(f.kind, f.config))
        throw SnapshotError("snapshot: field size does not match its grid");
    std::vector<std::uint8_t> out;
    out.reserve(detail::kHeaderBytes + 8 * f.values.size() + 4);
    out.insert(out.end(), detail::kSnapshotMagic, detail::kSnapshotMagic + 8);
    detail::put_le<std::uint32_t>(out, detail::kSnapshotVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.kind));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.config.n_experts));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.config.dim));
    detail::put_le<std::int64_t>(out, f.config.m);
    detail::put_le<double>(out, f.config.h);
    detail::put_le<std::uint64_t>(out, f.values.size());
    detail::put_le<double>(out, meta.dt);
    detail::put_le<double>(out, meta.final_residual);
    detail::put_le<std::uint64_t>(out, meta.iterations);
    for (const double v : f.values) detail::put_le<double>(out, v);
    detail::put_le<std::uint32_t>(out, detail::crc32_of(out.data(), out.size()));
    return out;
}

/// Writes a snapshot with fsync-before-success semantics.
inline void save_field(const Field& f, const SnapshotMeta& meta,
                       const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = encode_snapshot(f, meta);
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0)
        throw SnapshotError("snapshot: cannot open " + path.string() + " for writing: " +
                            std::strerror(errno));
    std::size_t written = 0;
    while (written < bytes.size()) {
        const ssize_t n = ::write(fd, bytes.data() + written, bytes.size() - written);
        if (n < 0) {
            const std::string err = std::strerror(errno);
            ::close(fd);
            throw SnapshotError("snapshot: write failed for " + path.string() + ": " + err);
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        const std::string err = std::strerror(errno);
        ::close(fd);
        throw SnapshotError("snapshot: fsync failed for " + path.string() + ": " + err);
    }
    ::close(fd);
}

/// Parses snapshot bytes, validating magic, version, counts, and checksum.
inline std::pair<Field, SnapshotMeta> decode_snapshot(const std::vector<std::uint8_t>& bytes,
                                                      const std::string& origin) {
    using namespace detail;
    if (bytes.size() < kHeaderBytes + 4)
        throw SnapshotError("snapshot: " + origin + " is truncated (" +
                            std::to_string(bytes.size()) + " bytes)");
    if (std::memcmp(bytes.data(), kSnapshotMagic, 8) != 0)
        throw SnapshotError("snapshot: " + origin + " is not a field snapshot (bad magic)");
    const auto version = get_le<std::uint32_t>(bytes.data() + 8);
    if (version > kSnapshotVersion)
        throw SnapshotError("snapshot: " + origin + " has unsupported version " +
                            std::to_string(version) + " (supported <= " +
                            std::to_string(kSnapshotVersion) + ")");
    const auto kind_raw = get_le<std::uint32_t>(bytes.data() + 12);
    if (kind_raw > 1)
        throw SnapshotError("snapshot: " + origin + " has unknown grid kind " +
                            std::to_string(kind_raw));
    const auto kind = static_cast<GridKind>(kind_raw);
    const auto n_experts = get_le<std::uint32_t>(bytes.data() + 16);
    const auto dim = get_le<std::uint32_t>(bytes.data() + 20);
    const auto m = get_le<std::int64_t>(bytes.data() + 24);
    const auto h = get_le<double>(bytes.data() + 32);
    const auto count = get_le<std::uint64_t>(bytes.data() + 40);

    SnapshotMeta meta;
    meta.dt = get_le<double>(bytes.data() + 48);
    meta.final_residual = get_le<double>(bytes.data() + 56);
    meta.iterations = get_le<std::uint64_t>(bytes.data() + 64);

    const std::size_t expected_size = kHeaderBytes + 8 * count + 4;
    if (bytes.size() != expected_size)
        throw SnapshotError("snapshot: " + origin + " is truncated or oversized (expected " +
                            std::to_string(expected_size) + " bytes, have " +
                            std::to_string(bytes.size()) + ")");
    const auto stored_crc = get_le<std::uint32_t>(bytes.data() + bytes.size() - 4);
    if (stored_crc != crc32_of(bytes.data(), bytes.size() - 4))
        throw SnapshotError("snapshot: " + origin + " checksum mismatch");

    GridConfig cfg = GridConfig::make(static_cast<int>(n_experts), m, h);
    if (static_cast<std::uint32_t>(cfg.dim) != dim)
        throw SnapshotError("snapshot: " + origin + " header dimension is inconsistent");
    if (count != expected_count(kind, cfg))
        throw SnapshotError("snapshot: " + origin + " node count " + std::to_string(count) +
                            " does not match the grid (" +
                            std::to_string(expected_count(kind, cfg)) + ")");

    Field f;
    f.kind = kind;
    f.config = cfg;
    f.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i)
        f.values[i] = get_le<double>(bytes.data() + kHeaderBytes + 8 * i);
    return {std::move(f), meta};
}

inline std::pair<Field, SnapshotMeta> load_field(const std::filesystem::path& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp)
        throw SnapshotError("snapshot: cannot open " + path.string() + ": " +
                            std::strerror(errno));
    std::vector<std::uint8_t> bytes;
    std::uint8_t buf[1 << 16];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof(buf), fp)) > 0)
        bytes.insert(bytes.end(), buf, buf + n);
    const bool read_error = std::ferror(fp) != 0;
    std::fclose(fp);
    if (read_error) throw SnapshotError("snapshot: read failed for " + path.string());
    return decode_snapshot(bytes, path.string());
}

}  // namespace expertpde
