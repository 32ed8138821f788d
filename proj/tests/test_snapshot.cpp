// SPDX-License-Identifier: MIT
#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "expertpde/snapshot.hpp"
#include "expertpde/solver.hpp"

using namespace expertpde;

namespace {

std::filesystem::path temp_path(const char* name) {
    const auto dir = std::filesystem::temp_directory_path() / "expertpde_snapshot_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

const SolveResult& solved() {
    static const SolveResult r = solve_sector(GridConfig::make(3, 12, 0.25));
    return r;
}

}  // namespace

TEST_CASE("snapshot round-trip is bit-identical", "[snapshot]") {
    const auto path = temp_path("roundtrip.snap");
    const SnapshotMeta meta{solved().stats.dt, solved().stats.final_residual,
                            solved().stats.iterations};
    save_field(solved().field, meta, path);

    const auto [loaded, loaded_meta] = load_field(path);
    CHECK(loaded.kind == GridKind::sector);
    CHECK(loaded.config == solved().field.config);
    REQUIRE(loaded.values.size() == solved().field.values.size());
    CHECK(std::memcmp(loaded.values.data(), solved().field.values.data(),
                      loaded.values.size() * sizeof(double)) == 0);
    CHECK(loaded_meta.dt == meta.dt);
    CHECK(loaded_meta.final_residual == meta.final_residual);
    CHECK(loaded_meta.iterations == meta.iterations);

    SECTION("saving again produces identical bytes") {
        const auto path2 = temp_path("roundtrip2.snap");
        save_field(solved().field, meta, path2);
        CHECK(read_bytes(path) == read_bytes(path2));
    }
    SECTION("the first payload value is the origin (rank 0)") {
        const SectorGrid grid(loaded.config);
        const Coords origin = grid.unrank(0);
        for (int k = 0; k < loaded.config.dim; ++k) CHECK(origin[k] == 0);
        CHECK(loaded.values[0] == solved().field.values[0]);
    }
}

TEST_CASE("snapshot corruption is detected, never returned as data", "[snapshot]") {
    const SnapshotMeta meta{0.01, 1e-6, 1234};
    const std::vector<std::uint8_t> good = encode_snapshot(solved().field, meta);

    SECTION("truncation") {
        std::vector<std::uint8_t> bad(good.begin(), good.end() - 17);
        CHECK_THROWS_WITH(decode_snapshot(bad, "test"),
                          Catch::Matchers::ContainsSubstring("truncated"));
        const std::vector<std::uint8_t> tiny(good.begin(), good.begin() + 10);
        CHECK_THROWS_WITH(decode_snapshot(tiny, "test"),
                          Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("flipped payload byte fails the checksum") {
        std::vector<std::uint8_t> bad = good;
        bad[100] ^= 0x40;
        CHECK_THROWS_WITH(decode_snapshot(bad, "test"),
                          Catch::Matchers::ContainsSubstring("checksum"));
    }
    SECTION("wrong magic") {
        std::vector<std::uint8_t> bad = good;
        bad[0] = 'Z';
        CHECK_THROWS_WITH(decode_snapshot(bad, "test"),
                          Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("future format version") {
        std::vector<std::uint8_t> bad = good;
        bad[8] = 2;  // version field, little-endian
        // keep the checksum consistent so the version check is what fires
        const std::uint32_t crc = expertpde::detail::crc32_of(bad.data(), bad.size() - 4);
        std::memcpy(bad.data() + bad.size() - 4, &crc, 4);
        CHECK_THROWS_WITH(decode_snapshot(bad, "test"),
                          Catch::Matchers::ContainsSubstring("unsupported version"));
    }
    SECTION("unknown grid kind") {
        std::vector<std::uint8_t> bad = good;
        bad[12] = 7;
        const std::uint32_t crc = expertpde::detail::crc32_of(bad.data(), bad.size() - 4);
        std::memcpy(bad.data() + bad.size() - 4, &crc, 4);
        CHECK_THROWS_WITH(decode_snapshot(bad, "test"),
                          Catch::Matchers::ContainsSubstring("grid kind"));
    }
    SECTION("node count inconsistent with the grid") {
        // hand-build a snapshot whose header claims one node too many and
        // whose payload/CRC are consistent with that claim
        std::vector<std::uint8_t> bad = good;
        std::uint64_t count = 0;
        std::memcpy(&count, bad.data() + 40, 8);
        const std::uint64_t wrong = count + 1;
        std::memcpy(bad.data() + 40, &wrong, 8);
        bad.resize(bad.size() - 4);                    // drop old CRC
        for (int i = 0; i < 8; ++i) bad.push_back(0);  // extra payload value
        const std::uint32_t crc = expertpde::detail::crc32_of(bad.data(), bad.size());
        for (int i = 0; i < 4; ++i)
            bad.push_back(static_cast<std::uint8_t>((crc >> (8 * i)) & 0xFF));
        CHECK_THROWS_WITH(decode_snapshot(bad, "test"),
                          Catch::Matchers::ContainsSubstring("node count"));
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_field(temp_path("does_not_exist.snap")), SnapshotError);
    }
}

TEST_CASE("snapshot detects header/payload disagreement on disk", "[snapshot]") {
    const auto path = temp_path("damaged.snap");
    const SnapshotMeta meta{0.01, 1e-6, 42};
    const std::vector<std::uint8_t> good = encode_snapshot(solved().field, meta);
    std::vector<std::uint8_t> shorter(good.begin(), good.end() - 24);
    write_bytes(path, shorter);
    CHECK_THROWS_AS(load_field(path), SnapshotError);
}
