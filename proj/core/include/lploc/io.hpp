#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lploc/grid.hpp"
#include "lploc/net.hpp"
#include "lploc/world.hpp"

namespace lploc {

// Map tile, magic "BEVM": version, dims, resolution, origin, then
// channel-major row-major f32 little-endian payload.
void write_bevm(const std::filesystem::path& path, const BevGrid& grid);
BevGrid read_bevm(const std::filesystem::path& path);

// Point cloud, magic "LPC1": count, then (x, y, z, intensity) f32 records.
void write_lpc(const std::filesystem::path& path, std::span<const LidarPoint> points);
std::vector<LidarPoint> read_lpc(const std::filesystem::path& path);

// Localizer checkpoint, magic "LPW1": the frozen coarse base, the map and
// online branches, and the fusion parameters.
struct LocalizerWeights {
    ConvStack base;
    ConvStack f;
    ConvStack g;
    FusionParams fusion;
    bool use_fusion = false;
};

void write_lpw(const std::filesystem::path& path, const LocalizerWeights& w);
LocalizerWeights read_lpw(const std::filesystem::path& path);

// Scenario manifests: one JSON document per scenario next to a shared map
// tile. Maps are deduplicated through a cache when loading a directory.
void save_world(const std::filesystem::path& dir, std::span<const Scenario> scenarios);
std::vector<Scenario> load_world(const std::filesystem::path& dir);

std::uint64_t file_digest(const std::filesystem::path& path);

}  // namespace lploc
