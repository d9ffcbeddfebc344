#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "meshmotion/sampling.hpp"
#include "meshmotion/spiral.hpp"

namespace meshmotion {

/// Everything precomputed once per template topology: the sampling pyramid
/// and one spiral table per level.
struct TopologyCache {
  SamplingHierarchy hierarchy;
  std::vector<SpiralTable> spirals;
  /// Free-form provenance (e.g. the config hash); not part of cache_hash.
  std::map<std::string, std::string> metadata;

  const Mesh& finest() const { return hierarchy.levels.back(); }
  friend bool operator==(const TopologyCache& a, const TopologyCache& b);
};

inline constexpr std::uint8_t kCacheVersion = 2;

TopologyCache build_topology_cache(const Mesh& mesh, const std::vector<int>& factors, const SpiralConfig& spiral);

/// Container layout: 8-byte magic "MMTOPO\0\0", version byte, metadata
/// strings, then little-endian u64 counts followed by level meshes, factors, kept maps,
/// up-matrix triplets and spiral tables.
std::string serialize_cache(const TopologyCache& cache);
TopologyCache parse_cache(std::string bytes, const std::string& what = "cache");

void save_cache(const TopologyCache& cache, const std::filesystem::path& path);
TopologyCache load_cache(const std::filesystem::path& path);

/// Content hash of the serialized cache without its metadata, recorded in
/// checkpoints and outputs.
std::string cache_hash(const TopologyCache& cache);

}  // namespace meshmotion
