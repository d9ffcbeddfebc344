#include "meshmotion/topology_cache.hpp"

#include "meshmotion/binary_io.hpp"

namespace meshmotion {

namespace {

constexpr std::string_view kMagic{"MMTOPO\0\0", 8};

void put_mesh(BinaryWriter& w, const Mesh& m) {
  w.put_u64(m.vertices.size());
  for (const Vec3& v : m.vertices) {
    for (double c : v) w.put_f64(c);
  }
  w.put_u64(m.faces.size());
  for (const Face& f : m.faces) {
    for (Index i : f) w.put_i32(i);
  }
}

Mesh get_mesh(BinaryReader& r) {
  Mesh m;
  m.vertices.resize(r.count(24));
  for (Vec3& v : m.vertices) {
    for (double& c : v) c = r.f64();
  }
  m.faces.resize(r.count(12));
  for (Face& f : m.faces) {
    for (Index& i : f) i = r.i32();
  }
  validate_mesh(m);
  return m;
}

void put_indices(BinaryWriter& w, const std::vector<Index>& v) {
  w.put_u64(v.size());
  for (Index i : v) w.put_i32(i);
}

std::vector<Index> get_indices(BinaryReader& r) {
  std::vector<Index> v(r.count(4));
  for (Index& i : v) i = r.i32();
  return v;
}

}  // namespace

bool operator==(const TopologyCache& a, const TopologyCache& b) {
  return a.hierarchy.levels == b.hierarchy.levels && a.hierarchy.up == b.hierarchy.up &&
         a.hierarchy.kept == b.hierarchy.kept && a.hierarchy.factors == b.hierarchy.factors &&
         a.spirals == b.spirals;
}

TopologyCache build_topology_cache(const Mesh& mesh, const std::vector<int>& factors, const SpiralConfig& spiral) {
  TopologyCache cache;
  cache.hierarchy = build_hierarchy(mesh, factors);
  cache.spirals = build_spiral_tables(cache.hierarchy, spiral);
  return cache;
}

std::string serialize_cache(const TopologyCache& cache) {
  const SamplingHierarchy& h = cache.hierarchy;
  BinaryWriter w;
  w.put_bytes(kMagic);
  w.put_u8(kCacheVersion);
  w.put_u64(cache.metadata.size());
  for (const auto& [k, v] : cache.metadata) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put_u64(h.levels.size());
  for (const Mesh& m : h.levels) put_mesh(w, m);
  w.put_u64(h.factors.size());
  for (int f : h.factors) w.put_i32(f);
  w.put_u64(h.up.size());
  for (std::size_t k = 0; k < h.up.size(); ++k) {
    put_indices(w, h.kept[k]);
    const SparseMatrix& q = h.up[k];
    w.put_u64(static_cast<std::uint64_t>(q.rows()));
    w.put_u64(static_cast<std::uint64_t>(q.cols()));
    w.put_u64(q.entries().size());
    for (const Triplet& t : q.entries()) {
      w.put_i32(t.row);
      w.put_i32(t.col);
      w.put_f64(t.weight);
    }
  }
  w.put_u64(cache.spirals.size());
  for (const SpiralTable& t : cache.spirals) {
    w.put_i32(t.level);
    w.put_i32(t.rings);
    w.put_i32(t.length);
    w.put_i32(t.reference_vertex);
    put_indices(w, t.indices);
  }
  return w.bytes();
}

TopologyCache parse_cache(std::string bytes, const std::string& what) {
  BinaryReader r(std::move(bytes), what);
  if (r.take(kMagic.size()) != kMagic) throw Error(what + ": not a topology cache (bad magic)");
  const std::uint8_t version = r.u8();
  if (version != kCacheVersion) {
    throw Error(what + ": cache version " + std::to_string(version) + " does not match expected " +
                std::to_string(kCacheVersion));
  }
  TopologyCache cache;
  const std::uint64_t n_meta = r.count(16);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.string();
    cache.metadata[std::move(k)] = r.string();
  }
  SamplingHierarchy& h = cache.hierarchy;
  const std::uint64_t n_levels = r.count(16);
  for (std::uint64_t i = 0; i < n_levels; ++i) h.levels.push_back(get_mesh(r));
  const std::uint64_t n_factors = r.count(4);
  for (std::uint64_t i = 0; i < n_factors; ++i) h.factors.push_back(r.i32());
  const std::uint64_t n_up = r.count(32);
  if (n_levels == 0 || n_up != n_levels - 1) throw Error(what + ": level and up-matrix counts disagree");
  for (std::uint64_t k = 0; k < n_up; ++k) {
    h.kept.push_back(get_indices(r));
    const auto rows = static_cast<Index>(r.u64());
    const auto cols = static_cast<Index>(r.u64());
    std::vector<Triplet> entries(r.count(16));
    for (Triplet& t : entries) {
      t.row = r.i32();
      t.col = r.i32();
      t.weight = r.f64();
    }
    if (rows != h.levels[k + 1].num_vertices() || cols != h.levels[k].num_vertices()) {
      throw Error(what + ": up-matrix shape does not match level sizes");
    }
    h.up.emplace_back(rows, cols, std::move(entries));
  }
  const std::uint64_t n_tables = r.count(24);
  for (std::uint64_t i = 0; i < n_tables; ++i) {
    SpiralTable t;
    t.level = r.i32();
    t.rings = r.i32();
    t.length = r.i32();
    t.reference_vertex = r.i32();
    t.indices = get_indices(r);
    if (t.level < 0 || static_cast<std::uint64_t>(t.level) >= n_levels || t.length <= 0 ||
        t.indices.size() != static_cast<std::size_t>(h.levels[t.level].num_vertices()) * t.length) {
      throw Error(what + ": malformed spiral table " + std::to_string(i));
    }
    cache.spirals.push_back(std::move(t));
  }
  if (!r.done()) throw Error(what + ": trailing bytes");
  return cache;
}

void save_cache(const TopologyCache& cache, const std::filesystem::path& path) {
  BinaryWriter w;
  w.put_bytes(serialize_cache(cache));
  w.write_file(path);
}

TopologyCache load_cache(const std::filesystem::path& path) {
  return parse_cache(read_binary_file(path), path.string());
}

std::string cache_hash(const TopologyCache& cache) {
  if (cache.metadata.empty()) return hex64(fnv1a64(serialize_cache(cache)));
  TopologyCache bare = cache;
  bare.metadata.clear();
  return hex64(fnv1a64(serialize_cache(bare)));
}

}  // namespace meshmotion
