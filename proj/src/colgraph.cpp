#include "tabemb/colgraph.hpp"

#include <algorithm>
#include <sstream>

#include "tabemb/util.hpp"

namespace tabemb {

std::vector<int> GraphTopology::in_degrees() const {
  std::vector<int> deg(static_cast<size_t>(num_nodes), 0);
  for (const auto& e : edges) ++deg[static_cast<size_t>(e.dst)];
  return deg;
}

std::vector<std::pair<int, int>> block_partition(int n, int block_size) {
  if (n < 1) throw ValidationError("block_partition: n must be >= 1");
  if (block_size < 2) throw ValidationError("block_partition: block size must be >= 2");
  int blocks = (n + block_size - 1) / block_size;
  int base = n / blocks;
  int extra = n % blocks;  // the first `extra` blocks take one more element
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<size_t>(blocks));
  int begin = 0;
  for (int b = 0; b < blocks; ++b) {
    int size = base + (b < extra ? 1 : 0);
    out.emplace_back(begin, begin + size);
    begin += size;
  }
  return out;
}

ColumnGraph construct_graph(const Table& table, const std::vector<Vector>& psi0,
                            std::optional<int> block_size) {
  validate_table(table);
  int n = table.num_columns();
  if (static_cast<int>(psi0.size()) != n)
    throw ValidationError("construct_graph: expected " + std::to_string(n) +
                          " embeddings, got " + std::to_string(psi0.size()));
  Eigen::Index d = psi0.front().size();
  for (const auto& v : psi0)
    if (v.size() != d)
      throw ValidationError("construct_graph: embedding dimension mismatch in table '" +
                            table.table_id + "'");

  ColumnGraph g;
  g.table_id = table.table_id;
  g.features.resize(n, d);
  for (int i = 0; i < n; ++i) g.features.row(i) = psi0[static_cast<size_t>(i)].transpose();
  g.topo.num_nodes = n;
  g.column_index.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) g.column_index[static_cast<size_t>(i)] = i;

  std::vector<std::pair<int, int>> blocks;
  if (block_size.has_value())
    blocks = block_partition(n, *block_size);
  else
    blocks.emplace_back(0, n);

  // Canonical edge order: grouped by destination, sources ascending. The
  // undirected complete graph within each block is stored as both directed
  // arcs; every node carries a self-loop.
  for (auto [begin, end] : blocks)
    for (int dst = begin; dst < end; ++dst)
      for (int src = begin; src < end; ++src) g.topo.edges.push_back({src, dst});
  return g;
}

bool PoolLabels::has_any(Task task) const {
  switch (task) {
    case Task::Cta:
      return std::any_of(cta.begin(), cta.end(), [](int l) { return l >= 0; });
    case Task::Cpa:
      return !cpa.empty();
    case Task::Tta:
      return tta >= 0;
  }
  return false;
}

namespace {

PoolLabels resolve_labels(const AnnotatedTable& at,
                          const std::array<std::optional<LabelSpace>, kNumTasks>& spaces) {
  auto ordinal = [&](Task task, const std::string& label) {
    const auto& space = spaces[static_cast<int>(task)];
    if (!space.has_value())
      throw ValidationError("table '" + at.table.table_id + "' carries " + to_string(task) +
                            " labels but the label space is absent");
    auto ord = space->ordinal_of(label);
    if (!ord.has_value())
      throw ValidationError("table '" + at.table.table_id + "': label '" + label +
                            "' not in the " + to_string(task) + " label space");
    return *ord;
  };
  PoolLabels labels;
  if (at.cta_labels.has_value()) {
    labels.cta.reserve(at.cta_labels->size());
    for (const auto& l : *at.cta_labels)
      labels.cta.push_back(l.has_value() ? ordinal(Task::Cta, *l) : -1);
  }
  if (at.cpa_labels.has_value()) {
    for (const auto& [i, j, label] : *at.cpa_labels)
      labels.cpa.emplace_back(i, j, ordinal(Task::Cpa, label));
  }
  if (at.tta_label.has_value()) labels.tta = ordinal(Task::Tta, *at.tta_label);
  return labels;
}

}  // namespace

GraphPool build_graph_pool(const std::vector<AnnotatedTable>& split,
                           const std::array<std::optional<LabelSpace>, kNumTasks>& spaces,
                           EmbeddingBackend& backend, int m, uint64_t seed,
                           EmbeddingCache* cache, std::optional<int> block_size, int jobs) {
  if (split.empty()) throw ValidationError("build_graph_pool: empty split");
  if (m < 1) throw ValidationError("build_graph_pool: m must be >= 1");
  GraphPool pool;
  pool.backend_id = backend.id();
  pool.dim = backend.dim();
  pool.m = m;
  pool.seed = seed;
  pool.block_size = block_size;
  for (int t = 0; t < kNumTasks; ++t)
    pool.label_fingerprints[static_cast<size_t>(t)] =
        spaces[t].has_value() ? spaces[t]->fingerprint() : 0;

  pool.entries.resize(split.size());
  parallel_for(split.size(), jobs, [&](size_t i) {
    const auto& at = split[i];
    auto psi0 = column_embeddings(at.table, backend, m, hash_mix(seed, fnv1a64(at.table.table_id)),
                                  cache);
    pool.entries[i].graph = construct_graph(at.table, psi0, block_size);
    pool.entries[i].labels = resolve_labels(at, spaces);
  });
  return pool;
}

uint64_t GraphPool::config_hash() const {
  uint64_t h = fnv1a64(backend_id);
  h = hash_mix(h, static_cast<uint64_t>(dim));
  h = hash_mix(h, static_cast<uint64_t>(m));
  h = hash_mix(h, seed);
  h = hash_mix(h, block_size.has_value() ? static_cast<uint64_t>(*block_size) + 1 : 0);
  return h;
}

namespace {
constexpr uint64_t kPoolMagic = 0x54414245'4d42504cull;  // "TABEMBPL"
constexpr uint32_t kPoolVersion = 1;
}  // namespace

void save_pool(const GraphPool& pool, const std::filesystem::path& path) {
  BinaryWriter w(path);
  w.u64(kPoolMagic);
  w.u32(kPoolVersion);
  w.u64(pool.config_hash());
  w.str(pool.backend_id);
  w.u32(static_cast<uint32_t>(pool.dim));
  w.u32(static_cast<uint32_t>(pool.m));
  w.u64(pool.seed);
  w.i32(pool.block_size.has_value() ? *pool.block_size : -1);
  for (uint64_t f : pool.label_fingerprints) w.u64(f);
  w.u32(static_cast<uint32_t>(pool.entries.size()));
  for (const auto& entry : pool.entries) {
    const auto& g = entry.graph;
    w.str(g.table_id);
    w.u32(static_cast<uint32_t>(g.num_nodes()));
    w.u32(static_cast<uint32_t>(g.dim()));
    FloatMatrix feat = g.features.cast<float>();
    for (int i = 0; i < feat.rows(); ++i)
      for (int j = 0; j < feat.cols(); ++j) w.f32(feat(i, j));
    w.u32(static_cast<uint32_t>(g.topo.edges.size()));
    for (const auto& e : g.topo.edges) {
      w.u32(static_cast<uint32_t>(e.src));
      w.u32(static_cast<uint32_t>(e.dst));
    }
    w.u8(entry.labels.cta.empty() ? 0 : 1);
    for (int l : entry.labels.cta) w.i32(l);
    w.u32(static_cast<uint32_t>(entry.labels.cpa.size()));
    for (const auto& [i, j, l] : entry.labels.cpa) {
      w.u32(static_cast<uint32_t>(i));
      w.u32(static_cast<uint32_t>(j));
      w.i32(l);
    }
    w.i32(entry.labels.tta);
  }
  w.close();
}

GraphPool load_pool(const std::filesystem::path& path) {
  BinaryReader r(path);
  if (r.u64() != kPoolMagic) throw ParseError("not a graph pool file: " + path.string());
  uint32_t version = r.u32();
  if (version != kPoolVersion)
    throw ParseError("unsupported pool version " + std::to_string(version) + " in " +
                     path.string());
  GraphPool pool;
  uint64_t stored_hash = r.u64();
  pool.backend_id = r.str();
  pool.dim = static_cast<int>(r.u32());
  pool.m = static_cast<int>(r.u32());
  pool.seed = r.u64();
  int32_t bs = r.i32();
  if (bs >= 0) pool.block_size = bs;
  for (auto& f : pool.label_fingerprints) f = r.u64();
  uint32_t count = r.u32();
  pool.entries.resize(count);
  for (auto& entry : pool.entries) {
    auto& g = entry.graph;
    g.table_id = r.str();
    int n = static_cast<int>(r.u32());
    int d = static_cast<int>(r.u32());
    g.features.resize(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) g.features(i, j) = static_cast<double>(r.f32());
    g.topo.num_nodes = n;
    uint32_t ne = r.u32();
    g.topo.edges.resize(ne);
    for (auto& e : g.topo.edges) {
      e.src = static_cast<int>(r.u32());
      e.dst = static_cast<int>(r.u32());
    }
    g.column_index.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) g.column_index[static_cast<size_t>(i)] = i;
    if (r.u8() != 0) {
      entry.labels.cta.resize(static_cast<size_t>(n));
      for (auto& l : entry.labels.cta) l = r.i32();
    }
    uint32_t np = r.u32();
    entry.labels.cpa.resize(np);
    for (auto& [i, j, l] : entry.labels.cpa) {
      i = static_cast<int>(r.u32());
      j = static_cast<int>(r.u32());
      l = r.i32();
    }
    entry.labels.tta = r.i32();
  }
  if (pool.config_hash() != stored_hash)
    throw ParseError("pool config hash mismatch in " + path.string());
  return pool;
}

std::string pool_file_name(const std::string& split, const std::string& backend_id, int dim,
                           int m, uint64_t seed, std::optional<int> block_size) {
  GraphPool probe;
  probe.backend_id = backend_id;
  probe.dim = dim;
  probe.m = m;
  probe.seed = seed;
  probe.block_size = block_size;
  return "pool_" + split + "_" + to_hex16(probe.config_hash()) + ".bin";
}

std::string pool_file_name(const std::string& split, const GraphPool& pool) {
  return pool_file_name(split, pool.backend_id, pool.dim, pool.m, pool.seed, pool.block_size);
}

}  // namespace tabemb
