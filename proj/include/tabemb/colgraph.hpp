#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "tabemb/embed.hpp"
#include "tabemb/table.hpp"
#include "tabemb/types.hpp"

namespace tabemb {

struct Edge {
  int src;
  int dst;
  bool operator==(const Edge&) const = default;
};

struct GraphTopology {
  int num_nodes = 0;
  std::vector<Edge> edges;  // directed, includes self-loops

  std::vector<int> in_degrees() const;
};

// Column graph for one table: nodes are columns carrying their initial
// embeddings; the edge set is the complete directed graph with self-loops,
// built per block when block partitioning is active.
struct ColumnGraph {
  std::string table_id;
  Matrix features;  // n x d, rows are psi^(0)
  GraphTopology topo;
  std::vector<int> column_index;  // node -> original column index

  int num_nodes() const { return topo.num_nodes; }
  int dim() const { return static_cast<int>(features.cols()); }
};

// Splits 0..n-1 into ceil(n / block_size) consecutive blocks whose sizes
// differ by at most one; earlier blocks take the extra element.
std::vector<std::pair<int, int>> block_partition(int n, int block_size);  // [begin, end)

ColumnGraph construct_graph(const Table& table, const std::vector<Vector>& psi0,
                            std::optional<int> block_size = std::nullopt);

// Task labels of one pooled graph, resolved to ordinals at build time.
struct PoolLabels {
  std::vector<int> cta;                          // per column; -1 = unlabeled; empty = none
  std::vector<std::tuple<int, int, int>> cpa;    // (i, j, label ordinal)
  int tta = -1;                                  // -1 = unlabeled

  bool has_any(Task task) const;
};

struct PoolEntry {
  ColumnGraph graph;
  PoolLabels labels;
};

// Precomputed labeled graphs for one dataset split. Training runs entirely
// off the pool; the embedding backend is never touched once it is built.
struct GraphPool {
  std::vector<PoolEntry> entries;
  std::string backend_id;
  int dim = 0;
  int m = 0;
  uint64_t seed = 0;
  std::optional<int> block_size;
  std::array<uint64_t, kNumTasks> label_fingerprints{};  // 0 = space absent

  uint64_t config_hash() const;
  bool empty() const { return entries.empty(); }
  size_t size() const { return entries.size(); }
};

GraphPool build_graph_pool(const std::vector<AnnotatedTable>& split,
                           const std::array<std::optional<LabelSpace>, kNumTasks>& spaces,
                           EmbeddingBackend& backend, int m, uint64_t seed,
                           EmbeddingCache* cache = nullptr,
                           std::optional<int> block_size = std::nullopt, int jobs = 1);

void save_pool(const GraphPool& pool, const std::filesystem::path& path);
GraphPool load_pool(const std::filesystem::path& path);

// Canonical pool filename for a split under an embedding configuration.
std::string pool_file_name(const std::string& split, const GraphPool& pool);
std::string pool_file_name(const std::string& split, const std::string& backend_id, int dim,
                           int m, uint64_t seed, std::optional<int> block_size);

}  // namespace tabemb
