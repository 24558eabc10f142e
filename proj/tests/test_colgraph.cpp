#include <doctest.h>

#include <set>

#include "tabemb/colgraph.hpp"
#include "tabemb/synth.hpp"
#include "tabemb/util.hpp"
#include "test_support.hpp"

using namespace tabemb;
using tabemb::testing::TempDir;

namespace {

Table make_table(int n, int rows) {
  Table t;
  t.table_id = "t" + std::to_string(n);
  for (int c = 0; c < n; ++c) {
    Column col;
    for (int r = 0; r < rows; ++r)
      col.cells.emplace_back("c" + std::to_string(c) + "r" + std::to_string(r));
    t.columns.push_back(std::move(col));
  }
  return t;
}

std::vector<Vector> make_psi0(int n, int d) {
  std::vector<Vector> out;
  Rng rng(99);
  for (int i = 0; i < n; ++i) out.push_back(tabemb::testing::random_matrix(d, 1, rng).col(0));
  return out;
}

std::set<std::pair<int, int>> edge_set(const ColumnGraph& g) {
  std::set<std::pair<int, int>> out;
  for (const auto& e : g.topo.edges) out.emplace(e.src, e.dst);
  return out;
}

}  // namespace

TEST_CASE("block_partition") {
  CHECK(block_partition(12, 15) == std::vector<std::pair<int, int>>{{0, 12}});
  CHECK(block_partition(30, 15) == std::vector<std::pair<int, int>>{{0, 15}, {15, 30}});
  // ceil(31/15) = 3 balanced blocks: sizes 11, 10, 10.
  CHECK(block_partition(31, 15) ==
        std::vector<std::pair<int, int>>{{0, 11}, {11, 21}, {21, 31}});
  CHECK(block_partition(7, 3) == std::vector<std::pair<int, int>>{{0, 3}, {3, 5}, {5, 7}});
  CHECK_THROWS_AS(block_partition(0, 3), ValidationError);
  CHECK_THROWS_AS(block_partition(5, 1), ValidationError);

  SUBCASE("partition covers 0..n-1 in order with near-equal sizes") {
    Rng rng(1);
    for (int trial = 0; trial < 40; ++trial) {
      int n = rng.uniform_int(1, 80);
      int bs = rng.uniform_int(2, 20);
      auto blocks = block_partition(n, bs);
      CHECK(static_cast<int>(blocks.size()) == (n + bs - 1) / bs);
      int expect_begin = 0, min_size = n, max_size = 0;
      for (auto [begin, end] : blocks) {
        CHECK(begin == expect_begin);
        int size = end - begin;
        CHECK(size >= 1);
        CHECK(size <= bs);
        min_size = std::min(min_size, size);
        max_size = std::max(max_size, size);
        expect_begin = end;
      }
      CHECK(expect_begin == n);
      CHECK(max_size - min_size <= 1);
    }
  }
}

TEST_CASE("construct_graph") {
  SUBCASE("single column: one node, one self-loop") {
    ColumnGraph g = construct_graph(make_table(1, 2), make_psi0(1, 8));
    CHECK(g.num_nodes() == 1);
    REQUIRE(g.topo.edges.size() == 1);
    CHECK(g.topo.edges[0] == Edge{0, 0});
  }
  SUBCASE("n = 4 without blocking: all 16 ordered pairs including self-loops") {
    ColumnGraph g = construct_graph(make_table(4, 2), make_psi0(4, 8));
    CHECK(g.topo.edges.size() == 16);
    std::set<std::pair<int, int>> expected;
    for (int u = 0; u < 4; ++u)
      for (int v = 0; v < 4; ++v) expected.emplace(u, v);
    CHECK(edge_set(g) == expected);
  }
  SUBCASE("n = 7 with block_size 3: blocks {3, 2, 2}, 9 + 4 + 4 edges") {
    ColumnGraph g = construct_graph(make_table(7, 2), make_psi0(7, 8), 3);
    CHECK(g.topo.edges.size() == 17);
    auto edges = edge_set(g);
    CHECK(edges.count({0, 2}) == 1);
    CHECK(edges.count({0, 3}) == 0);  // across blocks
    CHECK(edges.count({3, 4}) == 1);
    CHECK(edges.count({5, 6}) == 1);
    CHECK(edges.count({4, 5}) == 0);
  }
  SUBCASE("blocking with block_size >= n degenerates to the full graph") {
    ColumnGraph full = construct_graph(make_table(5, 2), make_psi0(5, 8));
    ColumnGraph blocked = construct_graph(make_table(5, 2), make_psi0(5, 8), 9);
    CHECK(edge_set(full) == edge_set(blocked));
  }
  SUBCASE("symmetry and self-loop invariants on random sizes") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      int n = rng.uniform_int(1, 12);
      std::optional<int> bs;
      if (rng.uniform() < 0.5) bs = rng.uniform_int(2, 6);
      ColumnGraph g = construct_graph(make_table(n, 2), make_psi0(n, 8), bs);
      auto edges = edge_set(g);
      CHECK(edges.size() == g.topo.edges.size());  // no duplicates
      for (int i = 0; i < n; ++i) CHECK(edges.count({i, i}) == 1);
      for (const auto& [u, v] : edges) CHECK(edges.count({v, u}) == 1);
    }
  }
  SUBCASE("embedding width mismatch is rejected") {
    auto psi0 = make_psi0(3, 8);
    psi0[1] = Vector::Zero(9);
    CHECK_THROWS_AS(construct_graph(make_table(3, 2), psi0), ValidationError);
  }
}

TEST_CASE("graph pool build and persistence") {
  SynthConfig config;
  config.train_tables = 4;
  config.valid_tables = 0;
  config.test_tables = 0;
  config.seed = 11;
  Dataset ds = generate_synthetic(config);
  LocalHashEmbedder backend(32);

  SUBCASE("one labeled graph per table, in split order") {
    GraphPool pool = build_graph_pool(ds.train, ds.label_spaces, backend, 25, 5);
    REQUIRE(pool.size() == 4);
    for (size_t i = 0; i < pool.size(); ++i) {
      CHECK(pool.entries[i].graph.table_id == ds.train[i].table.table_id);
      CHECK(pool.entries[i].labels.cta.size() ==
            static_cast<size_t>(pool.entries[i].graph.num_nodes()));
      CHECK(pool.entries[i].labels.has_any(Task::Cta));
    }
    CHECK(pool.backend_id == backend.id());
  }

  SUBCASE("empty split is rejected") {
    std::vector<AnnotatedTable> empty;
    CHECK_THROWS_AS(build_graph_pool(empty, ds.label_spaces, backend, 25, 5), ValidationError);
  }

  SUBCASE("rebuild with a warm cache persists byte-identical pools") {
    TempDir dir("pool");
    EmbeddingCache cache(dir.path(), backend.id());
    GraphPool cold = build_graph_pool(ds.train, ds.label_spaces, backend, 25, 5, &cache);
    save_pool(cold, dir.path() / "a.bin");
    GraphPool warm = build_graph_pool(ds.train, ds.label_spaces, backend, 25, 5, &cache);
    save_pool(warm, dir.path() / "b.bin");
    CHECK(read_text_file(dir.path() / "a.bin") == read_text_file(dir.path() / "b.bin"));
    CHECK(fnv1a64(read_text_file(dir.path() / "a.bin")) ==
          fnv1a64(read_text_file(dir.path() / "b.bin")));
  }

  SUBCASE("parallel build matches sequential build") {
    GraphPool seq = build_graph_pool(ds.train, ds.label_spaces, backend, 25, 5, nullptr,
                                     std::nullopt, 1);
    GraphPool par = build_graph_pool(ds.train, ds.label_spaces, backend, 25, 5, nullptr,
                                     std::nullopt, 4);
    REQUIRE(seq.size() == par.size());
    for (size_t i = 0; i < seq.size(); ++i) {
      CHECK(seq.entries[i].graph.table_id == par.entries[i].graph.table_id);
      CHECK((seq.entries[i].graph.features - par.entries[i].graph.features)
                .cwiseAbs()
                .maxCoeff() == 0.0);
    }
  }

  SUBCASE("save/load round trip") {
    TempDir dir("poolrt");
    GraphPool pool = build_graph_pool(ds.train, ds.label_spaces, backend, 10, 5, nullptr, 3);
    auto path = dir.path() / pool_file_name("train", pool);
    save_pool(pool, path);
    GraphPool loaded = load_pool(path);
    REQUIRE(loaded.size() == pool.size());
    CHECK(loaded.backend_id == pool.backend_id);
    CHECK(loaded.m == 10);
    CHECK(loaded.block_size == std::optional<int>(3));
    CHECK(loaded.config_hash() == pool.config_hash());
    for (size_t i = 0; i < pool.size(); ++i) {
      CHECK((loaded.entries[i].graph.features - pool.entries[i].graph.features)
                .cwiseAbs()
                .maxCoeff() == 0.0);
      CHECK(loaded.entries[i].graph.topo.edges == pool.entries[i].graph.topo.edges);
      CHECK(loaded.entries[i].labels.cta == pool.entries[i].labels.cta);
      CHECK(loaded.entries[i].labels.cpa == pool.entries[i].labels.cpa);
      CHECK(loaded.entries[i].labels.tta == pool.entries[i].labels.tta);
    }
  }

  SUBCASE("truncated pool file is a structured error") {
    TempDir dir("pooltrunc");
    GraphPool pool = build_graph_pool(ds.train, ds.label_spaces, backend, 10, 5);
    auto path = dir.path() / "pool.bin";
    save_pool(pool, path);
    auto bytes = read_text_file(path);
    write_text_file(path, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_pool(path), ParseError);
  }
}
