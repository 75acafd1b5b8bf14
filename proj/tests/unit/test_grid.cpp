#include <set>

#include "doctest.h"
#include "helpers.hpp"

using namespace ddvar;
using testing::randn;

TEST_CASE("tiling 40x32 into 2x4 gives 20x8 owned blocks") {
  const Grid g{40, 32, 1, 1, 0.1, 1};
  const TileLayout t = build_tiles(g, 2, 4, 2);
  REQUIRE(t.tiles.size() == 8);
  for (const Tile& tile : t.tiles) {
    CHECK(tile.i1 - tile.i0 == 20);
    CHECK(tile.j1 - tile.j0 == 8);
    CHECK(tile.owned_size() == 160);
  }
}

TEST_CASE("single tile has no halo sets") {
  const TileLayout t = build_tiles({10, 10, 1, 1, 0.1, 1}, 1, 1, 2);
  REQUIRE(t.tiles.size() == 1);
  CHECK(t.tiles[0].halos.empty());
  CHECK(t.tiles[0].box_size() == 100);
}

TEST_CASE("east HI set of tile 0 is the west owned column of tile 1") {
  const Grid g{10, 8, 1, 1, 0.1, 1};
  const TileLayout t = build_tiles(g, 2, 2, 1);
  const Tile& t0 = t.tiles[0];
  CHECK(t0.i1 == 5);
  CHECK(t0.j1 == 4);
  const HaloSet* east = nullptr;
  for (const HaloSet& h : t0.halos)
    if (h.direction == Direction::I && h.neighbor == 1) east = &h;
  REQUIRE(east != nullptr);
  std::vector<int> expect;
  for (int j = 0; j < 4; ++j) expect.push_back(g.index(5, j));
  CHECK(east->cells == expect);
  for (int c : east->cells) CHECK(t.owner[c] == 1);
}

TEST_CASE("halo wider than a block is rejected") {
  CHECK_THROWS_AS(build_tiles({8, 8, 1, 1, 0.1, 1}, 4, 1, 3), InvalidArgument);
  CHECK_THROWS_AS(build_tiles({8, 8, 1, 1, 0.1, 1}, 0, 1, 1), InvalidArgument);
}

TEST_CASE("split_extent gives the remainder to low-index parts") {
  CHECK(split_extent(10, 3) == std::vector<int>{4, 3, 3});
  CHECK(split_extent(8, 2) == std::vector<int>{4, 4});
}

TEST_CASE("ownership partitions the grid and halos map to neighbor owned cells") {
  for (bool periodic : {false, true}) {
    for (auto [ni, nj] : {std::pair{2, 4}, {3, 2}, {1, 3}, {4, 4}}) {
      const Grid g{17, 19, 1, 1, 0.1, 1};
      const TileLayout t = build_tiles(g, ni, nj, 2, periodic);
      std::vector<int> count(g.cells(), 0);
      long total = 0;
      for (const Tile& tile : t.tiles) {
        total += tile.owned_size();
        for (int c : tile.owned) ++count[c];
        for (const HaloSet& h : tile.halos) {
          const Tile& nb = t.tiles[h.neighbor];
          for (std::size_t q = 0; q < h.cells.size(); ++q) {
            CHECK(t.owner[h.cells[q]] == h.neighbor);
            CHECK(nb.box[h.source[q]] == h.cells[q]);
            CHECK(tile.box[h.local[q]] == h.cells[q]);
          }
        }
      }
      CHECK(total == g.cells());
      for (int c : count) CHECK(c == 1);
    }
  }
}

TEST_CASE("time windows share endpoints") {
  TimeWindows w = build_time_windows(9, 3);
  CHECK(w.sizes == std::vector<int>{4, 4, 4});
  CHECK(w.starts == std::vector<int>{0, 3, 6});
  w = build_time_windows(9, 1);
  CHECK(w.sizes == std::vector<int>{10});
  CHECK(w.starts == std::vector<int>{0});
  w = build_time_windows(7, 2);
  CHECK(w.sizes == std::vector<int>{5, 4});
  CHECK(w.starts == std::vector<int>{0, 4});
  CHECK(w.window_of_time(0) == 0);
  CHECK(w.window_of_time(4) == 0);
  CHECK(w.window_of_time(5) == 1);
  CHECK(w.window_of_step(4) == 0);
  CHECK(w.window_of_step(5) == 1);
  CHECK_THROWS_AS(build_time_windows(3, 4), InvalidArgument);
}

TEST_CASE("window size constraint holds for all splits") {
  for (int n = 1; n <= 30; ++n) {
    for (int nt = 1; nt <= n; ++nt) {
      const TimeWindows w = build_time_windows(n, nt);
      int sum = 0;
      for (int s : w.sizes) sum += s;
      CHECK(sum - (nt - 1) == n + 1);
      CHECK(w.end(nt - 1) == n);
    }
  }
}

TEST_CASE("restriction reproduces global indexing") {
  const Grid g{12, 6, 1, 1, 0.1, 1};
  Vector f(g.cells());
  for (int c = 0; c < g.cells(); ++c) f[c] = g.col(c) + 100.0 * g.row(c);
  const TileLayout t = build_tiles(g, 2, 1, 2);
  const LocalField lf = restrict_field(f, t, 1, true);
  for (int q = 0; q < t.tiles[1].box_size(); ++q) {
    const int c = t.tiles[1].box[q];
    CHECK(lf.data[q] == g.col(c) + 100.0 * g.row(c));
  }
  const LocalField ones = restrict_field(Vector::Ones(g.cells()), t, 0, true);
  CHECK(ones.data.isOnes());
  const TileLayout single = build_tiles(g, 1, 1, 2);
  CHECK(restrict_field(f, single, 0, true).data == f);
}

TEST_CASE("assemble inverts restriction and ignores halo corruption") {
  std::mt19937_64 rng(1);
  const Grid g{16, 12, 1, 1, 0.1, 1};
  for (int nf = 1; nf <= 2; ++nf) {
    const TileLayout t = build_tiles(g, 2, 3, 2);
    const Vector f = randn(nf * g.cells(), rng);
    std::vector<LocalField> locals;
    for (int i = 0; i < t.n_sub(); ++i) locals.push_back(restrict_field(f, t, i, true, nf));
    CHECK(assemble(locals, t) == f);
    for (int i = 0; i < t.n_sub(); ++i)
      for (int a = 0; a < nf; ++a)
        for (int q : t.tiles[i].halo_local) locals[i].data[a * t.tiles[i].box_size() + q] = 1e9;
    CHECK(assemble(locals, t) == f);
    locals.pop_back();
    CHECK_THROWS(assemble(locals, t));
  }
}
