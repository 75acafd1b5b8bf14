#include "ddvar/grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace ddvar {

void Grid::validate() const {
  require(nx >= 4, "grid: nx must be >= 4");
  require(ny >= 4, "grid: ny must be >= 4");
  require(dx > 0 && dy > 0, "grid: dx and dy must be positive");
  require(dt > 0, "grid: dt must be positive");
  require(n_steps >= 1, "grid: n_steps must be >= 1");
}

std::vector<int> split_extent(int n, int parts) {
  require(parts >= 1 && parts <= n, "tile count must be between 1 and the grid extent");
  std::vector<int> sizes(parts, n / parts);
  for (int p = 0; p < n % parts; ++p) ++sizes[p];
  return sizes;
}

namespace {

int wrap(int a, int n) { return ((a % n) + n) % n; }

}  // namespace

TileLayout build_tiles(const Grid& grid, int ntile_i, int ntile_j, int halo, bool periodic) {
  grid.validate();
  require(ntile_i >= 1, "ntile_i must be >= 1");
  require(ntile_j >= 1, "ntile_j must be >= 1");
  require(halo >= 1, "halo must be >= 1");
  const std::vector<int> wi = split_extent(grid.nx, ntile_i);
  const std::vector<int> wj = split_extent(grid.ny, ntile_j);
  const int min_i = ntile_i > 1 ? *std::min_element(wi.begin(), wi.end()) : grid.nx;
  const int min_j = ntile_j > 1 ? *std::min_element(wj.begin(), wj.end()) : grid.ny;
  if (halo > std::min(min_i, min_j)) {
    throw InvalidArgument("halo width " + std::to_string(halo) +
                          " exceeds the smallest tile interior (" +
                          std::to_string(std::min(min_i, min_j)) + " cells)");
  }

  TileLayout layout;
  layout.grid = grid;
  layout.ntile_i = ntile_i;
  layout.ntile_j = ntile_j;
  layout.halo = halo;
  layout.periodic = periodic;
  layout.owner.assign(grid.cells(), -1);

  std::vector<int> oi(ntile_i + 1, 0), oj(ntile_j + 1, 0);
  for (int t = 0; t < ntile_i; ++t) oi[t + 1] = oi[t] + wi[t];
  for (int t = 0; t < ntile_j; ++t) oj[t + 1] = oj[t] + wj[t];

  for (int tj = 0; tj < ntile_j; ++tj) {
    for (int ti = 0; ti < ntile_i; ++ti) {
      Tile tile;
      tile.id = ti + ntile_i * tj;
      tile.ti = ti;
      tile.tj = tj;
      tile.i0 = oi[ti];
      tile.i1 = oi[ti + 1];
      tile.j0 = oj[tj];
      tile.j1 = oj[tj + 1];
      for (int j = tile.j0; j < tile.j1; ++j)
        for (int i = tile.i0; i < tile.i1; ++i) layout.owner[grid.index(i, j)] = tile.id;
      layout.tiles.push_back(std::move(tile));
    }
  }

  for (Tile& tile : layout.tiles) {
    const bool west = ntile_i > 1 && (periodic || tile.ti > 0);
    const bool east = ntile_i > 1 && (periodic || tile.ti < ntile_i - 1);
    const bool south = ntile_j > 1 && (periodic || tile.tj > 0);
    const bool north = ntile_j > 1 && (periodic || tile.tj < ntile_j - 1);
    const int ei0 = tile.i0 - (west ? halo : 0);
    const int ei1 = tile.i1 + (east ? halo : 0);
    const int ej0 = tile.j0 - (south ? halo : 0);
    const int ej1 = tile.j1 + (north ? halo : 0);
    if (ei1 - ei0 > grid.nx || ej1 - ej0 > grid.ny) {
      throw InvalidArgument("periodic tile box wraps onto itself; reduce halo or tile count");
    }
    std::map<std::pair<int, int>, HaloSet> sets;
    for (int jj = ej0; jj < ej1; ++jj) {
      for (int ii = ei0; ii < ei1; ++ii) {
        const int cell = grid.index(wrap(ii, grid.nx), wrap(jj, grid.ny));
        const int pos = static_cast<int>(tile.box.size());
        tile.box.push_back(cell);
        const bool in_i = ii >= tile.i0 && ii < tile.i1;
        const bool in_j = jj >= tile.j0 && jj < tile.j1;
        if (in_i && in_j) {
          tile.owned.push_back(cell);
          tile.owned_local.push_back(pos);
          continue;
        }
        tile.halo_local.push_back(pos);
        const Direction dir = in_j ? Direction::I : Direction::J;
        const int nbr = layout.owner[cell];
        HaloSet& set = sets[{static_cast<int>(dir), nbr}];
        set.direction = dir;
        set.neighbor = nbr;
        set.cells.push_back(cell);
        set.local.push_back(pos);
      }
    }
    for (auto& [key, set] : sets) {
      auto& list = set.direction == Direction::I ? tile.neighbors_i : tile.neighbors_j;
      if (std::find(list.begin(), list.end(), set.neighbor) == list.end()) list.push_back(set.neighbor);
      tile.halos.push_back(std::move(set));
    }
    std::sort(tile.neighbors_i.begin(), tile.neighbors_i.end());
    std::sort(tile.neighbors_j.begin(), tile.neighbors_j.end());
  }
  std::vector<std::vector<int>> pos(layout.n_sub(), std::vector<int>(grid.cells(), -1));
  for (const Tile& t : layout.tiles)
    for (int q = 0; q < t.box_size(); ++q) pos[t.id][t.box[q]] = q;
  for (Tile& t : layout.tiles)
    for (HaloSet& set : t.halos)
      for (int c : set.cells) set.source.push_back(pos[set.neighbor][c]);
  return layout;
}

TimeWindows build_time_windows(int n_steps, int n_t) {
  require(n_steps >= 1, "time windows: n_steps must be >= 1");
  require(n_t >= 1, "time windows: n_t must be >= 1");
  if (n_t > n_steps) {
    throw InvalidArgument("time windows: n_t (" + std::to_string(n_t) + ") exceeds n_steps (" +
                          std::to_string(n_steps) + ")");
  }
  TimeWindows w;
  w.n_steps = n_steps;
  w.n_t = n_t;
  const int points = n_steps + n_t;
  int start = 0;
  for (int k = 0; k < n_t; ++k) {
    const int size = points / n_t + (k < points % n_t ? 1 : 0);
    w.starts.push_back(start);
    w.sizes.push_back(size);
    start += size - 1;
  }
  return w;
}

int TimeWindows::window_of_step(int l) const {
  require(l >= 1 && l <= n_steps, "step index out of range");
  for (int k = 0; k < n_t; ++k)
    if (l > starts[k] && l <= end(k)) return k;
  throw InvalidArgument("step index not covered by any window");
}

int TimeWindows::window_of_time(int l) const {
  require(l >= 0 && l <= n_steps, "time index out of range");
  return l == 0 ? 0 : window_of_step(l);
}

LocalField restrict_field(const Vector& field, const TileLayout& layout, int tile, bool with_halo,
                          int n_fields, int window) {
  const int nc = layout.grid.cells();
  require(field.size() == static_cast<long>(n_fields) * nc, "restrict: field shape does not match grid");
  require(tile >= 0 && tile < layout.n_sub(), "restrict: tile id out of range");
  const Tile& t = layout.tiles[tile];
  const std::vector<int>& cells = with_halo ? t.box : t.owned;
  const int m = static_cast<int>(cells.size());
  LocalField out;
  out.tile = tile;
  out.window = window;
  out.n_fields = n_fields;
  out.with_halo = with_halo;
  out.data.resize(static_cast<long>(n_fields) * m);
  for (int f = 0; f < n_fields; ++f)
    for (int c = 0; c < m; ++c) out.data[f * m + c] = field[f * nc + cells[c]];
  return out;
}

Vector assemble(const std::vector<LocalField>& locals, const TileLayout& layout) {
  require(!locals.empty(), "assemble: no local fields");
  const int n_fields = locals.front().n_fields;
  const int window = locals.front().window;
  const int nc = layout.grid.cells();
  std::vector<const LocalField*> by_tile(layout.n_sub(), nullptr);
  for (const LocalField& lf : locals) {
    require(lf.tile >= 0 && lf.tile < layout.n_sub(), "assemble: tile id out of range");
    require(lf.window == window, "assemble: local fields from different windows");
    require(lf.n_fields == n_fields, "assemble: inconsistent field counts");
    by_tile[lf.tile] = &lf;
  }
  Vector g(static_cast<long>(n_fields) * nc);
  for (int id = 0; id < layout.n_sub(); ++id) {
    if (by_tile[id] == nullptr) throw InvalidArgument("assemble: missing tile " + std::to_string(id));
    const LocalField& lf = *by_tile[id];
    const Tile& t = layout.tiles[id];
    const int m = lf.with_halo ? t.box_size() : t.owned_size();
    require(lf.data.size() == static_cast<long>(n_fields) * m, "assemble: local field shape mismatch");
    for (int f = 0; f < n_fields; ++f) {
      for (int q = 0; q < t.owned_size(); ++q) {
        const int pos = lf.with_halo ? t.owned_local[q] : q;
        g[f * nc + t.owned[q]] = lf.data[f * m + pos];
      }
    }
  }
  return g;
}

}  // namespace ddvar
