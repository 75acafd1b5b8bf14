#pragma once

#include <vector>

#include "ddvar/types.hpp"

namespace ddvar {

struct Grid {
  int nx = 0;
  int ny = 0;
  double dx = 1.0;
  double dy = 1.0;
  double dt = 0.1;
  int n_steps = 1;

  void validate() const;
  int cells() const { return nx * ny; }
  int index(int i, int j) const { return i + nx * j; }
  int col(int cell) const { return cell % nx; }
  int row(int cell) const { return cell / nx; }
};

enum class Direction { I = 0, J = 1 };

// Halo cells of a tile owned by one neighbor. HI sets lie beside the tile in x,
// HJ sets above/below it (corners included).
struct HaloSet {
  Direction direction = Direction::I;
  int neighbor = -1;
  std::vector<int> cells;  // global cell ids, box order
  std::vector<int> local;  // positions in the tile box
  std::vector<int> source;  // positions of the same cells in the neighbor's box
};

struct Tile {
  int id = 0;
  int ti = 0, tj = 0;
  int i0 = 0, i1 = 0, j0 = 0, j1 = 0;  // owned [i0,i1) x [j0,j1)
  std::vector<int> box;                // owned + halo cells, row-major over the extended box
  std::vector<int> owned;              // global ids of owned cells
  std::vector<int> owned_local;        // their positions in the box
  std::vector<int> halo_local;         // positions of non-owned box cells
  std::vector<HaloSet> halos;          // sorted by (direction, neighbor)
  std::vector<int> neighbors_i;
  std::vector<int> neighbors_j;

  int box_size() const { return static_cast<int>(box.size()); }
  int owned_size() const { return static_cast<int>(owned.size()); }
};

struct TileLayout {
  Grid grid;
  int ntile_i = 1;
  int ntile_j = 1;
  int halo = 2;
  bool periodic = false;
  std::vector<Tile> tiles;
  std::vector<int> owner;  // tile id per global cell

  int n_sub() const { return ntile_i * ntile_j; }
};

TileLayout build_tiles(const Grid& grid, int ntile_i, int ntile_j, int halo, bool periodic = false);

// Contiguous near-equal split of n into parts; remainder to the first parts.
std::vector<int> split_extent(int n, int parts);

struct TimeWindows {
  int n_steps = 0;
  int n_t = 0;
  std::vector<int> starts;  // first time point of each window
  std::vector<int> sizes;   // time points per window, shared endpoints counted in both

  int end(int k) const { return starts[k] + sizes[k] - 1; }
  // Window advancing the model into time point l (1 <= l <= N).
  int window_of_step(int l) const;
  // Window owning an observation at time point l; shared endpoints go to the earlier window.
  int window_of_time(int l) const;
};

TimeWindows build_time_windows(int n_steps, int n_t);

// Values of a multi-field state on a tile box (field-major, box order), or on
// the owned cells only when built without halo.
struct LocalField {
  int tile = 0;
  int window = 0;
  int n_fields = 1;
  bool with_halo = true;
  Vector data;
};

LocalField restrict_field(const Vector& field, const TileLayout& layout, int tile, bool with_halo,
                          int n_fields = 1, int window = 0);
Vector assemble(const std::vector<LocalField>& locals, const TileLayout& layout);

}  // namespace ddvar
