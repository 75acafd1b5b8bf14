#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

using namespace ddvar;
using testing::randn;

namespace {

std::vector<std::vector<int>> members(const std::vector<Communicator>& cs) {
  std::vector<std::vector<int>> out;
  for (const auto& c : cs) out.push_back(c.members());
  return out;
}

void check_partition(const std::vector<Communicator>& cs, int n_ranks) {
  std::multiset<int> seen;
  for (const auto& c : cs)
    for (int r : c.members()) seen.insert(r);
  CHECK(static_cast<int>(seen.size()) == n_ranks);
  for (int r = 0; r < n_ranks; ++r) CHECK(seen.count(r) == 1);
}

std::vector<LocalField> restrict_all(const Vector& g, const TileLayout& layout, int n_fields) {
  std::vector<LocalField> out;
  for (int t = 0; t < layout.n_sub(); ++t) out.push_back(restrict_field(g, layout, t, true, n_fields));
  return out;
}

}  // namespace

TEST_CASE("world rank layout") {
  const World w(4, 2);
  CHECK(w.n_ranks() == 8);
  for (int r = 0; r < 8; ++r) CHECK(w.rank(w.tile_of(r), w.window_of(r)) == r);
  auto net = std::make_shared<Network>();
  CHECK(members(split(w, net)) == std::vector<std::vector<int>>{{0, 4}, {1, 5}, {2, 6}, {3, 7}});
  CHECK(members(create_inter_all(w, net)) == std::vector<std::vector<int>>{{0, 1, 2, 3}, {4, 5, 6, 7}});
  for (const auto& c : split(World(3, 1), net)) CHECK(c.size() == 1);
  for (const auto& c : create_inter_all(World(1, 3), net)) CHECK(c.size() == 1);
}

TEST_CASE("intra and inter groups partition the world") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> u(1, 6);
  auto net = std::make_shared<Network>();
  for (int t = 0; t < 20; ++t) {
    const World w(u(rng), u(rng));
    const auto intra = split(w, net), inter = create_inter_all(w, net);
    check_partition(intra, w.n_ranks());
    check_partition(inter, w.n_ranks());
    for (int r = 0; r < w.n_ranks(); ++r) {
      CHECK(intra[w.tile_of(r)].contains(r));
      CHECK(inter[w.window_of(r)].contains(r));
    }
  }
}

TEST_CASE("point to point messaging") {
  auto net = std::make_shared<Network>();
  const World w(2, 2);
  const Communicator world = world_comm(w, net);
  const Tag tag{3, 1, MessageKind::Interface};

  const std::vector<double> payload = {0.1, -2.5e-300, 1.0 / 3.0};
  world.isend(2, 2, tag, payload);
  Request rr = world.irecv(2, 2, tag);
  CHECK(world.wait(rr) == payload);

  world.isend(0, 1, tag, {1.0});
  world.isend(0, 1, tag, {2.0});
  Request a = world.irecv(1, 0, tag), b = world.irecv(1, 0, tag);
  CHECK(world.wait(a)[0] == 1.0);
  CHECK(world.wait(b)[0] == 2.0);
  CHECK(net->pending() == 0);

  Request lost = world.irecv(1, 0, Tag{4, 0, MessageKind::Halo});
  CHECK_THROWS_AS(world.wait(lost), DeadlockError);

  const Communicator inter = create_inter(w, 0, net);
  CHECK_THROWS_AS(inter.isend(0, 3, tag, {1.0}), InvalidArgument);
}

TEST_CASE("tags separate iterations") {
  CHECK(Tag{1, 0, MessageKind::Halo}.encode() != Tag{0, 1, MessageKind::Halo}.encode());
  CHECK(Tag{1, 0, MessageKind::Halo}.encode() != Tag{1, 0, MessageKind::Interface}.encode());
  auto net = std::make_shared<Network>();
  const Communicator c = world_comm(World(2, 1), net);
  c.isend(0, 1, Tag{1, 0, MessageKind::Halo}, {1.0});
  c.isend(0, 1, Tag{2, 0, MessageKind::Halo}, {2.0});
  Request r2 = c.irecv(1, 0, Tag{2, 0, MessageKind::Halo});
  CHECK(c.wait(r2)[0] == 2.0);
}

TEST_CASE("halo exchange reproduces the global restriction") {
  std::mt19937_64 rng(2);
  const Grid g{13, 11, 1, 1, 0.1, 1};
  for (bool periodic : {false, true})
    for (auto [ni, nj] : {std::pair{2, 2}, std::pair{3, 2}, std::pair{1, 1}, std::pair{2, 4}}) {
      const TileLayout layout = build_tiles(g, ni, nj, 2, periodic);
      auto net = std::make_shared<Network>();
      const World w(layout.n_sub(), 1);
      const Communicator inter = create_inter(w, 0, net);
      const Vector field = randn(2 * g.cells(), rng);
      const std::vector<LocalField> expect = restrict_all(field, layout, 2);
      std::vector<LocalField> f = expect;
      for (int t = 0; t < layout.n_sub(); ++t) {
        const Tile& tile = layout.tiles[t];
        for (int fld = 0; fld < 2; ++fld)
          for (int p : tile.halo_local) f[t].data[fld * tile.box_size() + p] = -99.0;
      }
      halo_exchange(inter, layout, f);
      for (int t = 0; t < layout.n_sub(); ++t) CHECK(f[t].data == expect[t].data);
      CHECK(net->pending() == 0);
    }
}

TEST_CASE("halo exchange leaves owned cells untouched") {
  std::mt19937_64 rng(3);
  const Grid g{10, 9, 1, 1, 0.1, 1};
  const TileLayout layout = build_tiles(g, 2, 3, 2);
  auto net = std::make_shared<Network>();
  const Communicator inter = create_inter(World(6, 1), 0, net);
  std::vector<LocalField> f;
  for (int t = 0; t < 6; ++t) {
    LocalField lf{t, 0, 1, true, randn(layout.tiles[t].box_size(), rng)};
    f.push_back(lf);
  }
  const std::vector<LocalField> before = f;
  halo_exchange(inter, layout, f);
  for (int t = 0; t < 6; ++t) {
    for (int p : layout.tiles[t].owned_local) CHECK(f[t].data[p] == before[t].data[p]);
    for (const HaloSet& h : layout.tiles[t].halos)
      for (std::size_t q = 0; q < h.local.size(); ++q) CHECK(f[t].data[h.local[q]] == before[h.neighbor].data[h.source[q]]);
  }
  std::vector<LocalField> wrong = f;
  wrong.pop_back();
  CHECK_THROWS_AS(halo_exchange(inter, layout, wrong), InvalidArgument);
}

TEST_CASE("halo accumulation is the transpose of the exchange") {
  std::mt19937_64 rng(4);
  const Grid g{9, 8, 1, 1, 0.1, 1};
  const TileLayout layout = build_tiles(g, 2, 2, 2, true);
  auto net = std::make_shared<Network>();
  const Communicator inter = create_inter(World(4, 1), 0, net);
  std::vector<LocalField> x, y;
  for (int t = 0; t < 4; ++t) {
    const int n = layout.tiles[t].box_size();
    LocalField a{t, 0, 1, true, randn(n, rng)}, b{t, 0, 1, true, randn(n, rng)};
    for (int p : layout.tiles[t].halo_local) a.data[p] = 0.0;
    x.push_back(a);
    y.push_back(b);
  }
  std::vector<LocalField> ex = x, ac = y;
  halo_exchange(inter, layout, ex, 1);
  halo_accumulate(inter, layout, ac, 2);
  double lhs = 0, rhs = 0;
  for (int t = 0; t < 4; ++t) {
    lhs += ex[t].data.dot(y[t].data);
    rhs += x[t].data.dot(ac[t].data);
    for (int p : layout.tiles[t].halo_local) CHECK(ac[t].data[p] == 0.0);
  }
  CHECK(std::abs(lhs - rhs) <= 1e-13 * std::abs(lhs));
}

TEST_CASE("message logs are deterministic") {
  const Grid g{12, 10, 1, 1, 0.1, 1};
  const TileLayout layout = build_tiles(g, 3, 2, 2);
  std::string logs[2];
  for (int run = 0; run < 2; ++run) {
    std::mt19937_64 rng(5);
    auto net = std::make_shared<Network>();
    const Communicator inter = create_inter(World(6, 1), 0, net);
    auto f = restrict_all(randn(g.cells(), rng), layout, 1);
    halo_exchange(inter, layout, f, 0);
    halo_exchange(inter, layout, f, 1);
    std::ostringstream os;
    net->write_log(os);
    logs[run] = os.str();
  }
  CHECK(logs[0] == logs[1]);
  CHECK(logs[0].rfind("step,sender,receiver,tag,bytes\n", 0) == 0);
}
