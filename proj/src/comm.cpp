#include "ddvar/comm.hpp"

#include <algorithm>
#include <ostream>

namespace ddvar {

World::World(int n_sub_, int n_t_) : n_sub(n_sub_), n_t(n_t_) {
  require(n_sub >= 1 && n_t >= 1, "world: N_sub and N_t must be >= 1");
}

void Network::post(int sender, int receiver, long tag, std::vector<double> payload) {
  log_.push_back({step_++, sender, receiver, tag, payload.size() * sizeof(double)});
  queues_[{sender, receiver, tag}].push_back(std::move(payload));
}

bool Network::available(int sender, int receiver, long tag) const {
  auto it = queues_.find({sender, receiver, tag});
  return it != queues_.end() && !it->second.empty();
}

std::vector<double> Network::take(int sender, int receiver, long tag) {
  auto it = queues_.find({sender, receiver, tag});
  if (it == queues_.end() || it->second.empty()) {
    throw DeadlockError("deadlock: receive on channel (sender " + std::to_string(sender) + ", receiver " +
                        std::to_string(receiver) + ", tag " + std::to_string(tag) + ") has no matching send");
  }
  std::vector<double> p = std::move(it->second.front());
  it->second.pop_front();
  return p;
}

std::size_t Network::pending() const {
  std::size_t n = 0;
  for (const auto& [k, q] : queues_) n += q.size();
  return n;
}

void Network::write_log(std::ostream& os) const {
  os << "step,sender,receiver,tag,bytes\n";
  for (const LogEntry& e : log_) os << e.step << ',' << e.sender << ',' << e.receiver << ',' << e.tag << ',' << e.bytes << '\n';
}

Communicator::Communicator(CommKind kind, int color, std::vector<int> members, std::shared_ptr<Network> net)
    : kind_(kind), color_(color), members_(std::move(members)), net_(std::move(net)) {}

bool Communicator::contains(int world_rank) const {
  return std::find(members_.begin(), members_.end(), world_rank) != members_.end();
}

Request Communicator::isend(int from, int to, const Tag& tag, std::vector<double> payload) const {
  require(contains(from) && contains(to), "isend: endpoint is not a member of the communicator");
  net_->post(from, to, tag.encode(), std::move(payload));
  return {true, from, to, tag.encode(), true};
}

Request Communicator::irecv(int to, int from, const Tag& tag) const {
  require(contains(from) && contains(to), "irecv: endpoint is not a member of the communicator");
  return {false, from, to, tag.encode(), false};
}

std::vector<double> Communicator::wait(Request& req) const {
  if (req.is_send || req.done) return {};
  std::vector<double> p = net_->take(req.sender, req.receiver, req.tag);
  req.done = true;
  return p;
}

std::vector<std::vector<double>> Communicator::wait_all(std::vector<Request>& reqs) const {
  std::string missing;
  for (const Request& r : reqs) {
    if (!r.is_send && !r.done && !net_->available(r.sender, r.receiver, r.tag)) {
      missing += " (" + std::to_string(r.sender) + "->" + std::to_string(r.receiver) + ", tag " +
                 std::to_string(r.tag) + ")";
    }
  }
  if (!missing.empty()) throw DeadlockError("deadlock: unmatched receives on channels" + missing);
  std::vector<std::vector<double>> out;
  out.reserve(reqs.size());
  for (Request& r : reqs) out.push_back(wait(r));
  return out;
}

Communicator world_comm(const World& world, std::shared_ptr<Network> net) {
  std::vector<int> m(world.n_ranks());
  for (int r = 0; r < world.n_ranks(); ++r) m[r] = r;
  return Communicator(CommKind::World, 0, std::move(m), std::move(net));
}

std::vector<Communicator> split(const World& world, std::shared_ptr<Network> net) {
  std::vector<Communicator> out;
  for (int i = 0; i < world.n_sub; ++i) {
    std::vector<int> m;
    for (int k = 0; k < world.n_t; ++k) m.push_back(world.rank(i, k));
    out.emplace_back(CommKind::Intra, i, std::move(m), net);
  }
  return out;
}

Communicator create_inter(const World& world, int window, std::shared_ptr<Network> net) {
  require(window >= 0 && window < world.n_t, "create_inter: window out of range");
  std::vector<int> m;
  for (int i = 0; i < world.n_sub; ++i) m.push_back(world.rank(i, window));
  return Communicator(CommKind::Inter, window, std::move(m), std::move(net));
}

std::vector<Communicator> create_inter_all(const World& world, std::shared_ptr<Network> net) {
  std::vector<Communicator> out;
  for (int k = 0; k < world.n_t; ++k) out.push_back(create_inter(world, k, net));
  return out;
}

namespace {

void check_fields(const Communicator& inter, const TileLayout& layout, const std::vector<LocalField>& fields) {
  require(inter.size() == layout.n_sub(), "halo exchange: communicator size differs from the tile count");
  require(static_cast<int>(fields.size()) == layout.n_sub(), "halo exchange: one local field per tile required");
  for (int t = 0; t < layout.n_sub(); ++t) {
    const LocalField& f = fields[t];
    require(f.tile == t && f.with_halo, "halo exchange: fields must be halo-extended and ordered by tile");
    require(f.data.size() == static_cast<long>(f.n_fields) * layout.tiles[t].box_size(),
            "halo exchange: local field shape mismatch");
  }
}

}  // namespace

void halo_exchange(const Communicator& inter, const TileLayout& layout, std::vector<LocalField>& fields,
                   int iteration) {
  check_fields(inter, layout, fields);
  const auto& ranks = inter.members();
  for (const Tile& t : layout.tiles) {
    for (const HaloSet& set : t.halos) {
      const LocalField& src = fields[set.neighbor];
      const int m = layout.tiles[set.neighbor].box_size();
      std::vector<double> payload;
      payload.reserve(set.source.size() * src.n_fields);
      for (int f = 0; f < src.n_fields; ++f)
        for (int q : set.source) payload.push_back(src.data[f * m + q]);
      inter.isend(ranks[set.neighbor], ranks[t.id], {iteration, static_cast<int>(set.direction), MessageKind::Halo},
                  std::move(payload));
    }
  }
  for (const Tile& t : layout.tiles) {
    std::vector<Request> reqs;
    for (const HaloSet& set : t.halos)
      reqs.push_back(inter.irecv(ranks[t.id], ranks[set.neighbor], {iteration, static_cast<int>(set.direction), MessageKind::Halo}));
    const auto payloads = inter.wait_all(reqs);
    LocalField& dst = fields[t.id];
    const int m = t.box_size();
    for (std::size_t s = 0; s < t.halos.size(); ++s) {
      const HaloSet& set = t.halos[s];
      require(payloads[s].size() == set.local.size() * dst.n_fields, "halo exchange: payload size mismatch");
      std::size_t n = 0;
      for (int f = 0; f < dst.n_fields; ++f)
        for (int q : set.local) dst.data[f * m + q] = payloads[s][n++];
    }
  }
}

void halo_accumulate(const Communicator& inter, const TileLayout& layout, std::vector<LocalField>& fields,
                     int iteration) {
  check_fields(inter, layout, fields);
  const auto& ranks = inter.members();
  for (const Tile& t : layout.tiles) {
    LocalField& src = fields[t.id];
    const int m = t.box_size();
    for (const HaloSet& set : t.halos) {
      std::vector<double> payload;
      for (int f = 0; f < src.n_fields; ++f)
        for (int q : set.local) {
          payload.push_back(src.data[f * m + q]);
          src.data[f * m + q] = 0.0;
        }
      inter.isend(ranks[t.id], ranks[set.neighbor],
                  {iteration, static_cast<int>(set.direction), MessageKind::Reduce}, std::move(payload));
    }
  }
  // Owners add contributions in (tile, direction, sender) order.
  for (const Tile& t : layout.tiles) {
    for (const HaloSet& set : t.halos) {
      Request r = inter.irecv(ranks[set.neighbor], ranks[t.id],
                              {iteration, static_cast<int>(set.direction), MessageKind::Reduce});
      const std::vector<double> p = inter.wait(r);
      LocalField& dst = fields[set.neighbor];
      const int m = layout.tiles[set.neighbor].box_size();
      std::size_t n = 0;
      for (int f = 0; f < dst.n_fields; ++f)
        for (int q : set.source) dst.data[f * m + q] += p[n++];
    }
  }
}

}  // namespace ddvar
