#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "ddvar/grid.hpp"
#include "ddvar/types.hpp"

namespace ddvar {

class DeadlockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct World {
  int n_sub = 1;
  int n_t = 1;

  World(int n_sub, int n_t);
  int n_ranks() const { return n_sub * n_t; }
  int rank(int tile, int window) const { return tile + n_sub * window; }
  int tile_of(int rank) const { return rank % n_sub; }
  int window_of(int rank) const { return rank / n_sub; }
};

enum class MessageKind { Halo = 0, Interface = 1, Reduce = 2, Control = 3 };

struct Tag {
  int iteration = 0;
  int direction = 0;
  MessageKind kind = MessageKind::Halo;

  long encode() const { return (static_cast<long>(iteration) * 8 + direction) * 4 + static_cast<int>(kind); }
};

struct LogEntry {
  long step = 0;
  int sender = 0;
  int receiver = 0;
  long tag = 0;
  std::size_t bytes = 0;
};

// Per-channel FIFO message store shared by all communicators of a world.
class Network {
 public:
  void post(int sender, int receiver, long tag, std::vector<double> payload);
  bool available(int sender, int receiver, long tag) const;
  std::vector<double> take(int sender, int receiver, long tag);

  const std::vector<LogEntry>& log() const { return log_; }
  void write_log(std::ostream& os) const;
  std::size_t pending() const;

 private:
  std::map<std::tuple<int, int, long>, std::deque<std::vector<double>>> queues_;
  std::vector<LogEntry> log_;
  long step_ = 0;
};

enum class CommKind { World, Intra, Inter };

struct Request {
  bool is_send = false;
  int sender = 0;  // world ranks
  int receiver = 0;
  long tag = 0;
  bool done = false;
};

class Communicator {
 public:
  Communicator(CommKind kind, int color, std::vector<int> members, std::shared_ptr<Network> net);

  CommKind kind() const { return kind_; }
  int color() const { return color_; }
  int size() const { return static_cast<int>(members_.size()); }
  const std::vector<int>& members() const { return members_; }
  bool contains(int world_rank) const;
  Network& network() const { return *net_; }

  // Endpoints are world ranks that must belong to this communicator.
  Request isend(int from, int to, const Tag& tag, std::vector<double> payload) const;
  Request irecv(int to, int from, const Tag& tag) const;
  std::vector<double> wait(Request& req) const;
  // Completes all requests; unmatched receives are reported together.
  std::vector<std::vector<double>> wait_all(std::vector<Request>& reqs) const;

 private:
  CommKind kind_;
  int color_;
  std::vector<int> members_;
  std::shared_ptr<Network> net_;
};

Communicator world_comm(const World& world, std::shared_ptr<Network> net);
// One communicator per tile, members ordered by window.
std::vector<Communicator> split(const World& world, std::shared_ptr<Network> net);
// Communicator of one window: ranks {i + N_sub k}.
Communicator create_inter(const World& world, int window, std::shared_ptr<Network> net);
std::vector<Communicator> create_inter_all(const World& world, std::shared_ptr<Network> net);

// Fills halo cells of every member's field (LocalField with halo, tile = member
// position) from the owning neighbors, in (direction, neighbor) order.
void halo_exchange(const Communicator& inter, const TileLayout& layout, std::vector<LocalField>& fields,
                   int iteration = 0);
// Reverse of halo_exchange: adds halo values into the owners' cells and clears the halos.
void halo_accumulate(const Communicator& inter, const TileLayout& layout, std::vector<LocalField>& fields,
                     int iteration = 0);

}  // namespace ddvar
