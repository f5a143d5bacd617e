#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowsim {

using NodeId = std::int32_t;

// Directed links are keyed by packing (src, dst) into one 64-bit value.
using LinkKey = std::uint64_t;

constexpr LinkKey make_link_key(NodeId src, NodeId dst) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(src)) << 32) |
         static_cast<std::uint32_t>(dst);
}
constexpr NodeId link_src(LinkKey key) { return static_cast<NodeId>(key >> 32); }
constexpr NodeId link_dst(LinkKey key) { return static_cast<NodeId>(key & 0xffffffffull); }
constexpr LinkKey reverse_key(LinkKey key) { return make_link_key(link_dst(key), link_src(key)); }

struct DirectedLink {
  NodeId src = 0;
  NodeId dst = 0;
  double capacity_mbps = 0.0;
  double base_delay_ms = 0.0;
  double loss_prob = 0.0;

  LinkKey key() const { return make_link_key(src, dst); }
};

// A path is stored as its node sequence; links are the consecutive node pairs.
struct Path {
  std::vector<NodeId> nodes;

  NodeId src() const { return nodes.front(); }
  NodeId dst() const { return nodes.back(); }
  std::size_t hop_count() const { return nodes.empty() ? 0 : nodes.size() - 1; }
  LinkKey link(std::size_t i) const { return make_link_key(nodes[i], nodes[i + 1]); }
  bool contains_link(LinkKey key) const;

  bool operator==(const Path&) const = default;
};

Path reversed(const Path& p);
bool lex_less(const Path& a, const Path& b);

struct NoPath : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DisconnectedResult : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TopologyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Topology {
 public:
  void add_node(NodeId id);
  void add_link(const DirectedLink& link);
  void set_server(NodeId id) { server_ = id; }
  void set_clients(std::vector<NodeId> clients);

  // Full invariant check: attribute ranges, paired reverse links, server/client
  // membership, connectivity. Throws TopologyError with the offending entity.
  void validate() const;

  const std::vector<NodeId>& nodes() const { return nodes_; }
  const std::vector<DirectedLink>& links() const { return links_; }
  bool has_node(NodeId id) const;
  const DirectedLink* find_link(NodeId src, NodeId dst) const;
  const DirectedLink& link_at(LinkKey key) const;  // throws TopologyError if missing
  const std::vector<NodeId>& out_neighbors(NodeId id) const;

  NodeId server() const { return server_; }
  const std::vector<NodeId>& clients() const { return clients_; }

  bool connected() const;  // in the undirected sense

 private:
  std::vector<NodeId> nodes_;  // sorted, unique
  std::vector<DirectedLink> links_;
  std::map<LinkKey, std::size_t> link_index_;
  std::map<NodeId, std::vector<NodeId>> out_adj_;  // neighbor lists kept sorted
  NodeId server_ = -1;
  std::vector<NodeId> clients_;
};

// Throws TopologyError unless the path is non-empty, chained, simple, and every
// link exists in the topology.
void validate_path(const Topology& topo, const Path& path);

using LinkWeightFn = std::function<double(const DirectedLink&)>;

// Default candidate-enumeration weight: hop count with a tiny base-delay
// tie-break so equal-hop paths order by cumulative delay.
double hop_delay_weight(const DirectedLink& link);

double path_cost(const Topology& topo, const Path& path, const LinkWeightFn& weight);

// Yen's algorithm: up to k loopless paths in nondecreasing (cost, lex) order.
// Throws NoPath when dst is unreachable from src.
std::vector<Path> k_shortest_paths(const Topology& topo, NodeId src, NodeId dst, int k,
                                   const LinkWeightFn& weight = hop_delay_weight);

struct AttrRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct Point2D {
  double x = 0.0;
  double y = 0.0;
};

// Random Gabriel graph over n points in the unit square. Each undirected edge
// becomes two directed links sharing a capacity draw but with independently
// drawn delay and loss. The server is the max-degree node (lowest id on ties);
// all other nodes are eligible clients. Throws DisconnectedResult if the graph
// is disconnected (callers retry with another seed).
Topology generate_gabriel_topology(int n_nodes, std::uint64_t seed, AttrRange capacity_mbps,
                                   AttrRange delay_ms, AttrRange loss,
                                   std::vector<Point2D>* positions_out = nullptr);

// JSON topology file format:
//   {"nodes":[int], "server":int, "clients":[int],
//    "links":[{"src":int,"dst":int,"capacity_mbps":num,"delay_ms":num,"loss":num}]}
struct TopologyFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Topology topology_from_json(const std::string& text);
Topology load_topology_file(const std::string& path);
std::string topology_to_json(const Topology& topo);
void save_topology_file(const Topology& topo, const std::string& path);

}  // namespace flowsim
