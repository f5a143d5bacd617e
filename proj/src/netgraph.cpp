#include "flowsim/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <sstream>

#include "flowsim/rng.hpp"
#include "json.hpp"

namespace flowsim {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

bool Path::contains_link(LinkKey key) const {
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    if (link(i) == key) return true;
  }
  return false;
}

Path reversed(const Path& p) {
  Path r = p;
  std::reverse(r.nodes.begin(), r.nodes.end());
  return r;
}

bool lex_less(const Path& a, const Path& b) {
  return std::lexicographical_compare(a.nodes.begin(), a.nodes.end(), b.nodes.begin(),
                                      b.nodes.end());
}

void Topology::add_node(NodeId id) {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id);
  if (it != nodes_.end() && *it == id) {
    throw TopologyError("duplicate node id " + std::to_string(id));
  }
  nodes_.insert(it, id);
  out_adj_.try_emplace(id);
}

void Topology::add_link(const DirectedLink& link) {
  if (!has_node(link.src) || !has_node(link.dst)) {
    throw TopologyError("link endpoints must be declared nodes: " + std::to_string(link.src) +
                        "->" + std::to_string(link.dst));
  }
  if (link.src == link.dst) {
    throw TopologyError("self-loop on node " + std::to_string(link.src));
  }
  if (link_index_.count(link.key())) {
    throw TopologyError("duplicate link " + std::to_string(link.src) + "->" +
                        std::to_string(link.dst));
  }
  if (!(link.capacity_mbps > 0.0)) {
    throw TopologyError("link " + std::to_string(link.src) + "->" + std::to_string(link.dst) +
                        ": capacity must be > 0");
  }
  if (!(link.base_delay_ms >= 0.0)) {
    throw TopologyError("link " + std::to_string(link.src) + "->" + std::to_string(link.dst) +
                        ": delay must be >= 0");
  }
  if (!(link.loss_prob >= 0.0) || !(link.loss_prob < 1.0)) {
    throw TopologyError("link " + std::to_string(link.src) + "->" + std::to_string(link.dst) +
                        ": loss must be in [0,1)");
  }
  link_index_[link.key()] = links_.size();
  links_.push_back(link);
  auto& nbrs = out_adj_[link.src];
  nbrs.insert(std::lower_bound(nbrs.begin(), nbrs.end(), link.dst), link.dst);
}

void Topology::set_clients(std::vector<NodeId> clients) {
  std::sort(clients.begin(), clients.end());
  clients.erase(std::unique(clients.begin(), clients.end()), clients.end());
  clients_ = std::move(clients);
}

bool Topology::has_node(NodeId id) const {
  return std::binary_search(nodes_.begin(), nodes_.end(), id);
}

const DirectedLink* Topology::find_link(NodeId src, NodeId dst) const {
  auto it = link_index_.find(make_link_key(src, dst));
  return it == link_index_.end() ? nullptr : &links_[it->second];
}

const DirectedLink& Topology::link_at(LinkKey key) const {
  auto it = link_index_.find(key);
  if (it == link_index_.end()) {
    throw TopologyError("unknown link " + std::to_string(link_src(key)) + "->" +
                        std::to_string(link_dst(key)));
  }
  return links_[it->second];
}

const std::vector<NodeId>& Topology::out_neighbors(NodeId id) const {
  static const std::vector<NodeId> empty;
  auto it = out_adj_.find(id);
  return it == out_adj_.end() ? empty : it->second;
}

bool Topology::connected() const {
  if (nodes_.empty()) return false;
  std::set<NodeId> seen{nodes_.front()};
  std::vector<NodeId> stack{nodes_.front()};
  // Treat links as undirected for reachability; reverse links are required
  // separately by validate().
  std::map<NodeId, std::vector<NodeId>> undirected;
  for (const auto& l : links_) {
    undirected[l.src].push_back(l.dst);
    undirected[l.dst].push_back(l.src);
  }
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    for (NodeId v : undirected[u]) {
      if (seen.insert(v).second) stack.push_back(v);
    }
  }
  return seen.size() == nodes_.size();
}

void Topology::validate() const {
  if (nodes_.size() < 2) throw TopologyError("topology needs at least two nodes");
  for (const auto& l : links_) {
    if (!link_index_.count(reverse_key(l.key()))) {
      throw TopologyError("link " + std::to_string(l.src) + "->" + std::to_string(l.dst) +
                          " has no reverse link");
    }
  }
  if (!has_node(server_)) {
    throw TopologyError("server " + std::to_string(server_) + " is not a declared node");
  }
  for (NodeId c : clients_) {
    if (!has_node(c)) {
      throw TopologyError("client " + std::to_string(c) + " is not a declared node");
    }
    if (c == server_) {
      throw TopologyError("server " + std::to_string(c) + " cannot also be a client");
    }
  }
  if (!connected()) throw TopologyError("topology is disconnected");
}

void validate_path(const Topology& topo, const Path& path) {
  if (path.nodes.size() < 2) throw TopologyError("path must contain at least one link");
  std::set<NodeId> seen;
  for (NodeId n : path.nodes) {
    if (!seen.insert(n).second) {
      throw TopologyError("path repeats node " + std::to_string(n));
    }
  }
  for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
    if (!topo.find_link(path.nodes[i], path.nodes[i + 1])) {
      throw TopologyError("path uses unknown link " + std::to_string(path.nodes[i]) + "->" +
                          std::to_string(path.nodes[i + 1]));
    }
  }
}

double hop_delay_weight(const DirectedLink& link) {
  return 1.0 + link.base_delay_ms * 1e-9;
}

double path_cost(const Topology& topo, const Path& path, const LinkWeightFn& weight) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
    const DirectedLink* l = topo.find_link(path.nodes[i], path.nodes[i + 1]);
    if (!l) throw NoPath("path edge missing from topology");
    total += weight(*l);
  }
  return total;
}

namespace {

struct EdgeBan {
  std::set<LinkKey> edges;
  std::set<NodeId> nodes;

  bool edge_banned(NodeId u, NodeId v) const { return edges.count(make_link_key(u, v)) != 0; }
  bool node_banned(NodeId n) const { return nodes.count(n) != 0; }
};

// Distance from every node to dst, honoring bans. Plain Dijkstra on the
// reversed graph.
std::map<NodeId, double> distances_to(const Topology& topo, NodeId dst, const LinkWeightFn& weight,
                                      const EdgeBan& ban) {
  std::map<NodeId, std::vector<std::pair<NodeId, double>>> in_adj;
  for (const auto& l : topo.links()) {
    if (ban.edge_banned(l.src, l.dst) || ban.node_banned(l.src) || ban.node_banned(l.dst)) {
      continue;
    }
    in_adj[l.dst].emplace_back(l.src, weight(l));
  }
  std::map<NodeId, double> dist;
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[dst] = 0.0;
  heap.emplace(0.0, dst);
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    auto it = dist.find(u);
    if (it != dist.end() && d > it->second) continue;
    for (const auto& [v, w] : in_adj[u]) {
      double nd = d + w;
      auto dit = dist.find(v);
      if (dit == dist.end() || nd < dit->second) {
        dist[v] = nd;
        heap.emplace(nd, v);
      }
    }
  }
  return dist;
}

// Lexicographically smallest minimum-cost simple path src->dst, or nullopt.
// Built by walking tight edges of the distance-to-dst table, always taking the
// smallest eligible neighbor id.
std::optional<Path> lex_shortest(const Topology& topo, NodeId src, NodeId dst,
                                 const LinkWeightFn& weight, const EdgeBan& ban) {
  if (ban.node_banned(src) || ban.node_banned(dst)) return std::nullopt;
  auto dist = distances_to(topo, dst, weight, ban);
  auto dsrc = dist.find(src);
  if (dsrc == dist.end()) return std::nullopt;

  Path path;
  path.nodes.push_back(src);
  std::set<NodeId> visited{src};
  NodeId u = src;
  while (u != dst) {
    const double du = dist.at(u);
    std::optional<NodeId> next;
    for (NodeId v : topo.out_neighbors(u)) {
      if (visited.count(v) || ban.node_banned(v) || ban.edge_banned(u, v)) continue;
      auto dv = dist.find(v);
      if (dv == dist.end()) continue;
      const DirectedLink* l = topo.find_link(u, v);
      if (weight(*l) + dv->second == du) {
        next = v;
        break;  // neighbors are sorted, first tight edge is the lex choice
      }
    }
    if (!next) return std::nullopt;  // zero-weight cycle guard
    visited.insert(*next);
    path.nodes.push_back(*next);
    u = *next;
  }
  return path;
}

}  // namespace

std::vector<Path> k_shortest_paths(const Topology& topo, NodeId src, NodeId dst, int k,
                                   const LinkWeightFn& weight) {
  if (src == dst) throw TopologyError("k_shortest_paths requires src != dst");
  if (k < 1) throw TopologyError("k_shortest_paths requires k >= 1");

  auto first = lex_shortest(topo, src, dst, weight, EdgeBan{});
  if (!first) {
    throw NoPath("no path from " + std::to_string(src) + " to " + std::to_string(dst));
  }

  std::vector<Path> result{*first};
  std::set<std::vector<NodeId>> emitted{first->nodes};
  // Candidate pool ordered by (cost, node sequence); node sequence also dedupes.
  std::set<std::pair<double, std::vector<NodeId>>> pool;

  while (static_cast<int>(result.size()) < k) {
    const Path prev = result.back();
    for (std::size_t j = 0; j + 1 < prev.nodes.size(); ++j) {
      NodeId spur = prev.nodes[j];
      std::vector<NodeId> root(prev.nodes.begin(), prev.nodes.begin() + j + 1);

      EdgeBan ban;
      for (const Path& p : result) {
        if (p.nodes.size() > j &&
            std::equal(root.begin(), root.end(), p.nodes.begin(), p.nodes.begin() + j + 1)) {
          if (p.nodes.size() > j + 1) {
            ban.edges.insert(make_link_key(p.nodes[j], p.nodes[j + 1]));
          }
        }
      }
      for (std::size_t i = 0; i < j; ++i) ban.nodes.insert(prev.nodes[i]);

      auto spur_path = lex_shortest(topo, spur, dst, weight, ban);
      if (!spur_path) continue;

      std::vector<NodeId> total = root;
      total.insert(total.end(), spur_path->nodes.begin() + 1, spur_path->nodes.end());
      if (emitted.count(total)) continue;
      Path candidate{total};
      pool.emplace(path_cost(topo, candidate, weight), std::move(total));
    }
    if (pool.empty()) break;
    auto best = pool.begin();
    Path next{best->second};
    emitted.insert(best->second);
    pool.erase(best);
    result.push_back(std::move(next));
  }
  return result;
}

Topology generate_gabriel_topology(int n_nodes, std::uint64_t seed, AttrRange capacity_mbps,
                                   AttrRange delay_ms, AttrRange loss,
                                   std::vector<Point2D>* positions_out) {
  if (n_nodes < 2) throw TopologyError("gabriel topology needs n_nodes >= 2");
  auto check_range = [](const AttrRange& r, const char* what, bool positive_lo) {
    if (!(r.lo <= r.hi)) throw TopologyError(std::string(what) + ": range lo must be <= hi");
    if (positive_lo && !(r.lo > 0.0)) throw TopologyError(std::string(what) + ": must be > 0");
    if (!positive_lo && !(r.lo >= 0.0)) throw TopologyError(std::string(what) + ": must be >= 0");
  };
  check_range(capacity_mbps, "capacity_mbps", true);
  check_range(delay_ms, "delay_ms", false);
  check_range(loss, "loss", false);
  if (!(loss.hi < 1.0)) throw TopologyError("loss: range hi must be < 1");

  Rng rng(seed);
  std::vector<Point2D> pts(n_nodes);
  for (auto& p : pts) {
    p.x = rng.uniform01();
    p.y = rng.uniform01();
  }
  auto d2 = [&](int a, int b) {
    double dx = pts[a].x - pts[b].x;
    double dy = pts[a].y - pts[b].y;
    return dx * dx + dy * dy;
  };

  Topology topo;
  for (int i = 0; i < n_nodes; ++i) topo.add_node(i);

  std::vector<int> degree(n_nodes, 0);
  for (int i = 0; i < n_nodes; ++i) {
    for (int j = i + 1; j < n_nodes; ++j) {
      // Gabriel condition: no third point strictly inside the disk with
      // diameter ij, i.e. d(i,w)^2 + d(j,w)^2 >= d(i,j)^2 for all w.
      bool blocked = false;
      const double dij = d2(i, j);
      for (int w = 0; w < n_nodes && !blocked; ++w) {
        if (w == i || w == j) continue;
        if (d2(i, w) + d2(j, w) < dij) blocked = true;
      }
      if (blocked) continue;
      const double cap = rng.uniform(capacity_mbps.lo, capacity_mbps.hi);
      DirectedLink fwd{i, j, cap, rng.uniform(delay_ms.lo, delay_ms.hi),
                       rng.uniform(loss.lo, loss.hi)};
      DirectedLink rev{j, i, cap, rng.uniform(delay_ms.lo, delay_ms.hi),
                       rng.uniform(loss.lo, loss.hi)};
      topo.add_link(fwd);
      topo.add_link(rev);
      ++degree[i];
      ++degree[j];
    }
  }

  int server = 0;
  for (int i = 1; i < n_nodes; ++i) {
    if (degree[i] > degree[server]) server = i;
  }
  topo.set_server(server);
  std::vector<NodeId> clients;
  for (int i = 0; i < n_nodes; ++i) {
    if (i != server) clients.push_back(i);
  }
  topo.set_clients(std::move(clients));

  if (!topo.connected()) {
    throw DisconnectedResult("gabriel graph with seed " + std::to_string(seed) +
                             " is disconnected");
  }
  if (positions_out) *positions_out = std::move(pts);
  return topo;
}

namespace {

using nlohmann::json;

[[noreturn]] void format_error(const std::string& where, const std::string& what) {
  throw TopologyFormatError("topology file: " + where + ": " + what);
}

double require_number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) format_error(where, std::string("missing key '") + key + "'");
  const json& v = obj.at(key);
  if (!v.is_number()) format_error(where + "." + key, "expected a number");
  return v.get<double>();
}

NodeId require_int(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) format_error(where, std::string("missing key '") + key + "'");
  const json& v = obj.at(key);
  if (!v.is_number_integer()) format_error(where + "." + key, "expected an integer");
  return v.get<NodeId>();
}

std::string line_of_offset(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

Topology topology_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    format_error(line_of_offset(text, e.byte), e.what());
  }
  if (!doc.is_object()) format_error("$", "expected a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "nodes" && key != "server" && key != "clients" && key != "links") {
      format_error("$", "unknown key '" + key + "'");
    }
  }
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) format_error("nodes", "expected array");
  if (!doc.contains("links") || !doc["links"].is_array()) format_error("links", "expected array");

  Topology topo;
  try {
    for (const auto& n : doc["nodes"]) {
      if (!n.is_number_integer()) format_error("nodes", "node ids must be integers");
      topo.add_node(n.get<NodeId>());
    }
    std::size_t i = 0;
    for (const auto& l : doc["links"]) {
      const std::string where = "links[" + std::to_string(i) + "]";
      if (!l.is_object()) format_error(where, "expected object");
      for (const auto& [key, _] : l.items()) {
        if (key != "src" && key != "dst" && key != "capacity_mbps" && key != "delay_ms" &&
            key != "loss") {
          format_error(where, "unknown key '" + key + "'");
        }
      }
      DirectedLink link;
      link.src = require_int(l, "src", where);
      link.dst = require_int(l, "dst", where);
      link.capacity_mbps = require_number(l, "capacity_mbps", where);
      link.base_delay_ms = require_number(l, "delay_ms", where);
      link.loss_prob = require_number(l, "loss", where);
      topo.add_link(link);
      ++i;
    }
    if (!doc.contains("server")) format_error("$", "missing key 'server'");
    topo.set_server(doc["server"].get<NodeId>());
    std::vector<NodeId> clients;
    if (doc.contains("clients")) {
      for (const auto& c : doc["clients"]) clients.push_back(c.get<NodeId>());
    }
    topo.set_clients(std::move(clients));
    topo.validate();
  } catch (const TopologyError& e) {
    throw TopologyFormatError(std::string("topology file: ") + e.what());
  }
  return topo;
}

Topology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TopologyFormatError("cannot open topology file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return topology_from_json(ss.str());
}

std::string topology_to_json(const Topology& topo) {
  json doc;
  doc["nodes"] = topo.nodes();
  doc["server"] = topo.server();
  doc["clients"] = topo.clients();
  json links = json::array();
  std::vector<DirectedLink> sorted = topo.links();
  std::sort(sorted.begin(), sorted.end(),
            [](const DirectedLink& a, const DirectedLink& b) { return a.key() < b.key(); });
  for (const auto& l : sorted) {
    links.push_back({{"src", l.src},
                     {"dst", l.dst},
                     {"capacity_mbps", l.capacity_mbps},
                     {"delay_ms", l.base_delay_ms},
                     {"loss", l.loss_prob}});
  }
  doc["links"] = std::move(links);
  return doc.dump(2) + "\n";
}

void save_topology_file(const Topology& topo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw TopologyFormatError("cannot write topology file: " + path);
  out << topology_to_json(topo);
}

}  // namespace flowsim
