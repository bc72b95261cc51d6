#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "topotrack/geometry.hpp"

namespace topotrack {

using NodeId = int;

struct MapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Outgoing edge with cached geometry. `direction` is the unit vector from
/// the owning node towards `to`; `length` the Euclidean node distance.
struct Edge {
  NodeId to;
  double length;
  Vec2 direction;
};

/// Immutable undirected graph of metric node positions. Validated on
/// construction: symmetric adjacency, no self loops, distinct coordinates,
/// connected. Safe to share across threads by const reference.
class TopologicalMap {
 public:
  TopologicalMap(std::vector<Vec2> coords,
                 const std::vector<std::pair<NodeId, NodeId>>& edges,
                 std::vector<std::vector<NodeId>> lanes = {});

  static TopologicalMap from_json_text(const std::string& text);
  static TopologicalMap load(std::istream& in);
  static TopologicalMap load_file(const std::string& path);

  std::string to_json_text() const;
  void save_file(const std::string& path) const;

  int size() const { return static_cast<int>(coords_.size()); }
  const Vec2& position(NodeId n) const { return coords_.at(n); }
  const std::vector<Vec2>& positions() const { return coords_; }

  const std::vector<Edge>& edges_from(NodeId n) const { return adj_.at(n); }
  std::vector<NodeId> neighbors(NodeId n) const;
  bool adjacent(NodeId a, NodeId b) const;

  /// BFS hop distance from `a` to every node.
  std::vector<int> hops_from(NodeId a) const;
  int shortest_path_hops(NodeId a, NodeId b) const;

  /// Node sequence of a minimum-hop path, inclusive of both endpoints.
  std::vector<NodeId> shortest_path(NodeId a, NodeId b) const;

  /// Metric shortest-path length (Dijkstra over edge lengths) to every node.
  std::vector<double> metric_distances_from(NodeId a) const;

  /// Nearest node by Euclidean distance; ties go to the lowest NodeId.
  NodeId closest_node(const Vec2& p) const;

  /// Ordered node chains of traversable lanes, when the map was produced by
  /// the polytunnel generator. Empty for hand-written maps without lane
  /// annotations.
  const std::vector<std::vector<NodeId>>& lanes() const { return lanes_; }

 private:
  void validate() const;

  std::vector<Vec2> coords_;
  std::vector<std::vector<Edge>> adj_;
  std::vector<std::vector<NodeId>> lanes_;
};

/// Parameters of the generated two-tunnel test site. Defaults give the
/// 137-node layout: 2 tunnels x 5 rows x 10 nodes, one connector per row end
/// (20), and a 17-node service spur towards the storage area.
struct PolytunnelLayout {
  int tunnels = 2;
  int rows = 5;
  int nodes_per_row = 10;
  double node_spacing = 30.0 / 9.0;  // 30 m lanes
  double row_gap = 1.5;
  double tunnel_gap = 4.0;
  double connector_offset = 30.0 / 9.0;
  int spur_nodes = 17;
};

TopologicalMap make_polytunnel_map(const PolytunnelLayout& layout = {});

}  // namespace topotrack
