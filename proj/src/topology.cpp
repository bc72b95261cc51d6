#include "topotrack/topology.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

#include <json.hpp>

namespace topotrack {

TopologicalMap::TopologicalMap(std::vector<Vec2> coords,
                               const std::vector<std::pair<NodeId, NodeId>>& edges,
                               std::vector<std::vector<NodeId>> lanes)
    : coords_(std::move(coords)), lanes_(std::move(lanes)) {
  adj_.resize(coords_.size());
  const int n = size();
  for (const auto& [j, k] : edges) {
    if (j < 0 || j >= n || k < 0 || k >= n) {
      throw MapError("edge endpoint out of range: (" + std::to_string(j) + "," +
                     std::to_string(k) + ")");
    }
    if (j == k) {
      throw MapError("self loop at node " + std::to_string(j));
    }
    if (adjacent(j, k)) {
      continue;  // sparse input may list both directions
    }
    const Vec2 d = coords_[k] - coords_[j];
    const double len = d.norm();
    adj_[j].push_back({k, len, d.normalized()});
    adj_[k].push_back({j, len, (d * -1.0).normalized()});
  }
  for (auto& out : adj_) {
    std::sort(out.begin(), out.end(),
              [](const Edge& a, const Edge& b) { return a.to < b.to; });
  }
  validate();
}

void TopologicalMap::validate() const {
  const int n = size();
  if (n == 0) {
    throw MapError("map has no nodes");
  }
  for (int j = 0; j < n; ++j) {
    for (int k = j + 1; k < n; ++k) {
      if (coords_[j].x == coords_[k].x && coords_[j].y == coords_[k].y) {
        throw MapError("nodes " + std::to_string(j) + " and " + std::to_string(k) +
                       " share identical coordinates");
      }
    }
  }
  const auto hops = hops_from(0);
  for (int j = 0; j < n; ++j) {
    if (hops[j] < 0) {
      throw MapError("graph is disconnected: node " + std::to_string(j) +
                     " unreachable from node 0");
    }
  }
}

std::vector<NodeId> TopologicalMap::neighbors(NodeId n) const {
  std::vector<NodeId> out;
  out.reserve(adj_.at(n).size());
  for (const Edge& e : adj_[n]) {
    out.push_back(e.to);
  }
  return out;
}

bool TopologicalMap::adjacent(NodeId a, NodeId b) const {
  for (const Edge& e : adj_.at(a)) {
    if (e.to == b) {
      return true;
    }
  }
  return false;
}

std::vector<int> TopologicalMap::hops_from(NodeId a) const {
  std::vector<int> dist(coords_.size(), -1);
  std::deque<NodeId> queue{a};
  dist.at(a) = 0;
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    for (const Edge& e : adj_[u]) {
      if (dist[e.to] < 0) {
        dist[e.to] = dist[u] + 1;
        queue.push_back(e.to);
      }
    }
  }
  return dist;
}

int TopologicalMap::shortest_path_hops(NodeId a, NodeId b) const {
  return hops_from(a).at(b);
}

std::vector<NodeId> TopologicalMap::shortest_path(NodeId a, NodeId b) const {
  std::vector<NodeId> parent(coords_.size(), -1);
  std::vector<char> seen(coords_.size(), 0);
  std::deque<NodeId> queue{a};
  seen.at(a) = 1;
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    if (u == b) {
      break;
    }
    for (const Edge& e : adj_[u]) {
      if (!seen[e.to]) {
        seen[e.to] = 1;
        parent[e.to] = u;
        queue.push_back(e.to);
      }
    }
  }
  std::vector<NodeId> path;
  for (NodeId u = b; u != -1; u = parent[u]) {
    path.push_back(u);
    if (u == a) {
      break;
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<double> TopologicalMap::metric_distances_from(NodeId a) const {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(coords_.size(), kInf);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist.at(a) = 0.0;
  heap.emplace(0.0, a);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) {
      continue;
    }
    for (const Edge& e : adj_[u]) {
      const double nd = d + e.length;
      if (nd < dist[e.to]) {
        dist[e.to] = nd;
        heap.emplace(nd, e.to);
      }
    }
  }
  return dist;
}

NodeId TopologicalMap::closest_node(const Vec2& p) const {
  NodeId best = 0;
  double best_d2 = (coords_[0] - p).squared_norm();
  for (int n = 1; n < size(); ++n) {
    const double d2 = (coords_[n] - p).squared_norm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = n;
    }
  }
  return best;
}

TopologicalMap TopologicalMap::from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw MapError(std::string("map parse failure: ") + e.what());
  }
  if (!doc.contains("nodes") || (!doc.contains("edges") && !doc.contains("adjacency"))) {
    throw MapError("map document missing 'nodes' or 'edges'");
  }
  std::vector<Vec2> coords;
  for (const auto& node : doc["nodes"]) {
    const int id = node.at("id").get<int>();
    if (id != static_cast<int>(coords.size())) {
      throw MapError("node ids must be dense and ordered from 0");
    }
    coords.push_back({node.at("x").get<double>(), node.at("y").get<double>()});
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  if (doc.contains("edges")) {
    for (const auto& edge : doc["edges"]) {
      if (!edge.is_array() || edge.size() != 2) {
        throw MapError("edges must be [j,k] pairs");
      }
      edges.emplace_back(edge[0].get<int>(), edge[1].get<int>());
    }
  } else {
    // Dense 0/1 matrix form; must be symmetric with zero diagonal.
    const auto& adj = doc["adjacency"];
    const size_t n = coords.size();
    if (adj.size() != n) {
      throw MapError("adjacency matrix size mismatch");
    }
    for (size_t j = 0; j < n; ++j) {
      if (adj[j].size() != n) {
        throw MapError("adjacency matrix size mismatch");
      }
      for (size_t k = 0; k < n; ++k) {
        const int e = adj[j][k].get<int>();
        if (e != 0 && e != 1) {
          throw MapError("adjacency entries must be 0 or 1");
        }
        if (e != adj[k][j].get<int>()) {
          throw MapError("asymmetric adjacency between nodes " + std::to_string(j) +
                         " and " + std::to_string(k));
        }
        if (e == 1 && j < k) {
          edges.emplace_back(static_cast<NodeId>(j), static_cast<NodeId>(k));
        }
      }
    }
  }
  std::vector<std::vector<NodeId>> lanes;
  if (doc.contains("lanes")) {
    for (const auto& lane : doc["lanes"]) {
      lanes.push_back(lane.get<std::vector<NodeId>>());
    }
  }
  return TopologicalMap(std::move(coords), edges, std::move(lanes));
}

TopologicalMap TopologicalMap::load(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

TopologicalMap TopologicalMap::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw MapError("cannot open map file: " + path);
  }
  return load(in);
}

std::string TopologicalMap::to_json_text() const {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (int n = 0; n < size(); ++n) {
    doc["nodes"].push_back({{"id", n}, {"x", coords_[n].x}, {"y", coords_[n].y}});
  }
  doc["edges"] = nlohmann::json::array();
  for (int n = 0; n < size(); ++n) {
    for (const Edge& e : adj_[n]) {
      if (n < e.to) {
        doc["edges"].push_back({n, e.to});
      }
    }
  }
  if (!lanes_.empty()) {
    doc["lanes"] = lanes_;
  }
  return doc.dump(2);
}

void TopologicalMap::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw MapError("cannot write map file: " + path);
  }
  out << to_json_text() << "\n";
}

// Layout: per tunnel, `rows` horizontal lanes of `nodes_per_row` nodes plus a
// connector node off each lane end; connectors are chained vertically within a
// tunnel and across tunnels, so pickers can serpentine through the lanes on
// either side. A service spur of `spur_nodes` runs from the first left
// connector away from the tunnels (storage side).
TopologicalMap make_polytunnel_map(const PolytunnelLayout& p) {
  if (p.tunnels < 1 || p.rows < 1 || p.nodes_per_row < 2 || p.node_spacing <= 0.0 ||
      p.row_gap <= 0.0 || p.tunnel_gap <= 0.0 || p.connector_offset <= 0.0 ||
      p.spur_nodes < 0) {
    throw MapError("invalid polytunnel layout parameters");
  }
  std::vector<Vec2> coords;
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::vector<std::vector<NodeId>> lanes;

  const double lane_len = (p.nodes_per_row - 1) * p.node_spacing;
  std::vector<NodeId> left_chain;
  std::vector<NodeId> right_chain;

  for (int t = 0; t < p.tunnels; ++t) {
    const double y0 = t * ((p.rows - 1) * p.row_gap + p.tunnel_gap);
    for (int r = 0; r < p.rows; ++r) {
      const double y = y0 + r * p.row_gap;
      std::vector<NodeId> lane;
      for (int j = 0; j < p.nodes_per_row; ++j) {
        lane.push_back(static_cast<NodeId>(coords.size()));
        coords.push_back({j * p.node_spacing, y});
        if (j > 0) {
          edges.emplace_back(lane[j - 1], lane[j]);
        }
      }
      const NodeId left = static_cast<NodeId>(coords.size());
      coords.push_back({-p.connector_offset, y});
      const NodeId right = static_cast<NodeId>(coords.size());
      coords.push_back({lane_len + p.connector_offset, y});
      edges.emplace_back(left, lane.front());
      edges.emplace_back(right, lane.back());
      left_chain.push_back(left);
      right_chain.push_back(right);
      lanes.push_back(std::move(lane));
    }
  }
  for (size_t i = 1; i < left_chain.size(); ++i) {
    edges.emplace_back(left_chain[i - 1], left_chain[i]);
    edges.emplace_back(right_chain[i - 1], right_chain[i]);
  }
  if (p.spur_nodes > 0) {
    NodeId prev = left_chain.front();
    for (int s = 1; s <= p.spur_nodes; ++s) {
      const NodeId node = static_cast<NodeId>(coords.size());
      coords.push_back({-p.connector_offset - s * p.node_spacing, coords[prev].y});
      edges.emplace_back(prev, node);
      prev = node;
    }
  }
  return TopologicalMap(std::move(coords), edges, std::move(lanes));
}

}  // namespace topotrack
