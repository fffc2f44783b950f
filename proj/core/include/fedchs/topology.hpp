#pragma once

#include <cstddef>
#include <iosfwd>
#include <utility>
#include <vector>

#include "fedchs/numerics.hpp"

namespace fedchs {

/// Undirected connected graph over edge servers (or clients, for the
/// random-walk baseline). Neighbor lists are sorted. A single node carries a
/// self-loop so that "pick a neighbor" is always defined.
class EsGraph {
 public:
  using Edge = std::pair<int, int>;

  /// Edges are undirected: (a, b) and (b, a) name the same edge and may not
  /// both appear. Self-loops are only allowed when node_count == 1, and the
  /// result must be connected.
  static EsGraph from_edges(std::size_t node_count, const std::vector<Edge>& edges);

  std::size_t size() const { return adjacency_.size(); }
  const std::vector<int>& neighbors(int node) const { return adjacency_.at(node); }
  std::size_t degree(int node) const { return adjacency_.at(node).size(); }
  std::size_t max_degree() const;
  bool has_edge(int a, int b) const;
  // Each undirected edge once, as (low, high), sorted.
  std::vector<Edge> edges() const;

 private:
  std::vector<std::vector<int>> adjacency_;
};

/// Random spanning tree with bounded degree plus random extra edges that keep
/// the bound. Deterministic for a given stream.
EsGraph random_connected_graph(std::size_t node_count, std::size_t max_degree, RandomStream stream);

EsGraph ring_graph(std::size_t node_count);
EsGraph path_graph(std::size_t node_count);

bool is_connected(const EsGraph& graph);
// Largest shortest-path distance between any two nodes.
std::size_t diameter(const EsGraph& graph);

/// One `a b` pair per line, 0-based node ids.
void write_edge_list(std::ostream& out, const EsGraph& graph);
EsGraph read_edge_list(std::istream& in, std::size_t node_count);

inline constexpr std::size_t kDefaultMaxDegree = 3;

}  // namespace fedchs
