#include "fedchs/topology.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>

#include "fedchs/errors.hpp"

namespace fedchs {

namespace {

std::vector<std::size_t> bfs_distances(const EsGraph& graph, int source) {
  constexpr auto kUnseen = static_cast<std::size_t>(-1);
  std::vector<std::size_t> dist(graph.size(), kUnseen);
  std::queue<int> frontier;
  dist[source] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const int node = frontier.front();
    frontier.pop();
    for (int next : graph.neighbors(node)) {
      if (dist[next] == kUnseen) {
        dist[next] = dist[node] + 1;
        frontier.push(next);
      }
    }
  }
  return dist;
}

}  // namespace

EsGraph EsGraph::from_edges(std::size_t node_count, const std::vector<Edge>& edges) {
  if (node_count == 0) throw ContractViolation("EsGraph: need at least one node");
  EsGraph graph;
  graph.adjacency_.resize(node_count);
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= node_count ||
        static_cast<std::size_t>(b) >= node_count) {
      throw ContractViolation("EsGraph: edge endpoint out of range");
    }
    if (a == b) {
      if (node_count != 1) throw ContractViolation("EsGraph: self-loops only allowed for a single node");
      if (graph.adjacency_[0].empty()) graph.adjacency_[0].push_back(0);
      continue;
    }
    if (graph.has_edge(a, b)) throw ContractViolation("EsGraph: duplicate edge");
    graph.adjacency_[a].push_back(b);
    graph.adjacency_[b].push_back(a);
  }
  if (node_count == 1 && graph.adjacency_[0].empty()) graph.adjacency_[0].push_back(0);
  for (auto& list : graph.adjacency_) std::sort(list.begin(), list.end());
  if (!is_connected(graph)) throw ContractViolation("EsGraph: graph is not connected");
  return graph;
}

std::size_t EsGraph::max_degree() const {
  std::size_t best = 0;
  for (const auto& list : adjacency_) best = std::max(best, list.size());
  return best;
}

bool EsGraph::has_edge(int a, int b) const {
  const auto& list = adjacency_.at(a);
  return std::find(list.begin(), list.end(), b) != list.end();
}

std::vector<EsGraph::Edge> EsGraph::edges() const {
  std::vector<Edge> out;
  for (std::size_t a = 0; a < adjacency_.size(); ++a) {
    for (int b : adjacency_[a]) {
      if (static_cast<int>(a) <= b) out.emplace_back(static_cast<int>(a), b);
    }
  }
  return out;
}

EsGraph random_connected_graph(std::size_t node_count, std::size_t max_degree, RandomStream stream) {
  if (node_count == 0) throw ContractViolation("random_connected_graph: need at least one node");
  if (node_count == 1) return EsGraph::from_edges(1, {{0, 0}});
  if (max_degree < 1 || (node_count >= 3 && max_degree < 2)) {
    throw ContractViolation("random_connected_graph: max_degree too small for a connected graph");
  }
  std::vector<int> order(node_count);
  std::iota(order.begin(), order.end(), 0);
  stream.shuffle(std::span<int>(order));

  std::vector<std::size_t> degree(node_count, 0);
  std::vector<std::vector<bool>> adjacent(node_count, std::vector<bool>(node_count, false));
  std::vector<EsGraph::Edge> edges;
  const auto connect = [&](int a, int b) {
    adjacent[a][b] = adjacent[b][a] = true;
    ++degree[a];
    ++degree[b];
    edges.emplace_back(std::min(a, b), std::max(a, b));
  };

  // Spanning tree: attach each node to a random earlier node with spare
  // degree. With max_degree >= 2 the newest leaf always has spare degree.
  for (std::size_t i = 1; i < node_count; ++i) {
    std::vector<int> open;
    for (std::size_t j = 0; j < i; ++j) {
      if (degree[order[j]] < max_degree) open.push_back(order[j]);
    }
    connect(order[i], open[stream.uniform_index(open.size())]);
  }
  // Extra edges: node_count random attempts, kept when they respect the bound.
  for (std::size_t attempt = 0; attempt < node_count; ++attempt) {
    const int a = static_cast<int>(stream.uniform_index(node_count));
    const int b = static_cast<int>(stream.uniform_index(node_count));
    if (a == b || adjacent[a][b] || degree[a] >= max_degree || degree[b] >= max_degree) continue;
    connect(a, b);
  }
  std::sort(edges.begin(), edges.end());
  return EsGraph::from_edges(node_count, edges);
}

EsGraph ring_graph(std::size_t node_count) {
  if (node_count < 3) throw ContractViolation("ring_graph: need at least three nodes");
  std::vector<EsGraph::Edge> edges;
  for (std::size_t i = 0; i < node_count; ++i) {
    edges.emplace_back(static_cast<int>(i), static_cast<int>((i + 1) % node_count));
  }
  return EsGraph::from_edges(node_count, edges);
}

EsGraph path_graph(std::size_t node_count) {
  if (node_count == 1) return EsGraph::from_edges(1, {{0, 0}});
  std::vector<EsGraph::Edge> edges;
  for (std::size_t i = 0; i + 1 < node_count; ++i) {
    edges.emplace_back(static_cast<int>(i), static_cast<int>(i + 1));
  }
  return EsGraph::from_edges(node_count, edges);
}

bool is_connected(const EsGraph& graph) {
  if (graph.size() == 0) return false;
  const auto dist = bfs_distances(graph, 0);
  return std::none_of(dist.begin(), dist.end(),
                      [](std::size_t d) { return d == static_cast<std::size_t>(-1); });
}

std::size_t diameter(const EsGraph& graph) {
  std::size_t best = 0;
  for (std::size_t s = 0; s < graph.size(); ++s) {
    const auto dist = bfs_distances(graph, static_cast<int>(s));
    best = std::max(best, *std::max_element(dist.begin(), dist.end()));
  }
  return best;
}

void write_edge_list(std::ostream& out, const EsGraph& graph) {
  for (auto [a, b] : graph.edges()) out << a << ' ' << b << '\n';
}

EsGraph read_edge_list(std::istream& in, std::size_t node_count) {
  std::vector<EsGraph::Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    int a = 0;
    int b = 0;
    if (!(fields >> a >> b)) {
      throw ContractViolation("read_edge_list: line " + std::to_string(line_no) + " is malformed");
    }
    edges.emplace_back(a, b);
  }
  return EsGraph::from_edges(node_count, edges);
}

}  // namespace fedchs
