#include "gdyn/graph.hpp"

namespace gdyn::graph {

GraphSnapshot build_fully_connected(const std::vector<NodeState>& states) {
  if (states.size() < 2) throw std::invalid_argument("build_fully_connected: need >= 2 nodes");
  GraphSnapshot g;
  g.nodes = states;
  for (int i = 0; i < int(states.size()); ++i)
    for (int j = i + 1; j < int(states.size()); ++j) {
      g.edges.push_back({i, j});
      g.distances.push_back(norm(states[i].position - states[j].position));
    }
  return g;
}

GraphSnapshot apply_activations(const GraphSnapshot& g, const std::vector<bool>& active) {
  if (active.size() != g.edges.size())
    throw std::invalid_argument("apply_activations: activation count mismatch");
  GraphSnapshot out;
  out.nodes = g.nodes;
  for (size_t e = 0; e < g.edges.size(); ++e) {
    if (active[e]) {
      out.edges.push_back(g.edges[e]);
      out.distances.push_back(g.distances[e]);
    }
  }
  return out;
}

void GraphTrajectory::validate() const {
  if (snapshots.size() != controls.size() + 1)
    throw std::invalid_argument("GraphTrajectory: snapshot/control length mismatch");
  if (!contact_flags.empty() && contact_flags.size() != controls.size())
    throw std::invalid_argument("GraphTrajectory: contact flag length mismatch");
  int n = num_nodes();
  for (const auto& s : snapshots) {
    if (s.num_nodes() != n) throw std::invalid_argument("GraphTrajectory: node count varies");
    for (const auto& ns : s.nodes)
      if (!std::isfinite(ns.position[0]) || !std::isfinite(ns.position[1]) ||
          !std::isfinite(ns.velocity[0]) || !std::isfinite(ns.velocity[1]))
        throw std::invalid_argument("GraphTrajectory: non-finite node state");
  }
  for (const auto& u : controls)
    if (!std::isfinite(u[0]) || !std::isfinite(u[1]))
      throw std::invalid_argument("GraphTrajectory: non-finite control");
}

}  // namespace gdyn::graph
