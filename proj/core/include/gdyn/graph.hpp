#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gdyn::graph {

inline constexpr int kSpatialDim = 2;

struct Vec2 {
  double v[2]{0.0, 0.0};
  double& operator[](int i) { return v[i]; }
  double operator[](int i) const { return v[i]; }
  bool operator==(const Vec2&) const = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a[0], s * a[1]}; }
inline Vec2& operator+=(Vec2& a, Vec2 b) { a = a + b; return a; }
inline double norm(Vec2 a) { return std::hypot(a[0], a[1]); }

/// Per-object state; the model-facing feature vector is [q, qdot].
struct NodeState {
  Vec2 position{0.0, 0.0};
  Vec2 velocity{0.0, 0.0};

  std::array<double, 2 * kSpatialDim> features() const {
    return {position[0], position[1], velocity[0], velocity[1]};
  }
};

/// Unordered node pair, stored with i < j.
struct Edge {
  int i = 0, j = 0;
};

/// One time slice of the interaction graph. Node 0 is the actuated gripper
/// by dataset convention. Edges are the full unordered pair set unless an
/// activation mask has been applied.
struct GraphSnapshot {
  std::vector<NodeState> nodes;
  std::vector<Edge> edges;
  std::vector<double> distances;  // parallel to edges

  int num_nodes() const { return int(nodes.size()); }
  int num_edges() const { return int(edges.size()); }
};

/// Builds the fully connected snapshot: all n(n-1)/2 undirected edges with
/// Euclidean distances. Throws for fewer than two nodes.
GraphSnapshot build_fully_connected(const std::vector<NodeState>& states);

/// Keeps exactly the edges whose activation is true. One flag per edge.
GraphSnapshot apply_activations(const GraphSnapshot& g, const std::vector<bool>& active);

/// Per-edge categorical over {active, inactive}; index 0 = active.
struct EdgeDistribution {
  std::array<double, 2> p{0.5, 0.5};
};

/// Trajectory of snapshots with controls and evaluation-only contact flags.
/// controls[t] acts between snapshot t and t+1.
struct GraphTrajectory {
  double dt = 0.05;
  std::vector<GraphSnapshot> snapshots;          // t = 0..T
  std::vector<Vec2> controls;                    // t = 0..T-1
  std::vector<std::vector<bool>> contact_flags;  // [t][edge], parallel to snapshot edges

  int num_steps() const { return int(controls.size()); }
  int num_nodes() const { return snapshots.empty() ? 0 : snapshots[0].num_nodes(); }

  void validate() const;
};

}  // namespace gdyn::graph
