#include <doctest.h>

#include "gdyn/graph.hpp"

using namespace gdyn;
using graph::GraphSnapshot;
using graph::NodeState;
using graph::Vec2;

namespace {
std::vector<NodeState> square_nodes() {
  return {{{0, 0}, {0, 0}}, {{1, 0}, {0, 0}}, {{1, 1}, {0, 0}}, {{0, 1}, {0, 0}}};
}
}  // namespace

TEST_CASE("fully connected: edge count, ordering, distances") {
  GraphSnapshot g = graph::build_fully_connected(square_nodes());
  CHECK(g.num_edges() == 6);  // n(n-1)/2
  for (int e = 0; e < g.num_edges(); ++e) {
    CHECK(g.edges[e].i < g.edges[e].j);
    double want = graph::norm(g.nodes[g.edges[e].i].position - g.nodes[g.edges[e].j].position);
    CHECK(g.distances[e] == doctest::Approx(want));
  }
  CHECK(g.distances[0] == doctest::Approx(1.0));             // (0,1)
  CHECK(g.distances[1] == doctest::Approx(std::sqrt(2.0)));  // (0,2)
  CHECK_THROWS_AS(graph::build_fully_connected({NodeState{}}), std::invalid_argument);
}

TEST_CASE("apply_activations keeps exactly the active subset") {
  GraphSnapshot g = graph::build_fully_connected(square_nodes());
  std::vector<bool> mask = {true, false, false, true, false, true};
  GraphSnapshot sub = graph::apply_activations(g, mask);
  CHECK(sub.num_edges() == 3);
  CHECK(sub.num_nodes() == 4);
  CHECK(sub.edges[0].i == 0);
  CHECK(sub.edges[0].j == 1);
  CHECK(sub.edges[1].i == 1);
  CHECK(sub.edges[1].j == 2);
  CHECK(sub.edges[2].i == 2);
  CHECK(sub.edges[2].j == 3);
  CHECK_THROWS_AS(graph::apply_activations(g, std::vector<bool>{true}), std::invalid_argument);
}

TEST_CASE("node features are [q, v]") {
  NodeState n{{1.5, -2.0}, {0.25, 4.0}};
  auto f = n.features();
  CHECK(f[0] == 1.5);
  CHECK(f[1] == -2.0);
  CHECK(f[2] == 0.25);
  CHECK(f[3] == 4.0);
}

TEST_CASE("trajectory validation") {
  graph::GraphTrajectory tr;
  tr.dt = 0.05;
  auto nodes = square_nodes();
  tr.snapshots.push_back(graph::build_fully_connected(nodes));
  tr.snapshots.push_back(graph::build_fully_connected(nodes));
  tr.controls.push_back(Vec2{0, 0});
  tr.contact_flags.push_back(std::vector<bool>(6, false));
  CHECK_NOTHROW(tr.validate());

  tr.controls.push_back(Vec2{0, 0});  // now snapshots != controls + 1
  CHECK_THROWS_AS(tr.validate(), std::invalid_argument);
}

TEST_CASE("vec2 arithmetic") {
  Vec2 a{1, 2}, b{3, -1};
  CHECK((a + b) == Vec2{4, 1});
  CHECK((a - b) == Vec2{-2, 3});
  CHECK((2.0 * a) == Vec2{2, 4});
  CHECK(graph::norm(Vec2{3, 4}) == doctest::Approx(5.0));
}
