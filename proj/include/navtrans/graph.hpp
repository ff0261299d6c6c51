#pragma once

// Behavioral navigation graph: places are nodes, high-level behaviors label
// directed edges. Node and behavior orderings are fixed at construction and
// define the one-hot indices used by the graph encoder.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "navtrans/tensor.hpp"

namespace navtrans {

enum class NodeIndex : std::uint32_t {};
enum class BehaviorIndex : std::uint32_t {};

constexpr std::size_t index_of(NodeIndex n) { return static_cast<std::size_t>(n); }
constexpr std::size_t index_of(BehaviorIndex b) { return static_cast<std::size_t>(b); }
constexpr NodeIndex node_at(std::size_t i) { return static_cast<NodeIndex>(i); }
constexpr BehaviorIndex behavior_at(std::size_t i) { return static_cast<BehaviorIndex>(i); }

struct Triplet {
  NodeIndex from;
  BehaviorIndex behavior;
  NodeIndex to;

  auto operator<=>(const Triplet&) const = default;
};

using Plan = std::vector<BehaviorIndex>;

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GraphParseError : public GraphError {
 public:
  GraphParseError(std::size_t line, std::string field, const std::string& message);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class NoSuchEdge : public GraphError {
 public:
  NoSuchEdge(std::size_t step, const std::string& message) : GraphError(message), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class UnknownStart : public GraphError {
 public:
  using GraphError::GraphError;
};

class Unreachable : public GraphError {
 public:
  using GraphError::GraphError;
};

class BehaviorGraph {
 public:
  BehaviorGraph() = default;
  // Throws GraphError when a triplet references an unknown index, names
  // repeat, or a (node, behavior) pair has more than one out-edge.
  BehaviorGraph(std::vector<std::string> nodes, std::vector<std::string> behaviors,
                std::vector<Triplet> edges);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t behavior_count() const { return behaviors_.size(); }
  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<std::string>& behaviors() const { return behaviors_; }
  const std::string& node_name(NodeIndex n) const { return nodes_.at(index_of(n)); }
  const std::string& behavior_name(BehaviorIndex b) const { return behaviors_.at(index_of(b)); }
  std::optional<NodeIndex> find_node(std::string_view name) const;
  std::optional<BehaviorIndex> find_behavior(std::string_view name) const;

  // Triplets in lexicographic (from, behavior, to) order.
  const std::vector<Triplet>& edges() const { return edges_; }
  std::optional<NodeIndex> successor(NodeIndex n, BehaviorIndex b) const;

  bool operator==(const BehaviorGraph& other) const;

 private:
  std::vector<std::string> nodes_;
  std::vector<std::string> behaviors_;
  std::vector<Triplet> edges_;
  std::vector<std::int64_t> next_;  // node * |B| + behavior -> successor or -1
};

struct PlanOutcome {
  bool ok = false;
  NodeIndex end{};             // node reached (last valid node on failure)
  std::size_t failed_step = 0;  // first step with no matching out-edge
};

// Non-throwing plan execution; start must be a valid node.
PlanOutcome execute_plan(const BehaviorGraph& g, NodeIndex start, const Plan& plan);

// Node reached by executing plan from start. Throws UnknownStart or
// NoSuchEdge (carrying the failing step index).
NodeIndex validate_plan(const BehaviorGraph& g, NodeIndex start, const Plan& plan);

// Hop distances from start along out-edges; -1 for unreachable nodes.
std::vector<int> bfs_distances(const BehaviorGraph& g, NodeIndex start);

// Minimum-length plan from start to goal. Among shortest plans the
// lexicographically smallest behavior sequence is returned. Throws
// Unreachable.
Plan shortest_plan(const BehaviorGraph& g, NodeIndex start, NodeIndex goal);

// One row per triplet (lexicographic order): one-hot(from) ++ one-hot(b) ++
// one-hot(to), width 2 * node_capacity + |B|. node_capacity defaults to the
// graph's own node count; the model passes its fixed capacity so graphs of
// different sizes share one input width.
ad::Tensor encode_triplets(const BehaviorGraph& g, std::optional<std::size_t> node_capacity = {});

// Column positions of the three hot entries of each encode_triplets row.
struct TripletFeatures {
  std::size_t width = 0;
  std::vector<std::size_t> from, behavior, to;
};
TripletFeatures triplet_features(const BehaviorGraph& g, std::size_t node_capacity);

// Graph document (YAML):
//   nodes: [name, ...]
//   behaviors: [name, ...]
//   edges:
//     - [from, behavior, to]
BehaviorGraph parse_graph(std::string_view text);
std::string serialize_graph(const BehaviorGraph& g);

}  // namespace navtrans
