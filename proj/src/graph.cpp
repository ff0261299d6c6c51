#include "navtrans/graph.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

namespace navtrans {

GraphParseError::GraphParseError(std::size_t line, std::string field, const std::string& message)
    : GraphError("line " + std::to_string(line) + ": " + field + ": " + message),
      line_(line),
      field_(std::move(field)) {}

BehaviorGraph::BehaviorGraph(std::vector<std::string> nodes, std::vector<std::string> behaviors,
                             std::vector<Triplet> edges)
    : nodes_(std::move(nodes)), behaviors_(std::move(behaviors)), edges_(std::move(edges)) {
  if (nodes_.empty()) throw GraphError("a behavior graph needs at least one node");
  auto check_unique = [](const std::vector<std::string>& names, const char* what) {
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) throw GraphError(std::string("duplicate ") + what + " '" + *dup + "'");
  };
  check_unique(nodes_, "node");
  check_unique(behaviors_, "behavior");

  std::sort(edges_.begin(), edges_.end());
  const std::size_t nb = behaviors_.size();
  next_.assign(nodes_.size() * std::max<std::size_t>(nb, 1), -1);
  for (const Triplet& t : edges_) {
    if (index_of(t.from) >= nodes_.size() || index_of(t.to) >= nodes_.size())
      throw GraphError("edge references a node index outside the node set");
    if (index_of(t.behavior) >= nb)
      throw GraphError("edge references a behavior index outside the vocabulary");
    auto& slot = next_[index_of(t.from) * nb + index_of(t.behavior)];
    if (slot != -1)
      throw GraphError("node '" + nodes_[index_of(t.from)] + "' has more than one out-edge labeled '" +
                       behaviors_[index_of(t.behavior)] +
                       "'; (node, behavior) pairs must be unique so plans execute deterministically");
    slot = static_cast<std::int64_t>(index_of(t.to));
  }
}

std::optional<NodeIndex> BehaviorGraph::find_node(std::string_view name) const {
  const auto it = std::find(nodes_.begin(), nodes_.end(), name);
  if (it == nodes_.end()) return std::nullopt;
  return node_at(static_cast<std::size_t>(it - nodes_.begin()));
}

std::optional<BehaviorIndex> BehaviorGraph::find_behavior(std::string_view name) const {
  const auto it = std::find(behaviors_.begin(), behaviors_.end(), name);
  if (it == behaviors_.end()) return std::nullopt;
  return behavior_at(static_cast<std::size_t>(it - behaviors_.begin()));
}

std::optional<NodeIndex> BehaviorGraph::successor(NodeIndex n, BehaviorIndex b) const {
  if (index_of(n) >= nodes_.size() || index_of(b) >= behaviors_.size()) return std::nullopt;
  const auto v = next_[index_of(n) * behaviors_.size() + index_of(b)];
  if (v < 0) return std::nullopt;
  return node_at(static_cast<std::size_t>(v));
}

bool BehaviorGraph::operator==(const BehaviorGraph& other) const {
  return nodes_ == other.nodes_ && behaviors_ == other.behaviors_ && edges_ == other.edges_;
}

PlanOutcome execute_plan(const BehaviorGraph& g, NodeIndex start, const Plan& plan) {
  PlanOutcome out;
  out.end = start;
  for (std::size_t step = 0; step < plan.size(); ++step) {
    const auto next = g.successor(out.end, plan[step]);
    if (!next) {
      out.failed_step = step;
      return out;
    }
    out.end = *next;
  }
  out.ok = true;
  out.failed_step = plan.size();
  return out;
}

NodeIndex validate_plan(const BehaviorGraph& g, NodeIndex start, const Plan& plan) {
  if (index_of(start) >= g.node_count())
    throw UnknownStart("start node index " + std::to_string(index_of(start)) + " is not in the graph");
  const PlanOutcome r = execute_plan(g, start, plan);
  if (!r.ok) {
    const auto b = plan[r.failed_step];
    const std::string bname =
        index_of(b) < g.behavior_count() ? g.behavior_name(b) : "#" + std::to_string(index_of(b));
    throw NoSuchEdge(r.failed_step, "step " + std::to_string(r.failed_step) + ": node '" +
                                        g.node_name(r.end) + "' has no out-edge labeled '" + bname +
                                        "'");
  }
  return r.end;
}

std::vector<int> bfs_distances(const BehaviorGraph& g, NodeIndex start) {
  std::vector<int> dist(g.node_count(), -1);
  std::deque<NodeIndex> queue{start};
  dist[index_of(start)] = 0;
  while (!queue.empty()) {
    const NodeIndex n = queue.front();
    queue.pop_front();
    for (std::size_t b = 0; b < g.behavior_count(); ++b) {
      const auto m = g.successor(n, behavior_at(b));
      if (m && dist[index_of(*m)] < 0) {
        dist[index_of(*m)] = dist[index_of(n)] + 1;
        queue.push_back(*m);
      }
    }
  }
  return dist;
}

Plan shortest_plan(const BehaviorGraph& g, NodeIndex start, NodeIndex goal) {
  if (index_of(start) >= g.node_count() || index_of(goal) >= g.node_count())
    throw UnknownStart("shortest_plan: node index outside the graph");
  // Distances to goal over reversed edges; then walk forward greedily,
  // taking the smallest behavior that stays on a shortest path.
  std::vector<std::vector<NodeIndex>> preds(g.node_count());
  for (const Triplet& t : g.edges()) preds[index_of(t.to)].push_back(t.from);
  std::vector<int> to_goal(g.node_count(), -1);
  std::deque<NodeIndex> queue{goal};
  to_goal[index_of(goal)] = 0;
  while (!queue.empty()) {
    const NodeIndex n = queue.front();
    queue.pop_front();
    for (NodeIndex p : preds[index_of(n)])
      if (to_goal[index_of(p)] < 0) {
        to_goal[index_of(p)] = to_goal[index_of(n)] + 1;
        queue.push_back(p);
      }
  }
  if (to_goal[index_of(start)] < 0)
    throw Unreachable("node '" + g.node_name(goal) + "' is unreachable from '" + g.node_name(start) +
                      "'");

  Plan plan;
  NodeIndex at = start;
  while (at != goal) {
    for (std::size_t b = 0; b < g.behavior_count(); ++b) {
      const auto m = g.successor(at, behavior_at(b));
      if (m && to_goal[index_of(*m)] == to_goal[index_of(at)] - 1) {
        plan.push_back(behavior_at(b));
        at = *m;
        break;
      }
    }
  }
  return plan;
}

TripletFeatures triplet_features(const BehaviorGraph& g, std::size_t node_capacity) {
  if (node_capacity < g.node_count())
    throw GraphError("graph has " + std::to_string(g.node_count()) +
                     " nodes, more than the encoder capacity of " + std::to_string(node_capacity));
  TripletFeatures f;
  f.width = 2 * node_capacity + g.behavior_count();
  for (const Triplet& t : g.edges()) {
    f.from.push_back(index_of(t.from));
    f.behavior.push_back(node_capacity + index_of(t.behavior));
    f.to.push_back(node_capacity + g.behavior_count() + index_of(t.to));
  }
  return f;
}

ad::Tensor encode_triplets(const BehaviorGraph& g, std::optional<std::size_t> node_capacity) {
  if (g.edges().empty()) throw GraphError("encode_triplets: the graph has no edges");
  const TripletFeatures f = triplet_features(g, node_capacity.value_or(g.node_count()));
  const std::size_t rows = g.edges().size();
  std::vector<double> v(rows * f.width, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    v[r * f.width + f.from[r]] = 1.0;
    v[r * f.width + f.behavior[r]] = 1.0;
    v[r * f.width + f.to[r]] = 1.0;
  }
  return ad::Tensor::from(rows, f.width, std::move(v));
}

// ---- document format ----------------------------------------------------------

namespace {

std::size_t line_of(const YAML::Node& n) { return static_cast<std::size_t>(n.Mark().line) + 1; }

std::vector<std::pair<std::string, std::size_t>> read_names(const YAML::Node& root, const char* key) {
  const YAML::Node seq = root[key];
  if (!seq) throw GraphParseError(line_of(root), key, "missing field");
  if (!seq.IsSequence()) throw GraphParseError(line_of(seq), key, "expected a list of names");
  std::vector<std::pair<std::string, std::size_t>> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const YAML::Node item = seq[i];
    const std::string field = std::string(key) + "[" + std::to_string(i) + "]";
    if (!item.IsScalar()) throw GraphParseError(line_of(item), field, "expected a name");
    out.emplace_back(item.Scalar(), line_of(item));
  }
  return out;
}

}  // namespace

BehaviorGraph parse_graph(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw GraphParseError(static_cast<std::size_t>(e.mark.line) + 1, "document", e.msg);
  }
  if (!root.IsMap()) throw GraphParseError(1, "document", "expected a mapping with nodes, behaviors, edges");
  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    if (key != "nodes" && key != "behaviors" && key != "edges")
      throw GraphParseError(line_of(kv.first), key, "unknown field");
  }

  const auto node_names = read_names(root, "nodes");
  const auto behavior_names = read_names(root, "behaviors");
  std::map<std::string, std::size_t> node_ix, behavior_ix;
  for (std::size_t i = 0; i < node_names.size(); ++i)
    if (!node_ix.emplace(node_names[i].first, i).second)
      throw GraphParseError(node_names[i].second, "nodes[" + std::to_string(i) + "]",
                            "duplicate node '" + node_names[i].first + "'");
  for (std::size_t i = 0; i < behavior_names.size(); ++i)
    if (!behavior_ix.emplace(behavior_names[i].first, i).second)
      throw GraphParseError(behavior_names[i].second, "behaviors[" + std::to_string(i) + "]",
                            "duplicate behavior '" + behavior_names[i].first + "'");
  if (node_names.empty()) throw GraphParseError(line_of(root["nodes"]), "nodes", "no nodes declared");

  const YAML::Node edges = root["edges"];
  if (!edges) throw GraphParseError(line_of(root), "edges", "missing field");
  if (!edges.IsSequence()) throw GraphParseError(line_of(edges), "edges", "expected a list of triplets");

  std::vector<Triplet> triplets;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;  // (from, behavior) -> edge index
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const YAML::Node e = edges[i];
    const std::string field = "edges[" + std::to_string(i) + "]";
    if (!e.IsSequence() || e.size() != 3)
      throw GraphParseError(line_of(e), field, "expected [from, behavior, to]");
    for (std::size_t k = 0; k < 3; ++k)
      if (!e[k].IsScalar())
        throw GraphParseError(line_of(e[k]), field + "[" + std::to_string(k) + "]", "expected a name");
    auto lookup = [&](const std::map<std::string, std::size_t>& m, std::size_t k, const char* what) {
      const std::string name = e[k].Scalar();
      const auto it = m.find(name);
      if (it == m.end())
        throw GraphParseError(line_of(e[k]), field + "[" + std::to_string(k) + "]",
                              std::string("undefined ") + what + " '" + name + "'");
      return it->second;
    };
    const std::size_t from = lookup(node_ix, 0, "node");
    const std::size_t b = lookup(behavior_ix, 1, "behavior");
    const std::size_t to = lookup(node_ix, 2, "node");
    const auto [it, fresh] = seen.emplace(std::make_pair(from, b), i);
    if (!fresh)
      throw GraphParseError(line_of(e), field,
                            "node '" + node_names[from].first + "' already has an out-edge labeled '" +
                                behavior_names[b].first + "' (edges[" + std::to_string(it->second) +
                                "]); out-edges must be unique per (node, behavior) for deterministic "
                                "execution");
    triplets.push_back({node_at(from), behavior_at(b), node_at(to)});
  }

  std::vector<std::string> nodes, behaviors;
  for (const auto& [name, line] : node_names) nodes.push_back(name);
  for (const auto& [name, line] : behavior_names) behaviors.push_back(name);
  return BehaviorGraph(std::move(nodes), std::move(behaviors), std::move(triplets));
}

std::string serialize_graph(const BehaviorGraph& g) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "nodes" << YAML::Value << YAML::Flow << g.nodes();
  out << YAML::Key << "behaviors" << YAML::Value << YAML::Flow << g.behaviors();
  out << YAML::Key << "edges" << YAML::Value;
  if (g.edges().empty()) {
    out << YAML::Flow << YAML::BeginSeq << YAML::EndSeq;
  } else {
    out << YAML::BeginSeq;
    for (const Triplet& t : g.edges())
      out << YAML::Flow << YAML::BeginSeq << g.node_name(t.from) << g.behavior_name(t.behavior)
          << g.node_name(t.to) << YAML::EndSeq;
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace navtrans
