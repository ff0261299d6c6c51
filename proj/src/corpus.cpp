#include "navtrans/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "navtrans/rng.hpp"

namespace navtrans {

namespace {

const std::vector<std::string> kRoomTypes = {"office", "corridor", "kitchen",  "bathroom", "lab",
                                             "lobby",  "hall",     "bedroom", "storage",  "lounge"};

constexpr int kEnvironmentAttempts = 100;
constexpr int kSampleAttempts = 200;

std::string map_id(std::size_t i, std::size_t count) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::max<std::size_t>(3, std::to_string(count - 1).size());
  return "map" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

std::size_t rounded(double x) { return static_cast<std::size_t>(std::llround(x)); }

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::TestRepeated: return "test_repeated";
    case Split::TestNew: return "test_new";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (Split s : kAllSplits)
    if (name == split_name(s)) return s;
  throw CorpusError("unknown split '" + std::string(name) +
                    "' (expected train, test_repeated or test_new)");
}

std::vector<std::string> default_behaviors() {
  return {"exit_office", "enter_office", "follow_corridor", "turn_left",
          "turn_right",  "go_straight",  "cross_hall",      "take_stairs"};
}

void CorpusConfig::validate() const {
  if (num_maps == 0) throw CorpusError("num_maps must be positive");
  if (rooms_min < 2) throw CorpusError("rooms_min must be at least 2");
  if (rooms_max < rooms_min) throw CorpusError("rooms_max must be >= rooms_min");
  if (behavior_vocab.empty()) throw CorpusError("behavior_vocab must not be empty");
  std::set<std::string> unique(behavior_vocab.begin(), behavior_vocab.end());
  if (unique.size() != behavior_vocab.size()) throw CorpusError("behavior_vocab has duplicates");
  if (sample_count() == 0) throw CorpusError("the corpus would contain no samples");
  if (total_samples != 0 && total_samples < num_maps)
    throw CorpusError("total_samples must be at least num_maps");
  double total = 0.0;
  for (double r : split_ratios) {
    if (r < 0.0 || r > 1.0) throw CorpusError("split ratios must lie in [0, 1]");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw CorpusError("split ratios must sum to 1");
  if (plan_length_min < 1 || plan_length_max < plan_length_min)
    throw CorpusError("plan length bounds must satisfy 1 <= min <= max");
  if (extra_edge_ratio < 0.0) throw CorpusError("extra_edge_ratio must be nonnegative");
}

std::size_t CorpusConfig::sample_count() const {
  return total_samples != 0 ? total_samples : num_maps * samples_per_map;
}

std::size_t CorpusConfig::samples_for_map(std::size_t map) const {
  if (total_samples == 0) return samples_per_map;
  return total_samples / num_maps + (map < total_samples % num_maps ? 1 : 0);
}

CorpusConfig CorpusConfig::full_scale() {
  CorpusConfig c;
  c.num_maps = 100;
  c.total_samples = 10040;
  c.split_ratios = {8066.0 / 10040.0, 987.0 / 10040.0, 987.0 / 10040.0};
  return c;
}

const std::vector<Sample>& Corpus::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::TestRepeated: return test_repeated;
    case Split::TestNew: return test_new;
  }
  return train;
}

std::vector<Sample>& Corpus::split(Split s) {
  return const_cast<std::vector<Sample>&>(std::as_const(*this).split(s));
}

const BehaviorGraph& Corpus::graph(const std::string& id) const {
  const auto it = graphs.find(id);
  if (it == graphs.end()) throw CorpusError("graph '" + id + "' is not in the graph store");
  return it->second;
}

std::vector<std::string> Corpus::behaviors() const {
  std::vector<std::string> out;
  for (const auto& [id, g] : graphs)
    for (const auto& b : g.behaviors())
      if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
  return out;
}

std::size_t Corpus::max_nodes() const {
  std::size_t n = 0;
  for (const auto& [id, g] : graphs) n = std::max(n, g.node_count());
  return n;
}

BehaviorGraph generate_environment(const CorpusConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t nb = config.behavior_vocab.size();
  const std::size_t n =
      static_cast<std::size_t>(rng.uniform_int(config.rooms_min, config.rooms_max));

  std::vector<std::string> names;
  std::map<std::string, int> type_counts;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& type = kRoomTypes[rng.index(kRoomTypes.size())];
    names.push_back(type + std::to_string(++type_counts[type]));
  }

  for (int attempt = 0; attempt < kEnvironmentAttempts; ++attempt) {
    // Undirected adjacencies, each realised as two directed edges whose
    // behaviors are drawn from those still free at the source node.
    std::vector<std::vector<bool>> used(n, std::vector<bool>(nb, false));
    std::vector<std::size_t> degree(n, 0);
    std::set<std::pair<std::size_t, std::size_t>> adjacent;
    std::vector<Triplet> edges;
    auto connect = [&](std::size_t u, std::size_t v) {
      for (auto [from, to] : {std::pair{u, v}, std::pair{v, u}}) {
        std::vector<std::size_t> free;
        for (std::size_t b = 0; b < nb; ++b)
          if (!used[from][b]) free.push_back(b);
        const std::size_t b = free[rng.index(free.size())];
        used[from][b] = true;
        edges.push_back({node_at(from), behavior_at(b), node_at(to)});
        ++degree[from];
      }
      adjacent.insert({std::min(u, v), std::max(u, v)});
    };

    bool ok = true;
    for (std::size_t i = 1; i < n && ok; ++i) {
      std::vector<std::size_t> parents;
      for (std::size_t j = 0; j < i; ++j)
        if (degree[j] < nb) parents.push_back(j);
      if (parents.empty()) {
        ok = false;
        break;
      }
      connect(parents[rng.index(parents.size())], i);
    }
    if (!ok) continue;

    const std::size_t extra = static_cast<std::size_t>(std::llround(config.extra_edge_ratio * n));
    for (std::size_t k = 0, tries = 0; k < extra && tries < 20 * extra; ++tries) {
      const std::size_t u = rng.index(n), v = rng.index(n);
      if (u == v || degree[u] >= nb || degree[v] >= nb) continue;
      if (adjacent.contains({std::min(u, v), std::max(u, v)})) continue;
      connect(u, v);
      ++k;
    }
    return BehaviorGraph(names, config.behavior_vocab, std::move(edges));
  }
  throw CorpusError("environment generation retries exhausted: cannot connect " + std::to_string(n) +
                    " rooms with " + std::to_string(nb) + " behavior(s) per room");
}

std::vector<Triplet> plan_path(const BehaviorGraph& graph, NodeIndex start, const Plan& plan) {
  std::vector<Triplet> path;
  NodeIndex at = start;
  for (BehaviorIndex b : plan) {
    const auto next = graph.successor(at, b);
    if (!next) throw GraphError("plan_path: plan is not executable");
    path.push_back({at, b, *next});
    at = *next;
  }
  return path;
}

void check_sample(const Corpus& corpus, const Sample& s) {
  const BehaviorGraph& g = corpus.graph(s.graph_id);
  if (s.instruction.empty()) throw CorpusError("empty instruction");
  if (s.target_plan.empty()) throw CorpusError("empty target_plan");
  const auto start = g.find_node(s.start);
  if (!start) throw CorpusError("start node '" + s.start + "' is not in graph " + s.graph_id);
  const auto goal = g.find_node(s.goal);
  if (!goal) throw CorpusError("goal node '" + s.goal + "' is not in graph " + s.graph_id);
  Plan plan;
  for (const auto& name : s.target_plan) {
    const auto b = g.find_behavior(name);
    if (!b) throw CorpusError("behavior '" + name + "' is not in graph " + s.graph_id);
    plan.push_back(*b);
  }
  const PlanOutcome r = execute_plan(g, *start, plan);
  if (!r.ok)
    throw CorpusError("target_plan fails at step " + std::to_string(r.failed_step) + " in graph " +
                      s.graph_id);
  if (r.end != *goal)
    throw CorpusError("target_plan ends at '" + g.node_name(r.end) + "', not at goal '" + s.goal + "'");
}

Corpus build_corpus(const CorpusConfig& config) {
  config.validate();
  const std::size_t total = config.sample_count();
  const std::size_t new_maps = rounded(config.num_maps * config.split_ratios[2]);
  if (config.split_ratios[2] > 0.0 && new_maps == 0)
    throw CorpusError("too few maps to reserve any for test_new");
  if (new_maps >= config.num_maps && config.split_ratios[0] > 0.0)
    throw CorpusError("too few maps: test_new would take every map");
  const std::size_t seen_maps = config.num_maps - new_maps;

  Corpus corpus;
  std::vector<std::vector<Sample>> per_map(config.num_maps);
  for (std::size_t m = 0; m < config.num_maps; ++m) {
    const std::string id = map_id(m, config.num_maps);
    BehaviorGraph g = generate_environment(config, mix_seed(config.seed, 2 * m));
    Rng rng(mix_seed(config.seed, 2 * m + 1));
    std::set<std::tuple<std::size_t, std::size_t, std::vector<std::string>>> keys;
    const std::size_t wanted = config.samples_for_map(m);
    int failures = 0;
    while (per_map[m].size() < wanted) {
      const NodeIndex start = node_at(rng.index(g.node_count()));
      const std::vector<int> dist = bfs_distances(g, start);
      const int ecc = *std::max_element(dist.begin(), dist.end());
      const std::size_t longest = std::min<std::size_t>(config.plan_length_max, ecc);
      const std::size_t shortest = std::min(config.plan_length_min, longest);
      const std::size_t length = rng.uniform_int(shortest, longest);
      std::vector<NodeIndex> goals;
      for (std::size_t v = 0; v < dist.size(); ++v)
        if (dist[v] == static_cast<int>(length)) goals.push_back(node_at(v));
      const NodeIndex goal = goals[rng.index(goals.size())];
      const Plan plan = shortest_plan(g, start, goal);
      const auto path = plan_path(g, start, plan);
      auto tokens = generate_instruction(g, path, rng.next());
      if (!keys.emplace(index_of(start), index_of(goal), tokens).second) {
        if (++failures > kSampleAttempts)
          throw CorpusError("map " + id + " cannot supply " + std::to_string(wanted) +
                            " distinct samples");
        continue;
      }
      Sample s;
      s.instruction = std::move(tokens);
      s.graph_id = id;
      s.start = g.node_name(start);
      s.goal = g.node_name(goal);
      for (BehaviorIndex b : plan) s.target_plan.push_back(g.behavior_name(b));
      per_map[m].push_back(std::move(s));
    }
    corpus.graphs.emplace(id, std::move(g));
  }

  std::vector<Sample> seen;
  for (std::size_t m = 0; m < config.num_maps; ++m) {
    auto& dst = m < seen_maps ? seen : corpus.test_new;
    dst.insert(dst.end(), per_map[m].begin(), per_map[m].end());
  }
  const std::size_t repeated = rounded(total * config.split_ratios[1]);
  if (repeated > seen.size() || (repeated == seen.size() && config.split_ratios[0] > 0.0))
    throw CorpusError("seen maps hold too few samples for the requested test_repeated share");

  std::vector<std::size_t> order(seen.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(mix_seed(config.seed, 2 * config.num_maps + 7));
  split_rng.shuffle(order);
  std::vector<bool> held_out(seen.size(), false);
  for (std::size_t i = 0; i < repeated; ++i) held_out[order[i]] = true;
  for (std::size_t i = 0; i < seen.size(); ++i)
    (held_out[i] ? corpus.test_repeated : corpus.train).push_back(std::move(seen[i]));
  return corpus;
}

}  // namespace navtrans
