// Template grammar for synthetic navigation instructions.

#include <cctype>
#include <map>
#include <sstream>

#include "navtrans/corpus.hpp"
#include "navtrans/rng.hpp"

namespace navtrans {

namespace {

const std::map<std::string, std::vector<std::string>>& phrase_table() {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"exit_office", {"exit the office", "leave the office", "go out of the room"}},
      {"enter_office", {"enter the office", "go into the room", "walk into the office"}},
      {"follow_corridor", {"follow the corridor", "go down the hallway", "walk along the corridor"}},
      {"turn_left", {"turn left", "make a left", "take a left turn"}},
      {"turn_right", {"turn right", "make a right", "take a right turn"}},
      {"go_straight", {"go straight", "continue straight ahead", "keep going forward"}},
      {"cross_hall", {"cross the hall", "walk across the hall", "pass through the hall"}},
      {"take_stairs", {"take the stairs", "climb the stairs", "use the stairway"}},
  };
  return table;
}

const std::vector<std::string> kConnectors = {"then", "and then", "after that", "next", ",", "and"};
const std::vector<std::string> kLandmarks = {"until you reach the", "towards the", "to the"};

// Unknown behaviors get two surface forms built from their name.
std::vector<std::string> phrases_for(const std::string& behavior) {
  const auto& table = phrase_table();
  if (const auto it = table.find(behavior); it != table.end()) return it->second;
  std::string words;
  for (char c : behavior) words += (c == '_' || c == '-') ? ' ' : c;
  return {words, "now " + words};
}

// Room type of a node name: the name with trailing digits removed.
std::string room_type(const std::string& node) {
  std::size_t end = node.size();
  while (end > 0 && std::isdigit(static_cast<unsigned char>(node[end - 1]))) --end;
  return end == 0 ? node : node.substr(0, end);
}

void append_words(std::vector<std::string>& out, const std::string& text) {
  std::istringstream is(text);
  for (std::string w; is >> w;) out.push_back(w);
}

}  // namespace

std::vector<std::string> render_instruction(const BehaviorGraph& graph, std::span<const Triplet> path,
                                            const GrammarChooser& choose) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0) append_words(tokens, kConnectors[choose(kConnectors.size())]);
    const auto phrases = phrases_for(graph.behavior_name(path[i].behavior));
    append_words(tokens, phrases[choose(phrases.size())]);
    if (choose(2) == 1) {
      append_words(tokens, kLandmarks[choose(kLandmarks.size())]);
      tokens.push_back(room_type(graph.node_name(path[i].to)));
    }
  }
  return tokens;
}

std::vector<std::string> generate_instruction(const BehaviorGraph& graph,
                                              std::span<const Triplet> path, std::uint64_t seed) {
  Rng rng(seed);
  return render_instruction(graph, path, [&](std::size_t n) { return rng.index(n); });
}

}  // namespace navtrans
