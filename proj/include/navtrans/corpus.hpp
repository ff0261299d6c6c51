#pragma once

// Synthetic navigation corpus: random environments, template-grammar
// instructions, shortest-path target plans, and the three evaluation splits
// (train, test_repeated on seen maps, test_new on unseen maps).

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "navtrans/graph.hpp"

namespace navtrans {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sample {
  std::vector<std::string> instruction;
  std::string graph_id;
  std::string start;
  std::string goal;
  std::vector<std::string> target_plan;

  bool operator==(const Sample&) const = default;
};

enum class Split { Train, TestRepeated, TestNew };

const char* split_name(Split s);
Split parse_split(std::string_view name);  // throws CorpusError
inline constexpr std::array<Split, 3> kAllSplits = {Split::Train, Split::TestRepeated, Split::TestNew};

std::vector<std::string> default_behaviors();

struct CorpusConfig {
  std::size_t num_maps = 100;
  std::size_t rooms_min = 6;
  std::size_t rooms_max = 65;
  std::vector<std::string> behavior_vocab = default_behaviors();
  std::size_t samples_per_map = 100;
  // When nonzero, overrides num_maps * samples_per_map; the remainder is
  // spread one sample at a time over the first maps.
  std::size_t total_samples = 0;
  std::uint64_t seed = 1;
  std::array<double, 3> split_ratios = {0.8, 0.1, 0.1};  // train, test_repeated, test_new
  std::size_t plan_length_min = 1;
  std::size_t plan_length_max = 8;
  // Extra undirected adjacencies per room on top of the spanning tree.
  double extra_edge_ratio = 0.3;

  void validate() const;  // throws CorpusError
  std::size_t sample_count() const;
  std::size_t samples_for_map(std::size_t map) const;

  // 100 maps, 10,040 instructions, 8,066 of them in train.
  static CorpusConfig full_scale();
};

struct Corpus {
  std::map<std::string, BehaviorGraph> graphs;
  std::vector<Sample> train;
  std::vector<Sample> test_repeated;
  std::vector<Sample> test_new;

  const std::vector<Sample>& split(Split s) const;
  std::vector<Sample>& split(Split s);
  const BehaviorGraph& graph(const std::string& id) const;  // throws CorpusError
  // Behavior vocabulary shared by the graphs (first-seen order by graph id).
  std::vector<std::string> behaviors() const;
  std::size_t max_nodes() const;
  bool operator==(const Corpus&) const = default;
};

BehaviorGraph generate_environment(const CorpusConfig& config, std::uint64_t seed);

// Picks alternatives while rendering: receives the number of options and
// returns an index in [0, n).
using GrammarChooser = std::function<std::size_t(std::size_t)>;

std::vector<std::string> render_instruction(const BehaviorGraph& graph, std::span<const Triplet> path,
                                            const GrammarChooser& choose);
std::vector<std::string> generate_instruction(const BehaviorGraph& graph,
                                              std::span<const Triplet> path, std::uint64_t seed);

// Triplets traversed when executing plan from start.
std::vector<Triplet> plan_path(const BehaviorGraph& graph, NodeIndex start, const Plan& plan);

Corpus build_corpus(const CorpusConfig& config);

// Throws CorpusError when a sample's plan does not lead to its goal.
void check_sample(const Corpus& corpus, const Sample& sample);

// Directory layout: graphs/<graph_id>.yaml and corpus.jsonl with one record
// per line: {"goal", "graph_id", "instruction", "split", "start", "target_plan"}.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);
std::string corpus_record(const Sample& s, Split split);

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kStart = 2;
  static constexpr std::size_t kEnd = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();
  // Tokens in index order; the first four must be the reserved markers.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t index(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return index_.contains(token); }
  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<std::size_t> encode(std::span<const std::string> tokens) const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

// Vocabulary over the given (training) samples: indices after the reserved
// block follow descending frequency, ties broken lexicographically.
Vocabulary build_vocab(std::span<const Sample> samples);

// Reads whitespace-separated "token v1 ... vD" lines. Rows for vocabulary
// tokens present in the file are copied; all other rows are drawn from
// N(mean_d, std_d) per dimension of the file's vectors, seeded.
ad::Tensor load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                      std::uint64_t seed);

}  // namespace navtrans
