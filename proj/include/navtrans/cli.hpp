#pragma once

// The navtrans command line. run() is the whole program minus process setup,
// so tests drive it in-process with captured streams.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "navtrans/corpus.hpp"
#include "navtrans/metrics.hpp"
#include "navtrans/training.hpp"

namespace navtrans::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

// Everything a command can be configured with, as one flat document. Every
// field is also a flag: batch_size is --batch-size. "seed" drives corpus
// generation in generate-corpus and initialization/shuffling elsewhere.
struct Settings {
  CorpusConfig corpus;
  TrainConfig train;
  std::size_t ablation_seeds = 3;

  std::string to_json() const;
  // Applies the keys present in a JSON object. Throws ConfigError on unknown
  // keys or mistyped values.
  void merge_json(const std::string& text);
  // Applies one field from its command-line spelling.
  void set_field(const std::string& name, const std::string& value);
  static std::vector<std::string> field_names();
};

// Lower-cased words; commas become their own token, other punctuation is
// dropped.
std::vector<std::string> tokenize_instruction(std::string_view text);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 14695981039346656037ULL);
// Hash over the relative paths and contents of every regular file below dir,
// in sorted path order.
std::uint64_t hash_tree(const std::filesystem::path& dir);
std::string hex64(std::uint64_t value);

struct AblationCell {
  std::size_t heads = 0;
  Split split = Split::TestNew;
  std::vector<MetricsReport> runs;  // one per seed
  MetricsReport mean;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // (heads, split) in heads-major order
  double test_new_delta = 0.0;      // mean Test-New M@0, heads=4 minus heads=1
  bool expected_direction = true;   // delta >= 0
};

MetricsReport mean_report(std::span<const MetricsReport> runs);
std::string format_ablation(const AblationResult& result);
std::string ablation_json(const AblationResult& result);

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace navtrans::cli
