#pragma once

// Teacher-forced cross-entropy training with Adam and global gradient-norm
// clipping, split evaluation and checkpoints.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "navtrans/corpus.hpp"
#include "navtrans/metrics.hpp"
#include "navtrans/model.hpp"

namespace navtrans {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  std::size_t heads = 4;
  std::size_t embed_dim = 32;
  std::size_t hidden = 64;
  std::size_t context_dim = 64;
  std::size_t attention_dim = 64;
  std::size_t behavior_embed_dim = 32;
  std::size_t max_decode_len = 16;
  std::size_t node_capacity = 0;        // 0: largest graph in the corpus
  std::size_t checkpoint_interval = 0;  // epochs between checkpoints; 0: final only
  std::string val_split = "test_repeated";  // or "none"
  std::size_t val_every = 1;
  std::string embeddings;  // optional pretrained word vectors
  std::string corpus;

  // Every field by name; the JSON form and the command-line overrides are
  // both generated from this list.
  template <class F>
  void visit_fields(F&& f) {
    f("seed", seed);
    f("epochs", epochs);
    f("batch_size", batch_size);
    f("learning_rate", learning_rate);
    f("clip_norm", clip_norm);
    f("heads", heads);
    f("embed_dim", embed_dim);
    f("hidden", hidden);
    f("context_dim", context_dim);
    f("attention_dim", attention_dim);
    f("behavior_embed_dim", behavior_embed_dim);
    f("max_decode_len", max_decode_len);
    f("node_capacity", node_capacity);
    f("checkpoint_interval", checkpoint_interval);
    f("val_split", val_split);
    f("val_every", val_every);
    f("embeddings", embeddings);
    f("corpus", corpus);
  }

  ModelConfig model() const;
  std::optional<Split> validation_split() const;
  // Throws ConfigError.
  void validate() const;

  std::string to_json() const;
  // Missing keys keep their defaults; unknown keys throw ConfigError.
  static TrainConfig from_json(const std::string& text);
};

struct AdamState {
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> m, v;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<std::pair<std::string, ad::Tensor>> params, AdamState& state) const;

 private:
  double lr_, beta1_, beta2_, eps_;
};

// Scales all gradients so that their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_gradients(std::span<std::pair<std::string, ad::Tensor>> params, double max_norm);
double gradient_norm(std::span<std::pair<std::string, ad::Tensor>> params);

struct Checkpoint {
  TrainConfig config;
  Model model;
  std::size_t epoch = 0;  // completed epochs
  std::string rng_state;  // shuffling stream
  AdamState adam;
};

// Fresh model for the corpus: vocabulary from the training split, behaviors
// from the graphs, node capacity from the largest graph unless configured.
Checkpoint initial_checkpoint(const TrainConfig& config, const Corpus& corpus);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);  // throws ArchiveError / ConfigError

class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(std::size_t epoch, std::size_t batch, const std::string& what)
      : std::runtime_error(what), epoch(epoch), batch(batch) {}
  std::size_t epoch;
  std::size_t batch;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_m_at_0;  // percent
  double wall_time = 0.0;            // seconds since training started

  // The deterministic part of the record (everything but wall time).
  bool same_result(const EpochRecord& o) const {
    return epoch == o.epoch && train_loss == o.train_loss && val_m_at_0 == o.val_m_at_0;
  }
};
std::string epoch_record_json(const EpochRecord& record);

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const Checkpoint&)> on_checkpoint;  // every checkpoint_interval epochs
};

// Mean per-position loss over a whole split, without gradients.
double dataset_loss(const Model& model, const EncodedDataset& data, Split split, std::size_t batch_size);

// Runs the remaining epochs (checkpoint.epoch + 1 .. config.epochs), updating
// checkpoint in place. Throws NumericalFailure on a non-finite loss.
std::vector<EpochRecord> train(Checkpoint& checkpoint, const EncodedDataset& data, const TrainHooks& hooks = {});

struct SampleRecord {
  std::size_t index = 0;
  std::string graph_id, start, goal;
  std::vector<std::string> instruction, gold, predicted;
  bool truncated = false;
  std::size_t edit_distance = 0;
  double f1 = 0.0;
  bool valid = false;  // every predicted step has a matching out-edge
  std::optional<std::size_t> failed_step;
  std::string end_node;
  bool reached_goal = false;
};
std::string sample_record_json(const SampleRecord& record);

struct Evaluation {
  MetricsReport report;
  std::vector<SampleRecord> records;
};

struct Prediction {
  std::vector<std::string> plan;  // behavior names
  bool truncated = false;
};

// Scores one prediction per sample of the split against its gold plan.
Evaluation assess(const Corpus& corpus, Split split, std::span<const Prediction> predictions);

// Greedy-decodes every sample of the split. Throws CorpusError for an
// empty split.
Evaluation evaluate(const Model& model, const Corpus& corpus, const EncodedDataset& data, Split split,
                    std::size_t batch_size, std::size_t max_decode_len);

}  // namespace navtrans
