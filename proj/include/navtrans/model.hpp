#pragma once

// The full translator: instruction and graph encoders, fusion, decoder, plus
// the vocabularies needed to turn corpus samples into model inputs.

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "navtrans/corpus.hpp"
#include "navtrans/decoder.hpp"
#include "navtrans/encoders.hpp"
#include "navtrans/fusion.hpp"
#include "navtrans/graph.hpp"

namespace navtrans {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::size_t embed_dim = 32;           // word embeddings
  std::size_t hidden = 64;              // GRU size H; encoder states are 2H wide
  std::size_t heads = 4;
  std::size_t context_dim = 64;         // fused context width
  std::size_t attention_dim = 64;       // decoder additive attention
  std::size_t behavior_embed_dim = 32;  // decoder input tokens

  std::size_t model_dim() const { return 2 * hidden; }
  // Throws ModelError on zero sizes, heads not dividing 2H, or a context
  // that is not narrower than 2H.
  void validate() const;
};

// A graph ready for the encoder: hot columns of its triplet rows in the
// model's input layout (node capacity and behavior list of the model).
struct PreparedGraph {
  std::string id;
  TripletFeatures features;
};

struct EncodedSample {
  std::vector<std::size_t> tokens;
  std::size_t graph = 0;  // index into EncodedDataset::graphs
  std::size_t start = 0;  // node index within the graph
  Plan target;            // behavior ids in the model's behavior list
};

struct EncodedDataset {
  std::vector<PreparedGraph> graphs;
  std::map<std::string, std::size_t> graph_index;
  std::array<std::vector<EncodedSample>, 3> splits;  // indexed by Split

  const std::vector<EncodedSample>& split(Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

class Model {
 public:
  Model() = default;
  // Parameters are drawn from independent streams per module, so changing
  // the head count changes the fusion parameters only.
  Model(const ModelConfig& config, Vocabulary vocab, std::vector<std::string> behaviors,
        std::size_t node_capacity, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<std::string>& behaviors() const { return behaviors_; }
  std::size_t node_capacity() const { return node_capacity_; }

  InstructionEncoder& instruction_encoder() { return instruction_; }
  GraphEncoder& graph_encoder() { return graph_; }
  FusionParams& fusion() { return fusion_; }
  DecoderParams& decoder() { return decoder_; }
  const DecoderParams& decoder() const { return decoder_; }

  template <class F>
  void visit(F&& f) {
    instruction_.visit("instruction", f);
    graph_.visit("graph", f);
    fusion_.visit("fusion", f);
    decoder_.visit("decoder", f);
  }
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters();
  std::size_t parameter_count();

  // Throws ModelError when the graph exceeds the node capacity or uses a
  // behavior the model does not know.
  PreparedGraph prepare_graph(const std::string& id, const BehaviorGraph& graph) const;
  // Throws ModelError for unknown start nodes or plan behaviors.
  EncodedSample encode_sample(const std::vector<std::string>& instruction, std::size_t graph_slot,
                              const BehaviorGraph& graph, const std::string& start,
                              const std::vector<std::string>& plan) const;
  EncodedDataset encode_corpus(const Corpus& corpus) const;

  // Mean per-position cross-entropy of a batch under teacher forcing.
  ad::Tensor batch_loss(std::span<const EncodedSample* const> batch, const EncodedDataset& data) const;

  // Greedy plans (model behavior ids) for a batch.
  std::vector<DecodeResult> translate(std::span<const EncodedSample* const> batch,
                                      const std::vector<PreparedGraph>& graphs, std::size_t max_len) const;

  // Behavior names of a plan in model ids.
  std::vector<std::string> behavior_names(const Plan& plan) const;

 private:
  struct Forward {
    FusedContext context;
    std::vector<std::size_t> starts;
  };
  Forward encode(std::span<const EncodedSample* const> batch, const std::vector<PreparedGraph>& graphs) const;

  ModelConfig config_;
  Vocabulary vocab_;
  std::vector<std::string> behaviors_;
  std::map<std::string, std::size_t> behavior_index_;
  std::size_t node_capacity_ = 0;
  InstructionEncoder instruction_;
  GraphEncoder graph_;
  FusionParams fusion_;
  DecoderParams decoder_;
};

}  // namespace navtrans
