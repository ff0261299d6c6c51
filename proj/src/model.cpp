#include "navtrans/model.hpp"

namespace navtrans {

using namespace ad;

void ModelConfig::validate() const {
  if (embed_dim == 0 || hidden == 0 || heads == 0 || context_dim == 0 || attention_dim == 0 ||
      behavior_embed_dim == 0)
    throw ModelError("model dimensions must be positive");
  if (model_dim() % heads != 0)
    throw ModelError("heads (" + std::to_string(heads) + ") must divide the encoder state width " +
                     std::to_string(model_dim()));
  if (context_dim >= model_dim())
    throw ModelError("context_dim (" + std::to_string(context_dim) + ") must be below the encoder state width " +
                     std::to_string(model_dim()));
}

Model::Model(const ModelConfig& config, Vocabulary vocab, std::vector<std::string> behaviors,
             std::size_t node_capacity, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)), behaviors_(std::move(behaviors)), node_capacity_(node_capacity) {
  config_.validate();
  if (behaviors_.empty()) throw ModelError("the model needs at least one behavior");
  if (node_capacity_ == 0) throw ModelError("node capacity must be positive");
  for (std::size_t i = 0; i < behaviors_.size(); ++i)
    if (!behavior_index_.emplace(behaviors_[i], i).second) throw ModelError("duplicate behavior " + behaviors_[i]);

  Rng instruction_rng(mix_seed(seed, 1));
  Rng graph_rng(mix_seed(seed, 2));
  Rng fusion_rng(mix_seed(seed, 3));
  Rng decoder_rng(mix_seed(seed, 4));
  instruction_ = InstructionEncoder::init(vocab_.size(), config_.embed_dim, config_.hidden, instruction_rng);
  graph_ = GraphEncoder::init(node_capacity_, behaviors_.size(), config_.hidden, graph_rng);
  fusion_ = FusionParams::init(config_.model_dim(), config_.heads, config_.context_dim, fusion_rng);
  decoder_ = DecoderParams::init(behaviors_.size(), node_capacity_, config_.behavior_embed_dim, config_.context_dim,
                                 config_.hidden, config_.attention_dim, decoder_rng);
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  visit([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, Tensor& t) { n += t.size(); });
  return n;
}

PreparedGraph Model::prepare_graph(const std::string& id, const BehaviorGraph& graph) const {
  if (graph.node_count() > node_capacity_)
    throw ModelError("graph " + id + " has " + std::to_string(graph.node_count()) +
                     " nodes, above the model's node capacity " + std::to_string(node_capacity_));
  if (graph.edges().empty()) throw ModelError("graph " + id + " has no edges");
  std::vector<std::size_t> behavior_map;
  for (const auto& name : graph.behaviors()) {
    const auto it = behavior_index_.find(name);
    if (it == behavior_index_.end()) throw ModelError("graph " + id + " uses unknown behavior " + name);
    behavior_map.push_back(it->second);
  }
  PreparedGraph p;
  p.id = id;
  p.features.width = 2 * node_capacity_ + behaviors_.size();
  for (const auto& e : graph.edges()) {
    p.features.from.push_back(index_of(e.from));
    p.features.behavior.push_back(node_capacity_ + behavior_map[index_of(e.behavior)]);
    p.features.to.push_back(node_capacity_ + behaviors_.size() + index_of(e.to));
  }
  return p;
}

EncodedSample Model::encode_sample(const std::vector<std::string>& instruction, std::size_t graph_slot,
                                   const BehaviorGraph& graph, const std::string& start,
                                   const std::vector<std::string>& plan) const {
  if (instruction.empty()) throw ModelError("empty instruction");
  const auto node = graph.find_node(start);
  if (!node) throw ModelError("unknown start node " + start);
  EncodedSample s;
  s.tokens = vocab_.encode(instruction);
  s.graph = graph_slot;
  s.start = index_of(*node);
  for (const auto& b : plan) {
    const auto it = behavior_index_.find(b);
    if (it == behavior_index_.end()) throw ModelError("unknown behavior " + b + " in target plan");
    s.target.push_back(behavior_at(it->second));
  }
  return s;
}

EncodedDataset Model::encode_corpus(const Corpus& corpus) const {
  EncodedDataset d;
  for (const auto& [id, g] : corpus.graphs) {
    d.graph_index.emplace(id, d.graphs.size());
    d.graphs.push_back(prepare_graph(id, g));
  }
  for (Split split : kAllSplits) {
    auto& out = d.splits[static_cast<std::size_t>(split)];
    for (const auto& s : corpus.split(split)) {
      const auto it = d.graph_index.find(s.graph_id);
      if (it == d.graph_index.end()) throw ModelError("sample refers to missing graph " + s.graph_id);
      out.push_back(encode_sample(s.instruction, it->second, corpus.graph(s.graph_id), s.start, s.target_plan));
    }
  }
  return d;
}

Model::Forward Model::encode(std::span<const EncodedSample* const> batch,
                             const std::vector<PreparedGraph>& graphs) const {
  if (batch.empty()) throw ModelError("empty batch");
  // Each distinct graph is encoded once per batch.
  std::map<std::size_t, std::size_t> slot;
  std::vector<TripletFeatures> features;
  std::vector<std::size_t> graph_of;
  std::vector<std::vector<std::size_t>> tokens;
  Forward f;
  for (const EncodedSample* s : batch) {
    auto [it, fresh] = slot.emplace(s->graph, features.size());
    if (fresh) features.push_back(graphs.at(s->graph).features);
    graph_of.push_back(it->second);
    tokens.push_back(s->tokens);
    f.starts.push_back(s->start);
  }
  const EncoderOutput graph_states = encode_graphs(features, graph_);
  const EncoderOutput instruction_states = encode_instructions(tokens, instruction_);
  f.context = fuse(instruction_states, graph_states, graph_of, fusion_);
  return f;
}

Tensor Model::batch_loss(std::span<const EncodedSample* const> batch, const EncodedDataset& data) const {
  const Forward f = encode(batch, data.graphs);
  std::vector<Plan> targets;
  for (const EncodedSample* s : batch) targets.push_back(s->target);
  const auto logits = teacher_forced_logits(f.starts, targets, f.context, decoder_);
  return sequence_cross_entropy(logits, targets, decoder_.end_token());
}

std::vector<DecodeResult> Model::translate(std::span<const EncodedSample* const> batch,
                                           const std::vector<PreparedGraph>& graphs, std::size_t max_len) const {
  NoGradScope no_grad;
  const Forward f = encode(batch, graphs);
  return greedy_decode(f.starts, f.context, decoder_, max_len);
}

std::vector<std::string> Model::behavior_names(const Plan& plan) const {
  std::vector<std::string> out;
  for (auto b : plan) out.push_back(behaviors_.at(index_of(b)));
  return out;
}

}  // namespace navtrans
