#include "navtrans/training.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <set>
#include <type_traits>

#include "navtrans/tensor_archive.hpp"

namespace navtrans {

using namespace ad;
using json = nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "navtrans-checkpoint";
constexpr int kCheckpointVersion = 1;

std::size_t positions(std::span<const EncodedSample* const> batch) {
  std::size_t n = 0;
  for (const auto* s : batch) n += s->target.size() + 1;
  return n;
}

std::vector<const EncodedSample*> pointers(const std::vector<EncodedSample>& samples) {
  std::vector<const EncodedSample*> out;
  for (const auto& s : samples) out.push_back(&s);
  return out;
}

json config_json(const TrainConfig& c) {
  json j = json::object();
  const_cast<TrainConfig&>(c).visit_fields([&](const char* name, auto& value) { j[name] = value; });
  return j;
}

TrainConfig config_from(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  std::set<std::string> known;
  c.visit_fields([&](const char* name, auto& value) {
    known.insert(name);
    const auto it = j.find(name);
    if (it == j.end()) return;
    using T = std::remove_reference_t<decltype(value)>;
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        value = it->template get<std::string>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
        value = it->template get<T>();
      } else {
        if (!it->is_number_unsigned()) throw ConfigError("");
        value = it->template get<T>();
      }
    } catch (const std::exception&) {
      throw ConfigError(std::string("config field ") + name + " has the wrong type");
    }
  });
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown config field " + key);
  return c;
}

}  // namespace

ModelConfig TrainConfig::model() const {
  ModelConfig m;
  m.embed_dim = embed_dim;
  m.hidden = hidden;
  m.heads = heads;
  m.context_dim = context_dim;
  m.attention_dim = attention_dim;
  m.behavior_embed_dim = behavior_embed_dim;
  return m;
}

std::optional<Split> TrainConfig::validation_split() const {
  if (val_split == "none" || val_split.empty()) return std::nullopt;
  try {
    return parse_split(val_split);
  } catch (const CorpusError&) {
    throw ConfigError("val_split must be train, test_repeated, test_new or none, got " + val_split);
  }
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (max_decode_len == 0) throw ConfigError("max_decode_len must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (val_every == 0) throw ConfigError("val_every must be at least 1");
  try {
    model().validate();
  } catch (const ModelError& e) {
    throw ConfigError(e.what());
  }
  validation_split();
}

std::string TrainConfig::to_json() const { return config_json(*this).dump(2) + "\n"; }

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from(j);
}

void Adam::step(std::span<std::pair<std::string, Tensor>> params, AdamState& state) const {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    m.resize(p.size(), 0.0);
    v.resize(p.size(), 0.0);
    const std::vector<double> g = p.grad();
    auto x = p.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      x[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double gradient_norm(std::span<std::pair<std::string, Tensor>> params) {
  double sq = 0.0;
  for (auto& [_, p] : params)
    if (p.has_grad())
      for (double g : p.mutable_grad()) sq += g * g;
  return std::sqrt(sq);
}

double clip_gradients(std::span<std::pair<std::string, Tensor>> params, double max_norm) {
  const double norm = gradient_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [_, p] : params)
      if (p.has_grad())
        for (double& g : p.mutable_grad()) g *= factor;
  }
  return norm;
}

Checkpoint initial_checkpoint(const TrainConfig& config, const Corpus& corpus) {
  config.validate();
  if (corpus.train.empty()) throw CorpusError("the training split is empty");
  std::size_t capacity = corpus.max_nodes();
  if (config.node_capacity != 0) {
    if (config.node_capacity < capacity)
      throw ConfigError("node_capacity " + std::to_string(config.node_capacity) + " is below the largest graph (" +
                        std::to_string(capacity) + " nodes)");
    capacity = config.node_capacity;
  }
  Checkpoint c{config, Model(config.model(), build_vocab(corpus.train), corpus.behaviors(), capacity, config.seed),
               0, Rng(mix_seed(config.seed, 100)).state(), {}};
  if (!config.embeddings.empty()) {
    Tensor pretrained = load_pretrained_embeddings(config.embeddings, c.model.vocab(), mix_seed(config.seed, 5));
    Tensor& table = c.model.instruction_encoder().embedding;
    if (pretrained.cols() != table.cols())
      throw ConfigError("pretrained embeddings have dimension " + std::to_string(pretrained.cols()) +
                        " but embed_dim is " + std::to_string(table.cols()));
    std::ranges::copy(pretrained.data(), table.mutable_data().begin());
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  TensorArchive archive;
  Model& model = const_cast<Model&>(c.model);
  json meta;
  meta["format"] = kCheckpointFormat;
  meta["version"] = kCheckpointVersion;
  meta["config"] = config_json(c.config);
  meta["vocab"] = model.vocab().tokens();
  meta["behaviors"] = model.behaviors();
  meta["node_capacity"] = model.node_capacity();
  meta["epoch"] = c.epoch;
  meta["rng_state"] = c.rng_state;
  meta["adam_step"] = c.adam.step;
  archive.metadata = meta.dump();
  model.visit([&](const std::string& name, Tensor& t) {
    archive.tensors["param." + name] = t;
    for (const auto& [prefix, moments] : {std::pair{"adam.m.", &c.adam.m}, std::pair{"adam.v.", &c.adam.v}}) {
      const auto it = moments->find(name);
      if (it != moments->end()) archive.tensors[prefix + name] = Tensor::from(t.rows(), t.cols(), it->second);
    }
  });
  save_archive(path, archive);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive archive = load_archive(path);
  json meta;
  try {
    meta = json::parse(archive.metadata);
  } catch (const json::parse_error&) {
    throw ArchiveError(path.string() + ": checkpoint metadata is not JSON");
  }
  if (meta.value("format", "") != kCheckpointFormat || meta.value("version", 0) != kCheckpointVersion)
    throw ArchiveError(path.string() + ": not a navtrans checkpoint");
  Checkpoint c;
  c.config = config_from(meta.at("config"));
  c.model = Model(c.config.model(), Vocabulary(meta.at("vocab").get<std::vector<std::string>>()),
                  meta.at("behaviors").get<std::vector<std::string>>(), meta.at("node_capacity").get<std::size_t>(),
                  c.config.seed);
  c.epoch = meta.at("epoch").get<std::size_t>();
  c.rng_state = meta.at("rng_state").get<std::string>();
  c.adam.step = meta.at("adam_step").get<std::size_t>();
  c.model.visit([&](const std::string& name, Tensor& t) {
    const auto it = archive.tensors.find("param." + name);
    if (it == archive.tensors.end()) throw ArchiveError(path.string() + ": missing tensor " + name);
    if (it->second.shape() != t.shape())
      throw ArchiveError(path.string() + ": tensor " + name + " has shape " + to_string(it->second.shape()) +
                         ", expected " + to_string(t.shape()));
    std::ranges::copy(it->second.data(), t.mutable_data().begin());
    for (const auto& [prefix, moments] : {std::pair{"adam.m.", &c.adam.m}, std::pair{"adam.v.", &c.adam.v}}) {
      const auto m = archive.tensors.find(prefix + name);
      if (m != archive.tensors.end()) (*moments)[name].assign(m->second.data().begin(), m->second.data().end());
    }
  });
  return c;
}

std::string epoch_record_json(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_M@0"] = r.val_m_at_0 ? json(*r.val_m_at_0) : json(nullptr);
  j["wall_time"] = r.wall_time;
  return j.dump();
}

double dataset_loss(const Model& model, const EncodedDataset& data, Split split, std::size_t batch_size) {
  NoGradScope no_grad;
  const auto samples = pointers(data.split(split));
  if (samples.empty()) throw CorpusError(std::string("split ") + split_name(split) + " is empty");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    const std::span batch(samples.data() + b, std::min(batch_size, samples.size() - b));
    const std::size_t n = positions(batch);
    total += model.batch_loss(batch, data).item() * static_cast<double>(n);
    count += n;
  }
  return total / static_cast<double>(count);
}

namespace {

double exact_match_rate(const Model& model, const EncodedDataset& data, Split split, std::size_t batch_size,
                        std::size_t max_len) {
  const auto samples = pointers(data.split(split));
  std::size_t matched = 0;
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    const std::span batch(samples.data() + b, std::min(batch_size, samples.size() - b));
    const auto results = model.translate(batch, data.graphs, max_len);
    for (std::size_t i = 0; i < batch.size(); ++i) matched += results[i].plan == batch[i]->target ? 1 : 0;
  }
  return 100.0 * static_cast<double>(matched) / static_cast<double>(samples.size());
}

}  // namespace

std::vector<EpochRecord> train(Checkpoint& c, const EncodedDataset& data, const TrainHooks& hooks) {
  const TrainConfig& cfg = c.config;
  cfg.validate();
  const auto samples = pointers(data.split(Split::Train));
  if (samples.empty()) throw CorpusError("the training split is empty");
  const std::optional<Split> val = cfg.validation_split();
  const bool has_val = val && !data.split(*val).empty();

  auto params = c.model.named_parameters();
  const Adam adam(cfg.learning_rate);
  Rng rng(0);
  rng.restore(c.rng_state);
  const auto started = std::chrono::steady_clock::now();
  std::vector<EpochRecord> log;
  std::vector<std::size_t> order(samples.size());

  for (std::size_t epoch = c.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double total = 0.0;
    std::size_t count = 0;
    std::vector<const EncodedSample*> batch;
    for (std::size_t b = 0, index = 0; b < order.size(); b += cfg.batch_size, ++index) {
      batch.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) batch.push_back(samples[order[i]]);
      for (auto& [_, p] : params) p.zero_grad();
      Tape tape;
      TapeScope scope(tape);
      const Tensor loss = c.model.batch_loss(batch, data);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw NumericalFailure(epoch, index,
                               "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(index));
      tape.backward(loss);
      clip_gradients(params, cfg.clip_norm);
      adam.step(params, c.adam);
      const std::size_t n = positions(batch);
      total += value * static_cast<double>(n);
      count += n;
    }
    c.epoch = epoch;
    c.rng_state = rng.state();

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = total / static_cast<double>(count);
    if (has_val && (epoch % cfg.val_every == 0 || epoch == cfg.epochs))
      record.val_m_at_0 = exact_match_rate(c.model, data, *val, cfg.batch_size, cfg.max_decode_len);
    record.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    log.push_back(record);
    if (hooks.on_epoch) hooks.on_epoch(record);
    if (hooks.on_checkpoint && cfg.checkpoint_interval != 0 && epoch % cfg.checkpoint_interval == 0)
      hooks.on_checkpoint(c);
  }
  return log;
}

std::string sample_record_json(const SampleRecord& r) {
  json j;
  j["index"] = r.index;
  j["graph_id"] = r.graph_id;
  j["start"] = r.start;
  j["goal"] = r.goal;
  j["instruction"] = r.instruction;
  j["gold"] = r.gold;
  j["predicted"] = r.predicted;
  j["truncated"] = r.truncated;
  j["edit_distance"] = r.edit_distance;
  j["f1"] = r.f1;
  j["valid"] = r.valid;
  j["failed_step"] = r.failed_step ? json(*r.failed_step) : json(nullptr);
  j["end_node"] = r.end_node;
  j["reached_goal"] = r.reached_goal;
  return j.dump();
}

Evaluation assess(const Corpus& corpus, Split split, std::span<const Prediction> predictions) {
  const auto& samples = corpus.split(split);
  if (samples.empty()) throw CorpusError(std::string("split ") + split_name(split) + " is empty");
  if (predictions.size() != samples.size())
    throw std::invalid_argument("assess: one prediction per sample required");
  Evaluation e;
  std::vector<SampleScore> scores;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const BehaviorGraph& g = corpus.graph(s.graph_id);
    SampleRecord r;
    r.index = i;
    r.graph_id = s.graph_id;
    r.start = s.start;
    r.goal = s.goal;
    r.instruction = s.instruction;
    r.gold = s.target_plan;
    r.predicted = predictions[i].plan;
    r.truncated = predictions[i].truncated;
    r.edit_distance = edit_distance(r.predicted, r.gold);
    r.f1 = f1_plan(r.predicted, r.gold);
    scores.push_back({r.edit_distance, r.f1});

    // Behaviors the graph does not define count as a failing step.
    const NodeIndex start = *g.find_node(s.start);
    Plan local;
    std::optional<std::size_t> unknown;
    for (std::size_t k = 0; k < r.predicted.size(); ++k) {
      const auto b = g.find_behavior(r.predicted[k]);
      if (!b) {
        unknown = k;
        break;
      }
      local.push_back(*b);
    }
    const PlanOutcome outcome = execute_plan(g, start, local);
    r.end_node = g.node_name(outcome.end);
    if (!outcome.ok) {
      r.failed_step = outcome.failed_step;
    } else if (unknown) {
      r.failed_step = unknown;
    }
    r.valid = !r.failed_step;
    r.reached_goal = r.valid && r.end_node == s.goal;
    e.records.push_back(std::move(r));
  }
  e.report = aggregate(scores);
  return e;
}

Evaluation evaluate(const Model& model, const Corpus& corpus, const EncodedDataset& data, Split split,
                    std::size_t batch_size, std::size_t max_decode_len) {
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be positive");
  const auto samples = pointers(data.split(split));
  if (samples.empty()) throw CorpusError(std::string("split ") + split_name(split) + " is empty");
  std::vector<Prediction> predictions;
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    const std::span batch(samples.data() + b, std::min(batch_size, samples.size() - b));
    for (const auto& r : model.translate(batch, data.graphs, max_decode_len))
      predictions.push_back({model.behavior_names(r.plan), r.truncated});
  }
  return assess(corpus, split, predictions);
}

}  // namespace navtrans
