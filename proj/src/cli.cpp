#include "navtrans/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "navtrans/decoder.hpp"
#include "navtrans/tensor_archive.hpp"

#ifndef NAVTRANS_VERSION
#define NAVTRANS_VERSION "unknown"
#endif

namespace navtrans::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Bad invocation or unusable input that is not covered by a library error.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class S, class F>
void visit_settings(S& s, F&& f) {
  f("num_maps", s.corpus.num_maps);
  f("rooms_min", s.corpus.rooms_min);
  f("rooms_max", s.corpus.rooms_max);
  f("behavior_vocab", s.corpus.behavior_vocab);
  f("samples_per_map", s.corpus.samples_per_map);
  f("total_samples", s.corpus.total_samples);
  f("train_ratio", s.corpus.split_ratios[0]);
  f("test_repeated_ratio", s.corpus.split_ratios[1]);
  f("test_new_ratio", s.corpus.split_ratios[2]);
  f("plan_length_min", s.corpus.plan_length_min);
  f("plan_length_max", s.corpus.plan_length_max);
  f("extra_edge_ratio", s.corpus.extra_edge_ratio);
  s.train.visit_fields(f);
  f("ablation_seeds", s.ablation_seeds);
}

template <class T>
void assign(const char* name, const json& j, T& value) {
  bool ok = true;
  if constexpr (std::is_same_v<T, std::string>) {
    ok = j.is_string();
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    ok = j.is_array() && std::ranges::all_of(j, [](const json& e) { return e.is_string(); });
  } else if constexpr (std::is_floating_point_v<T>) {
    ok = j.is_number();
  } else {
    ok = j.is_number_unsigned();
  }
  if (!ok) throw ConfigError(std::string("config field ") + name + " has the wrong type");
  value = j.get<T>();
}

std::string flag_for(const std::string& field) {
  std::string flag = "--" + field;
  std::ranges::replace(flag, '_', '-');
  return flag;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

BehaviorGraph read_graph(const fs::path& path) { return parse_graph(read_text(path)); }

NodeIndex find_start(const BehaviorGraph& g, const std::string& name) {
  const auto node = g.find_node(name);
  if (!node) throw UsageError("unknown start node '" + name + "'");
  return *node;
}

// Executes named behaviors; names the graph does not know fail like a
// missing edge.
PlanOutcome walk(const BehaviorGraph& g, NodeIndex start, const std::vector<std::string>& plan) {
  PlanOutcome o;
  o.end = start;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto b = g.find_behavior(plan[i]);
    const auto next = b ? g.successor(o.end, *b) : std::nullopt;
    if (!next) {
      o.failed_step = i;
      return o;
    }
    o.end = *next;
  }
  o.ok = true;
  return o;
}

std::string verdict(const BehaviorGraph& g, const std::vector<std::string>& plan, const PlanOutcome& o) {
  if (o.ok) return "valid: ends at " + g.node_name(o.end);
  return "invalid: step " + std::to_string(o.failed_step) + " (" + plan[o.failed_step] + ") has no out-edge from " +
         g.node_name(o.end);
}

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
  return s;
}

// Per-invocation state shared by the subcommand handlers.
struct Invocation {
  Invocation(std::vector<std::string> a, std::ostream& o, std::ostream& e) : args(std::move(a)), out(o), err(e) {}

  std::vector<std::string> args;
  std::ostream& out;
  std::ostream& err;
  std::string config_file;
  std::map<std::string, std::string> field_values;
  std::map<std::string, std::vector<CLI::Option*>> field_options;  // one per subcommand
  std::string out_dir;
  std::string checkpoint;
  std::string split = "all";
  std::string graph;
  std::string start;
  std::string instruction;
  std::string plan;
  std::string goal;

  // base, then the --config document, then explicit flags.
  Settings resolve(Settings base) const {
    if (!config_file.empty()) base.merge_json(read_text(config_file));
    for (const auto& [name, options] : field_options)
      if (std::ranges::any_of(options, [](const CLI::Option* o) { return o->count() > 0; }))
        base.set_field(name, field_values.at(name));
    return base;
  }

  fs::path output_dir() const {
    if (out_dir.empty()) throw UsageError("--out is required");
    fs::create_directories(out_dir);
    return out_dir;
  }

  void manifest(const fs::path& dir, const std::string& command, const Settings& s, const fs::path& corpus,
                const std::vector<std::string>& outputs) const {
    json m;
    m["command"] = command;
    m["arguments"] = args;
    m["version"] = NAVTRANS_VERSION;
    m["seed"] = s.train.seed;
    m["config"] = json::parse(s.to_json());
    m["config_hash"] = hex64(fnv1a(s.to_json()));
    m["corpus"] = corpus.string();
    m["corpus_hash"] = hex64(hash_tree(corpus));
    m["outputs"] = outputs;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
  }
};

Corpus load_input_corpus(const Settings& s) {
  if (s.train.corpus.empty()) throw UsageError("--corpus is required");
  return load_corpus(s.train.corpus);
}

int cmd_generate_corpus(const Invocation& inv) {
  const Settings s = inv.resolve({});
  const Corpus corpus = build_corpus(s.corpus);
  const fs::path dir = inv.output_dir();
  fs::remove_all(dir / "graphs");  // stale graphs from an earlier, larger corpus
  save_corpus(corpus, dir);
  write_text(dir / "config.json", s.to_json());
  inv.manifest(dir, "generate-corpus", s, dir, {"graphs", "corpus.jsonl", "config.json"});
  inv.out << "wrote " << corpus.graphs.size() << " maps: " << corpus.train.size() << " train, "
          << corpus.test_repeated.size() << " test_repeated, " << corpus.test_new.size() << " test_new samples to "
          << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const Invocation& inv) {
  const Settings s = inv.resolve({});
  s.train.validate();
  const Corpus corpus = load_input_corpus(s);
  const fs::path dir = inv.output_dir();
  Checkpoint ck = initial_checkpoint(s.train, corpus);
  const EncodedDataset data = ck.model.encode_corpus(corpus);
  write_text(dir / "config.json", s.to_json());
  std::ofstream log(dir / "epochs.jsonl", std::ios::binary | std::ios::trunc);
  std::vector<std::string> outputs{"config.json", "epochs.jsonl", "model.ckpt"};
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    const std::string line = epoch_record_json(r);
    log << line << "\n" << std::flush;
    inv.out << line << "\n" << std::flush;
  };
  hooks.on_checkpoint = [&](const Checkpoint& c) {
    char name[48];
    std::snprintf(name, sizeof name, "epoch-%04zu.ckpt", c.epoch);
    fs::create_directories(dir / "checkpoints");
    save_checkpoint(c, dir / "checkpoints" / name);
    outputs.push_back(std::string("checkpoints/") + name);
  };
  inv.out << "training " << ck.model.parameter_count() << " parameters on " << corpus.train.size()
          << " samples\n";
  train(ck, data, hooks);
  save_checkpoint(ck, dir / "model.ckpt");
  inv.manifest(dir, "train", s, s.train.corpus, outputs);
  return kExitOk;
}

std::vector<Split> parse_splits(const std::string& name) {
  if (name == "all") return {kAllSplits.begin(), kAllSplits.end()};
  return {parse_split(name)};
}

int cmd_evaluate(const Invocation& inv) {
  const std::vector<Split> splits = parse_splits(inv.split);
  const Checkpoint ck = load_checkpoint(inv.checkpoint);
  Settings base;
  base.train = ck.config;
  const Settings s = inv.resolve(base);
  const Corpus corpus = load_input_corpus(s);
  const EncodedDataset data = ck.model.encode_corpus(corpus);

  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::vector<std::pair<Split, Evaluation>> results;
  for (Split split : splits) {
    Evaluation e = evaluate(ck.model, corpus, data, split, s.train.batch_size, s.train.max_decode_len);
    rows.emplace_back(split_name(split), e.report);
    results.emplace_back(split, std::move(e));
  }
  const std::string table = format_table(rows);
  inv.out << table;
  if (inv.out_dir.empty()) return kExitOk;

  const fs::path dir = inv.output_dir();
  std::vector<std::string> outputs{"report.txt"};
  write_text(dir / "report.txt", table);
  for (const auto& [split, e] : results) {
    const std::string name = split_name(split);
    write_text(dir / (name + ".report.json"), report_json(e.report) + "\n");
    std::string lines;
    for (const auto& r : e.records) lines += sample_record_json(r) + "\n";
    write_text(dir / (name + ".samples.jsonl"), lines);
    outputs.push_back(name + ".report.json");
    outputs.push_back(name + ".samples.jsonl");
  }
  inv.manifest(dir, "evaluate", s, s.train.corpus, outputs);
  return kExitOk;
}

int cmd_translate(const Invocation& inv) {
  const std::vector<std::string> words = tokenize_instruction(inv.instruction);
  if (words.empty()) throw UsageError("the instruction is empty");
  const BehaviorGraph graph = read_graph(inv.graph);
  const NodeIndex start = find_start(graph, inv.start);
  const Checkpoint ck = load_checkpoint(inv.checkpoint);
  Settings base;
  base.train = ck.config;
  const Settings s = inv.resolve(base);
  s.train.validate();

  const std::string id = fs::path(inv.graph).stem().string();
  const std::vector<PreparedGraph> graphs{ck.model.prepare_graph(id, graph)};
  const EncodedSample sample = ck.model.encode_sample(words, 0, graph, inv.start, {});
  const EncodedSample* batch[] = {&sample};
  const DecodeResult result = ck.model.translate(batch, graphs, s.train.max_decode_len).front();
  const std::vector<std::string> plan = ck.model.behavior_names(result.plan);
  const PlanOutcome outcome = walk(graph, start, plan);

  inv.out << "plan: " << join(plan) << "\n";
  inv.out << "truncated: " << (result.truncated ? "yes" : "no") << "\n";
  inv.out << verdict(graph, plan, outcome) << "\n";
  if (!inv.out_dir.empty()) {
    json j = {{"instruction", words}, {"graph", inv.graph}, {"start", inv.start},
              {"plan", plan},         {"truncated", result.truncated}, {"valid", outcome.ok},
              {"end_node", graph.node_name(outcome.end)}};
    j["failed_step"] = outcome.ok ? json(nullptr) : json(outcome.failed_step);
    write_text(inv.output_dir() / "translation.json", j.dump(2) + "\n");
  }
  return kExitOk;
}

// A plan that does not execute (or misses the requested goal) is rejected
// input, so it exits with the input-error status.
int cmd_validate_plan(const Invocation& inv) {
  const BehaviorGraph graph = read_graph(inv.graph);
  const NodeIndex start = find_start(graph, inv.start);
  const std::vector<std::string> plan = split_words(inv.plan);
  const PlanOutcome outcome = walk(graph, start, plan);
  inv.out << verdict(graph, plan, outcome) << "\n";
  if (!outcome.ok) return kExitInput;
  if (!inv.goal.empty()) {
    if (!graph.find_node(inv.goal)) throw UsageError("unknown goal node '" + inv.goal + "'");
    if (graph.node_name(outcome.end) != inv.goal) {
      inv.out << "goal " << inv.goal << " not reached\n";
      return kExitInput;
    }
    inv.out << "goal reached\n";
  }
  return kExitOk;
}

int cmd_ablate(const Invocation& inv) {
  const Settings s = inv.resolve({});
  s.train.validate();
  if (s.ablation_seeds == 0) throw ConfigError("ablation_seeds must be at least 1");
  const Corpus corpus = load_input_corpus(s);
  const fs::path dir = inv.output_dir();
  write_text(dir / "config.json", s.to_json());
  std::vector<std::string> outputs{"config.json", "ablation.txt", "ablation.json"};

  constexpr std::array<std::size_t, 2> kHeads = {1, 4};
  constexpr std::array<Split, 2> kSplits = {Split::TestRepeated, Split::TestNew};
  AblationResult result;
  for (std::size_t heads : kHeads)
    for (Split split : kSplits) result.cells.push_back({heads, split, {}, {}});

  for (std::size_t h = 0; h < kHeads.size(); ++h) {
    for (std::size_t i = 0; i < s.ablation_seeds; ++i) {
      TrainConfig cfg = s.train;
      cfg.heads = kHeads[h];
      cfg.seed = s.train.seed + i;
      const auto started = std::chrono::steady_clock::now();
      Checkpoint ck = initial_checkpoint(cfg, corpus);
      const EncodedDataset data = ck.model.encode_corpus(corpus);
      const std::string run = "runs/heads-" + std::to_string(cfg.heads) + "-seed-" + std::to_string(cfg.seed);
      fs::create_directories(dir / run);
      std::ofstream log(dir / run / "epochs.jsonl", std::ios::binary | std::ios::trunc);
      train(ck, data, {[&](const EpochRecord& r) { log << epoch_record_json(r) << "\n" << std::flush; }, {}});
      outputs.push_back(run + "/epochs.jsonl");

      inv.out << "heads=" << cfg.heads << " seed=" << cfg.seed << ":";
      for (std::size_t k = 0; k < kSplits.size(); ++k) {
        const Evaluation e = evaluate(ck.model, corpus, data, kSplits[k], cfg.batch_size, cfg.max_decode_len);
        const std::string name = split_name(kSplits[k]);
        write_text(dir / run / (name + ".report.json"), report_json(e.report) + "\n");
        outputs.push_back(run + "/" + name + ".report.json");
        result.cells[h * kSplits.size() + k].runs.push_back(e.report);
        char buf[64];
        std::snprintf(buf, sizeof buf, " %s M@0 %.2f", name.c_str(), e.report.m_at[0]);
        inv.out << buf;
      }
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      char buf[32];
      std::snprintf(buf, sizeof buf, " (%.0f s)", seconds);
      inv.out << buf << "\n" << std::flush;
    }
  }
  for (auto& cell : result.cells) cell.mean = mean_report(cell.runs);
  result.test_new_delta = result.cells[3].mean.m_at[0] - result.cells[1].mean.m_at[0];
  result.expected_direction = result.test_new_delta >= 0.0;

  const std::string table = format_ablation(result);
  write_text(dir / "ablation.txt", table);
  write_text(dir / "ablation.json", ablation_json(result));
  inv.manifest(dir, "ablate", s, s.train.corpus, outputs);
  inv.out << table;
  return kExitOk;
}

}  // namespace

std::string Settings::to_json() const {
  json j = json::object();
  visit_settings(const_cast<Settings&>(*this), [&](const char* name, auto& value) { j[name] = value; });
  return j.dump(2) + "\n";
}

void Settings::merge_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::set<std::string> known;
  visit_settings(*this, [&](const char* name, auto& value) {
    known.insert(name);
    if (const auto it = j.find(name); it != j.end()) assign(name, *it, value);
  });
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown config field " + key);
  corpus.seed = train.seed;
}

void Settings::set_field(const std::string& name, const std::string& text) {
  bool found = false;
  visit_settings(*this, [&](const char* field, auto& value) {
    if (name != field) return;
    found = true;
    using T = std::remove_reference_t<decltype(value)>;
    if constexpr (std::is_same_v<T, std::string>) {
      value = text;
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      value = split_words(text);
    } else {
      json j;
      try {
        j = json::parse(text);
      } catch (const json::parse_error&) {
        throw ConfigError(flag_for(name) + " expects a number, got '" + text + "'");
      }
      assign(field, j, value);
    }
  });
  if (!found) throw ConfigError("unknown config field " + name);
  corpus.seed = train.seed;
}

std::vector<std::string> Settings::field_names() {
  std::vector<std::string> names;
  Settings s;
  visit_settings(s, [&](const char* name, auto&) { names.emplace_back(name); });
  return names;
}

std::vector<std::string> tokenize_instruction(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '_' || ch == '-' || ch == '\'') {
      cur += static_cast<char>(std::tolower(c));
    } else {
      flush();
      if (ch == ',') out.emplace_back(",");
    }
  }
  flush();
  return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::uint64_t hash_tree(const fs::path& dir) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(dir)) return fnv1a(read_text(dir));
  if (!fs::is_directory(dir)) return fnv1a("");
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::ranges::sort(files);
  std::uint64_t h = fnv1a("");
  for (const auto& f : files) {
    h = fnv1a(fs::relative(f, dir).generic_string(), h);
    h = fnv1a(std::string_view("\0", 1), h);
    h = fnv1a(read_text(f), h);
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

MetricsReport mean_report(std::span<const MetricsReport> runs) {
  if (runs.empty()) throw std::invalid_argument("mean_report of no runs");
  MetricsReport m;
  m.n = runs.front().n;
  const double k = static_cast<double>(runs.size());
  for (const auto& r : runs) {
    m.f1 += r.f1 / k;
    for (std::size_t i = 0; i < 3; ++i) m.m_at[i] += r.m_at[i] / k;
    m.ed += r.ed / k;
  }
  return m;
}

namespace {

const AblationCell& find_cell(const AblationResult& r, std::size_t heads, Split split) {
  for (const auto& c : r.cells)
    if (c.heads == heads && c.split == split) return c;
  throw std::invalid_argument("ablation result is missing heads=" + std::to_string(heads));
}

}  // namespace

std::string format_ablation(const AblationResult& result) {
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& c : result.cells)
    rows.emplace_back("heads=" + std::to_string(c.heads) + " " + split_name(c.split), c.mean);
  std::string out = format_table(rows);
  const double one = find_cell(result, 1, Split::TestNew).mean.m_at[0];
  const double four = find_cell(result, 4, Split::TestNew).mean.m_at[0];
  const std::size_t seeds = result.cells.empty() ? 0 : result.cells.front().runs.size();
  char buf[160];
  std::snprintf(buf, sizeof buf, "Test-New M@0 over %zu seeds: heads=1 %.2f, heads=4 %.2f, delta (4 - 1) %+.2f\n",
                seeds, one, four, result.test_new_delta);
  out += buf;
  out += result.expected_direction ? "direction: multi-head >= single-head on Test-New, as expected\n"
                                   : "FLAG: multi-head is below single-head on Test-New M@0\n";
  return out;
}

std::string ablation_json(const AblationResult& result) {
  json cells = json::array();
  for (const auto& c : result.cells) {
    json runs = json::array();
    for (const auto& r : c.runs) runs.push_back(json::parse(report_json(r)));
    cells.push_back(
        {{"heads", c.heads}, {"split", split_name(c.split)}, {"mean", json::parse(report_json(c.mean))}, {"runs", runs}});
  }
  json j = {{"cells", cells},
            {"test_new_m_at_0_delta", result.test_new_delta},
            {"expected_direction", result.expected_direction}};
  return j.dump(2) + "\n";
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  Invocation inv({args.begin(), args.end()}, out, err);
  CLI::App app{"Translate navigation instructions into behavior plans", "navtrans"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(NAVTRANS_VERSION));

  const std::vector<std::string> all_fields = Settings::field_names();
  auto add_fields = [&](CLI::App* sub, const std::vector<std::string>& fields) {
    for (const auto& name : fields) {
      std::string names = flag_for(name);
      if (name.find('_') != std::string::npos) names += ",--" + name;
      inv.field_options[name].push_back(sub->add_option(names, inv.field_values[name], "config field " + name));
    }
  };

  auto* gen = app.add_subcommand("generate-corpus", "Generate a synthetic corpus");
  gen->add_option("--config", inv.config_file, "JSON config file")->check(CLI::ExistingFile);
  gen->add_option("--out", inv.out_dir, "Output directory")->required();
  add_fields(gen, all_fields);

  auto* tr = app.add_subcommand("train", "Train a model on a corpus");
  tr->add_option("--config", inv.config_file, "JSON config file")->check(CLI::ExistingFile);
  tr->add_option("--out", inv.out_dir, "Output directory")->required();
  add_fields(tr, all_fields);

  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on corpus splits");
  ev->add_option("--checkpoint", inv.checkpoint, "Checkpoint file")->required();
  ev->add_option("--split", inv.split, "train, test_repeated, test_new or all");
  ev->add_option("--config", inv.config_file, "JSON config file")->check(CLI::ExistingFile);
  ev->add_option("--out", inv.out_dir, "Output directory for reports");
  add_fields(ev, {"corpus", "batch_size", "max_decode_len"});

  auto* tl = app.add_subcommand("translate", "Translate one instruction");
  tl->add_option("--checkpoint", inv.checkpoint, "Checkpoint file")->required();
  tl->add_option("--graph", inv.graph, "Graph YAML file")->required();
  tl->add_option("--start", inv.start, "Start node")->required();
  tl->add_option("--instruction", inv.instruction, "Instruction text")->required();
  tl->add_option("--out", inv.out_dir, "Directory for translation.json");
  add_fields(tl, {"max_decode_len"});

  auto* vp = app.add_subcommand("validate-plan", "Check a plan against a graph");
  vp->add_option("--graph", inv.graph, "Graph YAML file")->required();
  vp->add_option("--start", inv.start, "Start node")->required();
  vp->add_option("--plan", inv.plan, "Behaviors separated by spaces or commas")->required();
  vp->add_option("--goal", inv.goal, "Expected end node");

  auto* ab = app.add_subcommand("ablate", "Compare heads=1 against heads=4 over several seeds");
  ab->add_option("--config", inv.config_file, "JSON config file")->check(CLI::ExistingFile);
  ab->add_option("--out", inv.out_dir, "Output directory")->required();
  add_fields(ab, all_fields);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (gen->parsed()) return cmd_generate_corpus(inv);
    if (tr->parsed()) return cmd_train(inv);
    if (ev->parsed()) return cmd_evaluate(inv);
    if (tl->parsed()) return cmd_translate(inv);
    if (vp->parsed()) return cmd_validate_plan(inv);
    if (ab->parsed()) return cmd_ablate(inv);
  } catch (const NumericalFailure& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace navtrans::cli
