#include <json.hpp>

#include <fstream>
#include <sstream>

#include "navtrans/corpus.hpp"

namespace navtrans {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> string_list(const json& rec, const char* key) {
  if (!rec.contains(key)) throw CorpusError(std::string("missing field '") + key + "'");
  const json& v = rec.at(key);
  if (!v.is_array()) throw CorpusError(std::string("field '") + key + "' must be a list");
  std::vector<std::string> out;
  for (const auto& x : v) {
    if (!x.is_string()) throw CorpusError(std::string("field '") + key + "' must hold strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

std::string string_field(const json& rec, const char* key) {
  if (!rec.contains(key)) throw CorpusError(std::string("missing field '") + key + "'");
  if (!rec.at(key).is_string()) throw CorpusError(std::string("field '") + key + "' must be a string");
  return rec.at(key).get<std::string>();
}

}  // namespace

std::string corpus_record(const Sample& s, Split split) {
  json rec = {{"instruction", s.instruction}, {"graph_id", s.graph_id},       {"start", s.start},
              {"goal", s.goal},               {"target_plan", s.target_plan}, {"split", split_name(split)}};
  return rec.dump();
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "graphs");
  for (const auto& [id, g] : corpus.graphs) {
    std::ofstream out(dir / "graphs" / (id + ".yaml"), std::ios::binary | std::ios::trunc);
    if (!out) throw CorpusError("cannot write graph " + id);
    out << serialize_graph(g);
  }
  std::ofstream out(dir / "corpus.jsonl", std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + (dir / "corpus.jsonl").string());
  for (Split s : kAllSplits)
    for (const Sample& sample : corpus.split(s)) out << corpus_record(sample, s) << '\n';
}

Corpus load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CorpusError("corpus directory " + dir.string() + " does not exist");
  Corpus corpus;
  const fs::path graph_dir = dir / "graphs";
  if (!fs::is_directory(graph_dir)) throw CorpusError("missing " + graph_dir.string());
  for (const auto& entry : fs::directory_iterator(graph_dir)) {
    if (entry.path().extension() != ".yaml") continue;
    const std::string id = entry.path().stem().string();
    try {
      corpus.graphs.emplace(id, parse_graph(read_file(entry.path())));
    } catch (const GraphError& e) {
      throw CorpusError("graph " + id + ": " + e.what());
    }
  }

  std::ifstream in(dir / "corpus.jsonl", std::ios::binary);
  if (!in) throw CorpusError("missing " + (dir / "corpus.jsonl").string());
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      if (!rec.is_object()) throw CorpusError("expected a JSON object");
      Sample s;
      s.instruction = string_list(rec, "instruction");
      s.graph_id = string_field(rec, "graph_id");
      s.start = string_field(rec, "start");
      s.goal = string_field(rec, "goal");
      s.target_plan = string_list(rec, "target_plan");
      const Split split = parse_split(string_field(rec, "split"));
      check_sample(corpus, s);
      corpus.split(split).push_back(std::move(s));
    } catch (const json::exception& e) {
      throw CorpusError("corpus.jsonl record " + std::to_string(record) + ": " + e.what());
    } catch (const CorpusError& e) {
      throw CorpusError("corpus.jsonl record " + std::to_string(record) + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace navtrans
