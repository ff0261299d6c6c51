#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "navtrans/corpus.hpp"
#include "navtrans/rng.hpp"

namespace navtrans {

namespace {
const std::vector<std::string> kReservedTokens = {"<pad>", "<unk>", "<s>", "</s>"};
}

Vocabulary::Vocabulary() : Vocabulary(kReservedTokens) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kReserved || !std::equal(kReservedTokens.begin(), kReservedTokens.end(), tokens_.begin()))
    throw CorpusError("vocabulary must start with the reserved tokens <pad> <unk> <s> </s>");
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], i).second)
      throw CorpusError("duplicate vocabulary token '" + tokens_[i] + "'");
}

std::size_t Vocabulary::index(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index(t));
  return out;
}

Vocabulary build_vocab(std::span<const Sample> samples) {
  if (samples.empty()) throw CorpusError("build_vocab: no training samples");
  std::map<std::string, std::size_t> counts;
  for (const Sample& s : samples)
    for (const auto& t : s.instruction) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = kReservedTokens;
  for (const auto& [tok, n] : ranked)
    if (std::find(kReservedTokens.begin(), kReservedTokens.end(), tok) == kReservedTokens.end())
      tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

ad::Tensor load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                      std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open pretrained vectors " + path.string());
  std::unordered_map<std::string, std::vector<double>> found;
  std::size_t dim = 0, line_no = 0, count = 0;
  std::vector<double> sum, sum_sq;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream is(line);
    std::string token;
    if (!(is >> token)) continue;
    std::vector<double> v;
    for (std::string field; is >> field;) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": '" + field +
                          "' is not a number");
      }
    }
    if (v.empty()) throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": no values");
    if (dim == 0) {
      dim = v.size();
      sum.assign(dim, 0.0);
      sum_sq.assign(dim, 0.0);
    } else if (v.size() != dim) {
      throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, found " + std::to_string(v.size()));
    }
    for (std::size_t d = 0; d < dim; ++d) {
      sum[d] += v[d];
      sum_sq[d] += v[d] * v[d];
    }
    ++count;
    if (vocab.contains(token)) found.emplace(token, std::move(v));
  }
  if (count == 0) throw CorpusError(path.string() + ": no vectors");

  std::vector<double> mean(dim), stddev(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    mean[d] = sum[d] / static_cast<double>(count);
    stddev[d] = std::sqrt(std::max(0.0, sum_sq[d] / static_cast<double>(count) - mean[d] * mean[d]));
  }
  Rng rng(seed);
  std::vector<double> matrix(vocab.size() * dim);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto it = found.find(vocab.token(i));
    for (std::size_t d = 0; d < dim; ++d)
      matrix[i * dim + d] =
          it != found.end() ? it->second[d] : mean[d] + stddev[d] * rng.normal();
  }
  return ad::Tensor::from(vocab.size(), dim, std::move(matrix));
}

}  // namespace navtrans
