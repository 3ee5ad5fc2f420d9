#include "tiedmt/toy.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tiedmt/rng.hpp"
#include "tiedmt/vocab.hpp"

namespace tiedmt {

std::vector<int> tokenize(const std::string& text) {
  std::vector<int> ids;
  std::istringstream stream(text);
  std::string token;
  while (stream >> token) {
    if (token.size() != 1 || token[0] < 'a' || token[0] > 'z')
      throw std::invalid_argument("tokenize: unknown symbol '" + token + "'");
    ids.push_back(kSymbolBase + (token[0] - 'a'));
  }
  return ids;
}

std::string detokenize(const std::vector<int>& ids) {
  std::string text;
  for (int id : ids) {
    if (id < kSymbolBase) continue;  // reserved markers carry no text
    if (id >= kSymbolBase + kMaxSymbols)
      throw std::invalid_argument("detokenize: id out of symbol range");
    if (!text.empty()) text += ' ';
    text += static_cast<char>('a' + (id - kSymbolBase));
  }
  return text;
}

void ToyTaskSpec::validate() const {
  if (task != "copy" && task != "reverse" && task != "rot-k" && task != "sorted")
    throw std::invalid_argument("toy task must be copy, reverse, rot-k or sorted");
  if (vocab_symbols < 1 || vocab_symbols > kMaxSymbols)
    throw std::invalid_argument("toy vocab_symbols must lie in 1..26");
  if (task == "rot-k" && vocab_symbols < 2)
    throw std::invalid_argument("rot-k needs at least two symbols");
  if (min_len < 1 || min_len > max_len)
    throw std::invalid_argument("toy lengths must satisfy 1 <= min_len <= max_len");
  if (size < 10) throw std::invalid_argument("toy corpus size must be >= 10");
}

IdSeq apply_toy_transform(const ToyTaskSpec& spec, const IdSeq& src) {
  for (int id : src)
    if (id < kSymbolBase || id >= kSymbolBase + spec.vocab_symbols)
      throw std::invalid_argument("toy transform: symbol id " +
                                  std::to_string(id) +
                                  " outside the task alphabet");
  IdSeq tgt = src;
  if (spec.task == "copy") {
    return tgt;
  } else if (spec.task == "reverse") {
    std::reverse(tgt.begin(), tgt.end());
    return tgt;
  } else if (spec.task == "rot-k") {
    for (int& id : tgt)
      id = kSymbolBase + (id - kSymbolBase + spec.rot) % spec.vocab_symbols;
    return tgt;
  } else if (spec.task == "sorted") {
    std::sort(tgt.begin(), tgt.end());
    return tgt;
  }
  throw std::invalid_argument("unknown toy task " + spec.task);
}

ToyCorpus generate_toy_corpus(const ToyTaskSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::set<IdSeq> seen;
  std::vector<IdSeq> sources;
  sources.reserve(static_cast<size_t>(spec.size));
  int64_t attempts = 0;
  const int64_t attempt_cap = static_cast<int64_t>(spec.size) * 1000;
  while (static_cast<int>(sources.size()) < spec.size) {
    if (++attempts > attempt_cap)
      throw std::invalid_argument(
          "toy corpus: symbol space too small for the requested distinct size");
    int len = spec.min_len +
              static_cast<int>(rng.below(
                  static_cast<uint32_t>(spec.max_len - spec.min_len + 1)));
    IdSeq src(static_cast<size_t>(len));
    for (int& id : src)
      id = kSymbolBase +
           static_cast<int>(rng.below(static_cast<uint32_t>(spec.vocab_symbols)));
    if (seen.insert(src).second) sources.push_back(std::move(src));
  }

  ToyCorpus corpus;
  size_t test_size = sources.size() / 10;
  for (size_t s = 0; s < sources.size(); ++s) {
    IdSeq tgt = apply_toy_transform(spec, sources[s]);
    if (s < sources.size() - test_size) {
      corpus.train.src.push_back(sources[s]);
      corpus.train.tgt.push_back(std::move(tgt));
    } else {
      corpus.test.src.push_back(sources[s]);
      corpus.test.tgt.push_back(std::move(tgt));
    }
  }
  return corpus;
}

void write_corpus(const std::string& path, const ParallelData& corpus) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw std::runtime_error("corpus " + path + ": cannot open");
  for (size_t s = 0; s < corpus.size(); ++s)
    file << detokenize(corpus.src[s]) << '\t' << detokenize(corpus.tgt[s])
         << '\n';
  if (!file) throw std::runtime_error("corpus " + path + ": write failed");
}

ParallelData read_corpus(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("corpus " + path + ": cannot open");
  ParallelData corpus;
  std::string line;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("corpus " + path + ": line without tab separator");
    corpus.src.push_back(tokenize(line.substr(0, tab)));
    corpus.tgt.push_back(tokenize(line.substr(tab + 1)));
  }
  return corpus;
}

}  // namespace tiedmt
