// Synthetic-task corpus tests: the per-task transforms on worked examples,
// deterministic generation with a disjoint train/test split, the text
// tokenizer round trip, and corpus file input/output.

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "tiedmt/toy.hpp"
#include "tiedmt/vocab.hpp"

namespace fs = std::filesystem;
using namespace tiedmt;

namespace {

IdSeq ids(const std::string& text) { return tokenize(text); }

std::set<IdSeq> as_set(const std::vector<IdSeq>& rows) {
  return std::set<IdSeq>(rows.begin(), rows.end());
}

}  // namespace

TEST_CASE("text tokenizer round trip and rejection of unknown symbols") {
  CHECK(tokenize("a b c") == IdSeq{4, 5, 6});
  CHECK(tokenize("z") == IdSeq{kSymbolBase + 25});
  CHECK(tokenize("") == IdSeq{});
  CHECK(detokenize({4, 5, 6}) == "a b c");
  CHECK(detokenize({}) == "");
  // Marker tokens vanish from text; only symbols survive the round trip.
  CHECK(detokenize({kBosId, 4, kEosId}) == "a");
  CHECK(tokenize(detokenize({7, 9, 4})) == IdSeq{7, 9, 4});
  CHECK_THROWS_AS(tokenize("a ? b"), std::invalid_argument);
  CHECK_THROWS_AS(tokenize("ab"), std::invalid_argument);
  CHECK_THROWS_AS(detokenize({kSymbolBase + 26}), std::invalid_argument);
}

TEST_CASE("task transforms on worked examples") {
  ToyTaskSpec spec;
  spec.vocab_symbols = 3;

  spec.task = "copy";
  CHECK(apply_toy_transform(spec, ids("a c b")) == ids("a c b"));

  spec.task = "reverse";
  CHECK(apply_toy_transform(spec, ids("a c b")) == ids("b c a"));
  CHECK(apply_toy_transform(spec, ids("a")) == ids("a"));

  spec.task = "rot-k";
  spec.rot = 1;
  // Rotation is modular in the task alphabet: with symbols {a, b, c},
  // shifting "a c" by one gives "b a".
  CHECK(apply_toy_transform(spec, ids("a c")) == ids("b a"));
  CHECK(apply_toy_transform(spec, ids("c c c")) == ids("a a a"));
  spec.rot = 2;
  CHECK(apply_toy_transform(spec, ids("a b")) == ids("c a"));

  spec.task = "sorted";
  CHECK(apply_toy_transform(spec, ids("c a b a")) == ids("a a b c"));

  spec.task = "shuffle";
  CHECK_THROWS_AS(apply_toy_transform(spec, ids("a")), std::invalid_argument);

  // Out-of-alphabet symbols are rejected rather than silently rotated.
  spec.task = "rot-k";
  CHECK_THROWS_AS(apply_toy_transform(spec, ids("z")), std::invalid_argument);
}

TEST_CASE("corpus generation is deterministic with a disjoint split") {
  ToyTaskSpec spec;
  spec.task = "reverse";
  spec.vocab_symbols = 8;
  spec.min_len = 2;
  spec.max_len = 6;
  spec.size = 300;
  spec.seed = 5;

  ToyCorpus a = generate_toy_corpus(spec);
  CHECK(a.train.size() == 270);
  CHECK(a.test.size() == 30);

  // Pairs are consistent with the transform, lengths in range, ids in range.
  auto check_half = [&](const ParallelData& half) {
    for (size_t i = 0; i < half.size(); ++i) {
      const IdSeq& src = half.src[i];
      CHECK(static_cast<int>(src.size()) >= spec.min_len);
      CHECK(static_cast<int>(src.size()) <= spec.max_len);
      for (int t : src) {
        CHECK(t >= kSymbolBase);
        CHECK(t < kSymbolBase + spec.vocab_symbols);
      }
      CHECK(half.tgt[i] == apply_toy_transform(spec, src));
    }
  };
  check_half(a.train);
  check_half(a.test);

  // All sources are distinct, and the split shares no sentence.
  std::set<IdSeq> train_set = as_set(a.train.src);
  std::set<IdSeq> test_set = as_set(a.test.src);
  CHECK(train_set.size() == a.train.size());
  CHECK(test_set.size() == a.test.size());
  for (const IdSeq& s : test_set) CHECK(train_set.count(s) == 0);

  ToyCorpus b = generate_toy_corpus(spec);
  CHECK(b.train.src == a.train.src);
  CHECK(b.train.tgt == a.train.tgt);
  CHECK(b.test.src == a.test.src);

  spec.seed = 6;
  ToyCorpus c = generate_toy_corpus(spec);
  CHECK(c.train.src != a.train.src);
}

TEST_CASE("corpus generation fails loudly when the symbol space is too small") {
  ToyTaskSpec spec;
  spec.vocab_symbols = 2;
  spec.min_len = 1;
  spec.max_len = 2;  // only 6 distinct sentences exist
  spec.size = 50;
  CHECK_THROWS_AS(generate_toy_corpus(spec), std::invalid_argument);

  spec = ToyTaskSpec{};
  spec.vocab_symbols = 27;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = ToyTaskSpec{};
  spec.min_len = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = ToyTaskSpec{};
  spec.min_len = 5;
  spec.max_len = 4;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = ToyTaskSpec{};
  spec.size = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("corpus files round trip") {
  ToyTaskSpec spec;
  spec.task = "rot-k";
  spec.rot = 3;
  spec.vocab_symbols = 10;
  spec.size = 40;
  spec.min_len = 1;
  spec.max_len = 5;
  ToyCorpus corpus = generate_toy_corpus(spec);

  fs::path path = fs::temp_directory_path() / "tiedmt_toy_corpus.tsv";
  write_corpus(path.string(), corpus.train);
  ParallelData back = read_corpus(path.string());
  CHECK(back.src == corpus.train.src);
  CHECK(back.tgt == corpus.train.tgt);

  CHECK_THROWS_AS(
      read_corpus((fs::temp_directory_path() / "tiedmt_absent.tsv").string()),
      std::runtime_error);
}
