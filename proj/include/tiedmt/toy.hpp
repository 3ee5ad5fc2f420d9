#pragma once

// Deterministic synthetic translation tasks over a closed symbol alphabet,
// replacing real bitext at desk scale. The reverse task is the primary
// benchmark because it genuinely needs cross-attention; copy can be solved
// degenerately.

#include <cstdint>
#include <string>

#include "tiedmt/train.hpp"

namespace tiedmt {

struct ToyTaskSpec {
  std::string task = "reverse";  // copy | reverse | rot-k | sorted
  int vocab_symbols = 16;        // distinct letters drawn from a..z
  int rot = 1;                   // shift amount for rot-k
  int min_len = 4;
  int max_len = 14;
  int size = 2000;               // total sentences before the 90/10 split
  uint64_t seed = 1;

  void validate() const;
};

struct ToyCorpus {
  ParallelData train;
  ParallelData test;
};

// Target-side transform of one source sentence (symbol ids).
IdSeq apply_toy_transform(const ToyTaskSpec& spec, const IdSeq& src);

// Distinct random sentences, deterministic per seed, split 90/10 so the test
// sentences never occur in training.
ToyCorpus generate_toy_corpus(const ToyTaskSpec& spec);

// Corpus file: one pair per line, source TAB target, symbols space-separated.
void write_corpus(const std::string& path, const ParallelData& corpus);
ParallelData read_corpus(const std::string& path);

}  // namespace tiedmt
