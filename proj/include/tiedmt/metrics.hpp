#pragma once

// Evaluation metrics and combination bookkeeping: sentence-level chrF,
// corpus-level BLEU, the decoder-major speed ordering over layer
// combinations, per-sentence oracle labels, and their histogram.

#include <cstdint>
#include <string>
#include <vector>

#include "tiedmt/tensor.hpp"

namespace tiedmt {

struct LayerCombination {
  int n = 1;  // encoder depth
  int m = 1;  // decoder depth

  bool operator==(const LayerCombination&) const = default;
};

// chrF in [0,1]: character n-gram F-score with whitespace removed before
// n-gram extraction. Precisions and recalls are averaged over orders
// 1..max_n; orders where neither string has n-grams are skipped, orders with
// no overlap contribute zero. Two empty strings score 1 by convention, one
// empty string scores 0.
Real sentence_chrf(const std::string& hyp, const std::string& ref,
                   int max_n = 6, Real beta = 2);

// Corpus-level 4-gram BLEU in [0,100] with brevity penalty. Text is
// normalized by splitting punctuation into separate tokens and then splitting
// on whitespace. Zero-match counts at orders two and above fall back to
// exponential smoothing (1 / (2^k * total), k doubling per smoothed order); a
// zero 1-gram match count yields 0. Orders with no hypothesis n-grams at all
// are dropped from the geometric mean.
Real corpus_bleu(const std::vector<std::string>& hyps,
                 const std::vector<std::string>& refs);

// Strict total order "decodes faster": fewer decoder layers, with encoder
// layers breaking ties.
bool is_faster(const LayerCombination& a, const LayerCombination& b);

// Per-sentence metric values for every layer combination, decoder index
// fastest-varying.
struct CombinationGrid {
  int enc_layers = 0;
  int dec_layers = 0;
  std::vector<Real> values;

  Real at(int n, int m) const {
    return values[static_cast<size_t>((n - 1) * dec_layers + (m - 1))];
  }
  Real& at(int n, int m) {
    return values[static_cast<size_t>((n - 1) * dec_layers + (m - 1))];
  }
  void validate() const;  // exactly enc_layers*dec_layers finite entries
};

// All combinations achieving the grid maximum (exact ties), plus the fastest
// of them under is_faster.
struct OracleLabel {
  std::vector<LayerCombination> best;
  LayerCombination fastest_best;
};

// The fastest combination among the grid's maxima.
LayerCombination oracle_combination(const CombinationGrid& grid);

OracleLabel oracle_label_set(const CombinationGrid& grid);

// Histogram of fastest-best combinations over a label list, one bin per
// combination in the same row-major layout as CombinationGrid.
std::vector<int64_t> oracle_distribution(const std::vector<OracleLabel>& labels,
                                         int enc_layers, int dec_layers);

// Grid file: a header documenting the column order, then one line per
// sentence — sentence_id followed by K tab-separated values, decoder index
// fastest-varying. Values round-trip exactly.
void write_grid_file(const std::string& path,
                     const std::vector<CombinationGrid>& rows);
std::vector<CombinationGrid> read_grid_file(const std::string& path);

}  // namespace tiedmt
