#pragma once

// Greedy and beam decoding at any layer combination, batch of one, with
// per-sentence wall-clock timing. Decoding keeps per-layer self-attention
// key/value caches and precomputed cross-attention projections, so each step
// costs one incremental forward rather than a full re-computation.

#include <string>
#include <vector>

#include "tiedmt/model.hpp"
#include "tiedmt/train.hpp"

namespace tiedmt {

struct BeamConfig {
  int beam = 4;
  Real alpha = static_cast<Real>(0.6);  // length-penalty exponent
  int max_len = 32;

  void validate() const;
};

// Score normalizer ((5+len)/6)^alpha; len counts emitted tokens including the
// end marker.
Real length_penalty(int len, Real alpha);

struct DecodeRecord {
  int sentence_id = 0;
  int n = 0, m = 0;
  IdSeq tokens;  // ends with the end marker unless the length cap was hit
  double seconds = 0;
  std::string mode;  // "greedy" or "beam"
  bool failed = false;
  std::string error;
};

// Emits the argmax token at each step until the end marker or max_len.
// Only encoder layers 1..n and decoder layers 1..m are ever touched.
IdSeq greedy_decode(const Parameters& params, int n, int m, const IdSeq& src,
                    int max_len, ForwardCounters* counters = nullptr);

// Length-normalized beam search. Hypotheses emitting the end marker are
// frozen; search stops once no live hypothesis's score upper bound can beat
// the best frozen score. Exact score ties keep the earlier-finished
// hypothesis.
IdSeq beam_decode(const Parameters& params, int n, int m, const IdSeq& src,
                  const BeamConfig& cfg, ForwardCounters* counters = nullptr);

// Teacher-forces `targets` through the incremental decoder and returns the
// next-token log-probability row produced before consuming each target token
// (targets.size() rows of vocab entries). Exists so tests can cross-check the
// cached incremental path against a full forward pass.
std::vector<std::vector<Real>> incremental_stepwise_logprobs(
    const Parameters& params, int n, int m, const IdSeq& src,
    const IdSeq& targets);

// Decodes a corpus one sentence at a time, timing each. Per-sentence failures
// are recorded in the output and the run continues.
std::vector<DecodeRecord> decode_corpus_timed(const Parameters& params, int n,
                                              int m,
                                              const std::vector<IdSeq>& corpus,
                                              const std::string& mode,
                                              const BeamConfig& cfg);

// Decode log: one record per line — sentence_id, n, m, mode, seconds to six
// decimal places, output text — tab-separated.
void write_decode_log(const std::string& path,
                      const std::vector<DecodeRecord>& records);
std::vector<DecodeRecord> read_decode_log(const std::string& path);

}  // namespace tiedmt
