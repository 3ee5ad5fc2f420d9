#pragma once

// Training loops: vanilla single-loss baseline and the tied-multi regime that
// averages one cross-entropy per encoder/decoder depth pair, plus the Adam
// optimizer, checkpoint averaging, and distillation-corpus generation.

#include <cstdint>
#include <string>
#include <vector>

#include "tiedmt/model.hpp"

namespace tiedmt {

struct BeamConfig;  // decode.hpp

using IdSeq = std::vector<int>;

// Symbol-id sentence pairs (no begin/end markers; those are added when the
// model inputs are assembled).
struct ParallelData {
  std::vector<IdSeq> src;
  std::vector<IdSeq> tgt;

  size_t size() const { return src.size(); }
};

struct TrainingConfig {
  int steps = 2000;
  int batch_size = 32;
  Real lr_scale = 1;        // multiplier on the warmup schedule
  int warmup_steps = 400;
  Real label_smoothing = static_cast<Real>(0.1);
  std::string aggregation = "mean";
  uint64_t seed = 1;
  int checkpoint_every = 500;
  int keep_last = 2;

  void validate() const;
};

// All per-combination losses of one batch, row-major with the decoder index
// fastest, plus their mean.
struct LossGrid {
  int enc_layers = 0, dec_layers = 0;
  std::vector<Real> losses;
  Real overall = 0;

  Real at(int n, int m) const {
    return losses[static_cast<size_t>((n - 1) * dec_layers + (m - 1))];
  }
};

// Model-ready views of a batch of sentence pairs.
struct Batch {
  Ragged src;               // source symbols + end marker
  Ragged tgt_in;            // begin marker + target symbols
  std::vector<int> tgt_out; // target symbols + end marker, flattened
};

Batch make_batch(const std::vector<IdSeq>& src, const std::vector<IdSeq>& tgt);

// Mean of the enc_layers × dec_layers cross-entropies. When `overall_out` is
// non-null the differentiable scalar is stored there (caller provides the
// active tape).
LossGrid tied_multi_loss(const Parameters& params, const Batch& batch,
                         Real label_smoothing, Tensor* overall_out = nullptr,
                         ForwardCounters* counters = nullptr,
                         Rng* dropout_rng = nullptr);

// Single loss at full depth; equals the (N, M) entry of the grid.
Tensor vanilla_loss(const Parameters& params, const Batch& batch,
                    Real label_smoothing, Rng* dropout_rng = nullptr);

// Inverse-square-root schedule with linear warmup; step is 1-based.
Real noam_lr(int64_t step, int d_model, int warmup_steps, Real scale);

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, Real beta1 = static_cast<Real>(0.9),
                Real beta2 = static_cast<Real>(0.98),
                Real eps = static_cast<Real>(1e-9));
  void step(Real lr);  // consumes current grads; caller zeroes them after
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<Real>> m_, v_;
  Real beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

struct TrainResult {
  std::vector<std::string> checkpoints;  // kept periodic saves, oldest first
  std::string final_checkpoint;
  std::vector<Real> step_overall_losses;
  std::string log_path;
};

// Deterministic training driver. kind is "vanilla" or "tied-multi". Writes
// periodic checkpoints, a final checkpoint, and a tab-separated training log
// (step, overall loss, then per-combination losses for tied-multi) under
// out_dir with the given tag. Throws on non-finite loss, naming the step.
TrainResult train(const std::string& kind, const ParallelData& corpus,
                  const TrainingConfig& tcfg, const ModelConfig& mcfg,
                  const std::string& out_dir, const std::string& tag);

// Elementwise mean of checkpoints; all must share one config.
Parameters average_checkpoints(const std::vector<Parameters>& checkpoints);

// Beam-decodes every source sentence at full depth to build the
// pseudo-parallel corpus for distillation. Failed sentences are skipped and
// counted. Order-preserving.
ParallelData generate_distillation_corpus(const Parameters& parent,
                                          const std::vector<IdSeq>& sources,
                                          const BeamConfig& beam_cfg,
                                          int* failures = nullptr);

}  // namespace tiedmt
