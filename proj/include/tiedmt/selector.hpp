#pragma once

// A-priori depth selector: a self-attention encoder over the source sentence
// with an appended classification token, a K-way sigmoid output over the
// layer combinations, trained with interpolated class-weighted BCE and a soft
// macro F-measure under SGD with Nesterov momentum.

#include <cstdint>
#include <string>
#include <vector>

#include "tiedmt/metrics.hpp"
#include "tiedmt/model.hpp"
#include "tiedmt/train.hpp"

namespace tiedmt {

struct BeamConfig;  // decode.hpp

struct SelectorConfig {
  int layers = 2;
  int heads = 4;
  int d_ff = 64;
  Real alpha = 1;     // class-weight exponent
  Real beta = 2;      // F-measure recall weight
  Real lambda = static_cast<Real>(0.5);  // BCE share of the loss
  Real threshold = static_cast<Real>(0.5);
  Real learning_rate = static_cast<Real>(0.2);
  Real momentum = static_cast<Real>(0.9);  // Nesterov coefficient
  int epochs = 20;
  int batch_size = 16;
  uint64_t seed = 1;

  void validate() const;
};

// Selector weights. The embedding starts as a copy of the translation
// model's table; encoder blocks mirror the translation encoder's layout with
// the selector's own feed-forward width.
struct SelectorParameters {
  SelectorConfig config;
  int enc_layers = 0;  // translation model depths: define K = N*M
  int dec_layers = 0;
  int d_model = 0;
  int vocab = 0;
  int max_len = 0;
  Tensor embedding;
  std::vector<EncoderLayerWeights> blocks;
  LayerNormWeights out_norm;
  Tensor out_w;  // [d_model, K]
  Tensor out_b;  // [K]

  int combinations() const { return enc_layers * dec_layers; }
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  void set_requires_grad(bool b);
  void zero_grads();
};

// One training example: a source sentence and its K-dimensional 0/1 label
// vector (at least one positive).
struct MultiLabelExample {
  IdSeq tokens;
  std::vector<Real> y;
};

struct SelectorDataset {
  int enc_layers = 0;
  int dec_layers = 0;
  std::vector<MultiLabelExample> examples;
  int failures = 0;  // sentences dropped because some combination failed

  size_t size() const { return examples.size(); }
};

// delta_k = (1 - count_k / sum(counts))^alpha. All-zero counts are an error.
std::vector<Real> class_weights(const std::vector<int64_t>& label_counts,
                                Real alpha);

// Appends the classification token, runs the selector encoder, and returns
// the K sigmoid outputs of the classification position for each sentence.
// Rows follow the CombinationGrid layout (decoder index fastest).
Tensor selector_probs_batch(const SelectorParameters& params,
                            const std::vector<IdSeq>& sentences);
std::vector<Real> selector_forward(const SelectorParameters& params,
                                   const IdSeq& tokens);

// lambda * weighted BCE + (1 - lambda) * soft macro F_beta, over [B,K] probs
// and flattened 0/1 targets.
Tensor selector_loss(const Tensor& probs, const std::vector<Real>& targets,
                     const std::vector<Real>& class_delta,
                     const SelectorConfig& config);

// Highest sigmoid output if it reaches the threshold (exact ties resolved by
// the speed ordering), otherwise the full-depth back-off (N, M).
LayerCombination select_combination(const std::vector<Real>& probs,
                                    Real threshold, int enc_layers,
                                    int dec_layers);

// Decodes every sentence with all K combinations of the translation model,
// scores each against the reference with sentence chrF, and labels every
// argmax-tied combination positive. Sentences where any combination fails to
// decode are excluded and counted.
SelectorDataset build_selector_dataset(const Parameters& model,
                                       const ParallelData& corpus,
                                       const std::string& mode,
                                       const BeamConfig& beam_cfg);

// Dataset file: a header declaring the grid, then one line per example —
// sentence text, tab, K space-separated 0/1 labels.
void write_selector_dataset(const std::string& path,
                            const SelectorDataset& dataset);
SelectorDataset read_selector_dataset(const std::string& path);

// SGD with Nesterov momentum: v = mu*v + g, then p -= lr*(g + mu*v).
class NesterovSgd {
 public:
  NesterovSgd(std::vector<Tensor> params, Real momentum);
  void step(Real lr);  // consumes current grads; caller zeroes them after

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<Real>> velocity_;
  Real momentum_;
};

struct SelectorEpochStats {
  Real loss = 0;
  Real macro_precision = 0;
  Real macro_recall = 0;
  Real macro_f = 0;
};

struct SelectorTrainResult {
  SelectorParameters params;
  std::vector<SelectorEpochStats> epochs;
};

// Thresholded macro precision/recall/F_beta over the dataset; classes with no
// positive examples are excluded from the macro average.
SelectorEpochStats evaluate_selector(const SelectorParameters& params,
                                     const SelectorDataset& dataset);

// Deterministic mini-batch training. The embedding is initialized from the
// translation model's table; everything else from the seed. Throws on
// non-finite loss, naming the epoch.
SelectorTrainResult train_selector(const SelectorDataset& dataset,
                                   const Parameters& translation_model,
                                   const SelectorConfig& config);

// Fine-tuning: continues training from existing selector weights. The
// architecture (layers, heads, d_ff) stays as built; optimizer and loss
// settings are adopted from `config`.
SelectorTrainResult train_selector(const SelectorDataset& dataset,
                                   SelectorParameters initial,
                                   const SelectorConfig& config);

// The small fixed hyper-parameter grid around a base configuration:
// alpha in {0.5, 1, 2} x beta in {1, 2} x lambda in {0.25, 0.5, 0.75},
// alpha-major, beta next, lambda fastest. All other fields copy the base.
std::vector<SelectorConfig> selector_grid(const SelectorConfig& base);

// Selector checkpoints (kind 1) under the shared container format.
void save_selector(const std::string& path, const SelectorParameters& params);
SelectorParameters load_selector(const std::string& path);

}  // namespace tiedmt
