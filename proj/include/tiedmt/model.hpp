#pragma once

// Tied-multi Transformer: one parameter set usable at any encoder/decoder
// depth pair (n, m). Pre-layer-norm residual blocks, shared embedding and
// output projection, sinusoidal positions. Optional recurrent stacking makes
// every layer of a stack alias one physical weight set.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tiedmt/ops.hpp"
#include "tiedmt/rng.hpp"
#include "tiedmt/tensor.hpp"

namespace tiedmt {

struct ModelConfig {
  int enc_layers = 3;  // N
  int dec_layers = 3;  // M
  int d_model = 32;
  int heads = 4;
  int d_ff = 64;
  int vocab = 32;
  int max_len = 32;
  bool recurrent_stacking = false;
  Real dropout = 0;

  void validate() const;  // throws std::invalid_argument on bad fields
  bool operator==(const ModelConfig&) const = default;
};

struct LayerNormWeights {
  Tensor gain, bias;
};

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardWeights {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayerWeights {
  LayerNormWeights ln1;
  AttentionWeights self;
  LayerNormWeights ln2;
  FeedForwardWeights ffn;
};

struct DecoderLayerWeights {
  LayerNormWeights ln1;
  AttentionWeights self;
  LayerNormWeights ln2;
  AttentionWeights cross;
  LayerNormWeights ln3;
  FeedForwardWeights ffn;
};

struct Parameters {
  ModelConfig config;
  Tensor embedding;  // [vocab, d_model]; doubles as the output projection
  std::vector<EncoderLayerWeights> enc;  // N entries; aliases one set under RS
  std::vector<DecoderLayerWeights> dec;  // M entries; aliases one set under RS
  LayerNormWeights enc_out_norm;  // applied to the tapped encoder state
  LayerNormWeights final_norm;    // applied to every tapped decoder state

  static Parameters init(const ModelConfig& config, Rng& rng);

  // Physical tensors in a fixed canonical order (shared RS layers appear
  // once). This order defines checkpoint layout and optimizer slot order.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;

  int64_t param_count() const;  // number of learnable scalars
  void set_requires_grad(bool b);
  void zero_grads();
};

// Closed-form learnable-parameter count for a config; must equal
// Parameters::param_count() of an initialized model.
int64_t param_count(const ModelConfig& config);

// Variable-length sequences stacked along the row axis: row block b covers
// rows [offsets[b], offsets[b+1]). Avoids padding entirely.
struct Ragged {
  std::vector<int> ids;      // concatenated token ids
  std::vector<int> offsets;  // batch_size + 1 row offsets, offsets[0] == 0

  int batch() const { return static_cast<int>(offsets.size()) - 1; }
  int length(int b) const { return offsets[b + 1] - offsets[b]; }
};

Ragged pack(const std::vector<std::vector<int>>& sequences);

// Sinusoidal position table [max_len, d_model]; not learnable.
Tensor positional_encoding(int max_len, int d_model);

// Counts layer applications by logical layer index (0-based). Lets tests
// assert one-pass training economy and decode depth honesty.
struct ForwardCounters {
  std::vector<int> enc_layer_uses;
  std::vector<int> dec_layer_uses;
};

// Runs the embedding plus encoder layers 1..upto (upto = N when negative),
// returning enc_0..enc_upto. Each layer is computed exactly once.
std::vector<Tensor> encode_all(const Parameters& params, const Ragged& src,
                               int upto = -1, ForwardCounters* counters = nullptr,
                               Rng* dropout_rng = nullptr);

// Runs decoder layers 1..m over the target prefix with cross-attention into
// the given tapped encoder state; returns dec_1..dec_m.
std::vector<Tensor> decode_states(const Parameters& params, const Ragged& tgt,
                                  const Tensor& enc_state,
                                  const std::vector<int>& src_offsets, int m,
                                  ForwardCounters* counters = nullptr,
                                  Rng* dropout_rng = nullptr);

// Shared final norm + shared output projection over a decoder state.
Tensor output_logits(const Parameters& params, const Tensor& dec_state);

// Full (n, m) sub-model forward producing logits for every target position.
Tensor forward_combination(const Parameters& params, const Ragged& src,
                           const Ragged& tgt, int n, int m,
                           ForwardCounters* counters = nullptr);

// Deep-copies the first n encoder / m decoder layers into a standalone
// smaller model. Its forward must match forward_combination bit for bit.
Parameters extract_submodel(const Parameters& params, int n, int m);

}  // namespace tiedmt
