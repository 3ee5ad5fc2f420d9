#include "tiedmt/model.hpp"

#include <cmath>
#include <string>

namespace tiedmt {

namespace {

Tensor xavier(Rng& rng, int fan_in, int fan_out) {
  Real limit = std::sqrt(Real{6} / (fan_in + fan_out));
  std::vector<Real> data(static_cast<size_t>(fan_in) * fan_out);
  for (Real& v : data) v = static_cast<Real>(rng.uniform(-limit, limit));
  return Tensor::from({fan_in, fan_out}, std::move(data));
}

LayerNormWeights init_norm(int d) {
  return {Tensor::full({d}, Real{1}), Tensor::zeros({d})};
}

AttentionWeights init_attention(Rng& rng, int d) {
  return {xavier(rng, d, d), Tensor::zeros({d}), xavier(rng, d, d),
          Tensor::zeros({d}), xavier(rng, d, d), Tensor::zeros({d}),
          xavier(rng, d, d), Tensor::zeros({d})};
}

FeedForwardWeights init_ffn(Rng& rng, int d, int d_ff) {
  return {xavier(rng, d, d_ff), Tensor::zeros({d_ff}), xavier(rng, d_ff, d),
          Tensor::zeros({d})};
}

void name_norm(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix, const LayerNormWeights& n) {
  out.emplace_back(prefix + ".gain", n.gain);
  out.emplace_back(prefix + ".bias", n.bias);
}

void name_attention(std::vector<std::pair<std::string, Tensor>>& out,
                    const std::string& prefix, const AttentionWeights& a) {
  out.emplace_back(prefix + ".wq", a.wq);
  out.emplace_back(prefix + ".bq", a.bq);
  out.emplace_back(prefix + ".wk", a.wk);
  out.emplace_back(prefix + ".bk", a.bk);
  out.emplace_back(prefix + ".wv", a.wv);
  out.emplace_back(prefix + ".bv", a.bv);
  out.emplace_back(prefix + ".wo", a.wo);
  out.emplace_back(prefix + ".bo", a.bo);
}

void name_ffn(std::vector<std::pair<std::string, Tensor>>& out,
              const std::string& prefix, const FeedForwardWeights& f) {
  out.emplace_back(prefix + ".w1", f.w1);
  out.emplace_back(prefix + ".b1", f.b1);
  out.emplace_back(prefix + ".w2", f.w2);
  out.emplace_back(prefix + ".b2", f.b2);
}

Tensor maybe_dropout(const Tensor& t, const Parameters& params, Rng* rng) {
  if (rng == nullptr || params.config.dropout <= Real{0}) return t;
  return dropout(t, params.config.dropout, *rng);
}

// Projection helper: y = x * w + b (attention heads are split downstream).
Tensor project(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_bias(matmul(x, w), b);
}

Tensor attention_block(const Parameters& params, const AttentionWeights& w,
                       const Tensor& q_input, const Tensor& kv_input,
                       bool causal, const std::vector<int>& q_offsets,
                       const std::vector<int>& kv_offsets, Rng* rng) {
  Tensor q = project(q_input, w.wq, w.bq);
  Tensor k = project(kv_input, w.wk, w.bk);
  Tensor v = project(kv_input, w.wv, w.bv);
  Tensor mixed = multihead_attention(q, k, v, params.config.heads, causal,
                                     q_offsets, kv_offsets);
  return maybe_dropout(project(mixed, w.wo, w.bo), params, rng);
}

Tensor ffn_block(const Parameters& params, const FeedForwardWeights& w,
                 const Tensor& x, Rng* rng) {
  Tensor hidden = relu(project(x, w.w1, w.b1));
  return maybe_dropout(project(hidden, w.w2, w.b2), params, rng);
}

Tensor encoder_layer(const Parameters& params, const EncoderLayerWeights& w,
                     const Tensor& x, const std::vector<int>& offsets,
                     Rng* rng) {
  Tensor normed = layer_norm_rows(x, w.ln1.gain, w.ln1.bias);
  Tensor after_attn = add(
      x, attention_block(params, w.self, normed, normed, false, offsets,
                         offsets, rng));
  Tensor normed2 = layer_norm_rows(after_attn, w.ln2.gain, w.ln2.bias);
  return add(after_attn, ffn_block(params, w.ffn, normed2, rng));
}

Tensor decoder_layer(const Parameters& params, const DecoderLayerWeights& w,
                     const Tensor& x, const Tensor& memory,
                     const std::vector<int>& tgt_offsets,
                     const std::vector<int>& src_offsets, Rng* rng) {
  Tensor normed = layer_norm_rows(x, w.ln1.gain, w.ln1.bias);
  Tensor after_self = add(
      x, attention_block(params, w.self, normed, normed, true, tgt_offsets,
                         tgt_offsets, rng));
  Tensor normed2 = layer_norm_rows(after_self, w.ln2.gain, w.ln2.bias);
  Tensor after_cross = add(
      after_self, attention_block(params, w.cross, normed2, memory, false,
                                  tgt_offsets, src_offsets, rng));
  Tensor normed3 = layer_norm_rows(after_cross, w.ln3.gain, w.ln3.bias);
  return add(after_cross, ffn_block(params, w.ffn, normed3, rng));
}

// Embedding + position rows for a packed batch; shared by both stacks.
Tensor embed_tokens(const Parameters& params, const Ragged& batch, Rng* rng) {
  const ModelConfig& cfg = params.config;
  for (int b = 0; b < batch.batch(); ++b)
    if (batch.length(b) > cfg.max_len)
      tensor_error("sequence length " + std::to_string(batch.length(b)) +
                   " exceeds max_len " + std::to_string(cfg.max_len));
  Tensor embedded = embedding_rows(params.embedding, batch.ids,
                                   std::sqrt(static_cast<Real>(cfg.d_model)));
  static thread_local Tensor pe_table;
  static thread_local int pe_len = 0, pe_dim = 0;
  if (pe_len != cfg.max_len || pe_dim != cfg.d_model) {
    pe_table = positional_encoding(cfg.max_len, cfg.d_model);
    pe_len = cfg.max_len;
    pe_dim = cfg.d_model;
  }
  std::vector<int> positions(batch.ids.size());
  for (int b = 0; b < batch.batch(); ++b)
    for (int t = 0; t < batch.length(b); ++t)
      positions[static_cast<size_t>(batch.offsets[b] + t)] = t;
  Tensor pe_rows = embedding_rows(pe_table, positions);
  return maybe_dropout(add(embedded, pe_rows), params, rng);
}

}  // namespace

void ModelConfig::validate() const {
  if (enc_layers < 1 || dec_layers < 1)
    tensor_error("config: enc_layers and dec_layers must be >= 1");
  if (d_model < 1 || heads < 1 || d_model % heads != 0)
    tensor_error("config: d_model must be positive and divisible by heads");
  if (d_ff < 1 || vocab < 1 || max_len < 1)
    tensor_error("config: d_ff, vocab, max_len must be positive");
  if (dropout < Real{0} || dropout >= Real{1})
    tensor_error("config: dropout must lie in [0,1)");
}

Parameters Parameters::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  Parameters p;
  p.config = config;
  const int d = config.d_model;
  {
    // Embedding drawn at scale 1/sqrt(d); the forward multiplies by sqrt(d).
    std::vector<Real> data(static_cast<size_t>(config.vocab) * d);
    Real s = Real{1} / std::sqrt(static_cast<Real>(d));
    for (Real& v : data) v = static_cast<Real>(rng.normal(0.0, s));
    p.embedding = Tensor::from({config.vocab, d}, std::move(data));
  }
  const int physical_enc = config.recurrent_stacking ? 1 : config.enc_layers;
  const int physical_dec = config.recurrent_stacking ? 1 : config.dec_layers;
  for (int i = 0; i < physical_enc; ++i)
    p.enc.push_back({init_norm(d), init_attention(rng, d), init_norm(d),
                     init_ffn(rng, d, config.d_ff)});
  for (int j = 0; j < physical_dec; ++j)
    p.dec.push_back({init_norm(d), init_attention(rng, d), init_norm(d),
                     init_attention(rng, d), init_norm(d),
                     init_ffn(rng, d, config.d_ff)});
  if (config.recurrent_stacking) {
    // All logical layers alias the single physical weight set.
    while (static_cast<int>(p.enc.size()) < config.enc_layers)
      p.enc.push_back(p.enc[0]);
    while (static_cast<int>(p.dec.size()) < config.dec_layers)
      p.dec.push_back(p.dec[0]);
  }
  p.enc_out_norm = init_norm(d);
  p.final_norm = init_norm(d);
  return p;
}

std::vector<std::pair<std::string, Tensor>> Parameters::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding", embedding);
  const int physical_enc = config.recurrent_stacking ? 1 : config.enc_layers;
  const int physical_dec = config.recurrent_stacking ? 1 : config.dec_layers;
  for (int i = 0; i < physical_enc; ++i) {
    std::string prefix = "enc." + std::to_string(i);
    name_norm(out, prefix + ".ln1", enc[static_cast<size_t>(i)].ln1);
    name_attention(out, prefix + ".self", enc[static_cast<size_t>(i)].self);
    name_norm(out, prefix + ".ln2", enc[static_cast<size_t>(i)].ln2);
    name_ffn(out, prefix + ".ffn", enc[static_cast<size_t>(i)].ffn);
  }
  for (int j = 0; j < physical_dec; ++j) {
    std::string prefix = "dec." + std::to_string(j);
    name_norm(out, prefix + ".ln1", dec[static_cast<size_t>(j)].ln1);
    name_attention(out, prefix + ".self", dec[static_cast<size_t>(j)].self);
    name_norm(out, prefix + ".ln2", dec[static_cast<size_t>(j)].ln2);
    name_attention(out, prefix + ".cross", dec[static_cast<size_t>(j)].cross);
    name_norm(out, prefix + ".ln3", dec[static_cast<size_t>(j)].ln3);
    name_ffn(out, prefix + ".ffn", dec[static_cast<size_t>(j)].ffn);
  }
  name_norm(out, "enc_out_norm", enc_out_norm);
  name_norm(out, "final_norm", final_norm);
  return out;
}

int64_t Parameters::param_count() const {
  int64_t total = 0;
  for (const auto& [name, tensor] : named_tensors()) total += tensor.size();
  return total;
}

void Parameters::set_requires_grad(bool b) {
  for (auto& [name, tensor] : named_tensors())
    const_cast<Tensor&>(tensor).set_requires_grad(b);
}

void Parameters::zero_grads() {
  for (auto& [name, tensor] : named_tensors())
    const_cast<Tensor&>(tensor).zero_grad();
}

int64_t param_count(const ModelConfig& config) {
  config.validate();
  const int64_t d = config.d_model, f = config.d_ff;
  const int64_t enc_layer = 4 * d * d + 2 * d * f + 9 * d + f;
  const int64_t dec_layer = 8 * d * d + 2 * d * f + 15 * d + f;
  const int64_t n_enc = config.recurrent_stacking ? 1 : config.enc_layers;
  const int64_t n_dec = config.recurrent_stacking ? 1 : config.dec_layers;
  return static_cast<int64_t>(config.vocab) * d + n_enc * enc_layer +
         n_dec * dec_layer + 4 * d;
}

Ragged pack(const std::vector<std::vector<int>>& sequences) {
  if (sequences.empty()) tensor_error("pack: empty batch");
  Ragged r;
  r.offsets.push_back(0);
  for (const auto& seq : sequences) {
    if (seq.empty()) tensor_error("pack: empty sequence in batch");
    r.ids.insert(r.ids.end(), seq.begin(), seq.end());
    r.offsets.push_back(static_cast<int>(r.ids.size()));
  }
  return r;
}

Tensor positional_encoding(int max_len, int d_model) {
  std::vector<Real> data(static_cast<size_t>(max_len) * d_model);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d_model / 2; ++i) {
      double angle = pos * std::pow(10000.0, -2.0 * i / d_model);
      data[static_cast<size_t>(pos) * d_model + 2 * i] =
          static_cast<Real>(std::sin(angle));
      data[static_cast<size_t>(pos) * d_model + 2 * i + 1] =
          static_cast<Real>(std::cos(angle));
    }
  }
  return Tensor::from({max_len, d_model}, std::move(data));
}

std::vector<Tensor> encode_all(const Parameters& params, const Ragged& src,
                               int upto, ForwardCounters* counters,
                               Rng* dropout_rng) {
  const int n_layers = params.config.enc_layers;
  if (upto < 0) upto = n_layers;
  if (upto > n_layers) tensor_error("encode_all: depth exceeds enc_layers");
  if (counters) counters->enc_layer_uses.resize(static_cast<size_t>(n_layers), 0);
  std::vector<Tensor> states;
  states.reserve(static_cast<size_t>(upto) + 1);
  states.push_back(embed_tokens(params, src, dropout_rng));
  for (int i = 1; i <= upto; ++i) {
    states.push_back(encoder_layer(params, params.enc[static_cast<size_t>(i - 1)],
                                   states.back(), src.offsets, dropout_rng));
    if (counters) ++counters->enc_layer_uses[static_cast<size_t>(i - 1)];
  }
  return states;
}

std::vector<Tensor> decode_states(const Parameters& params, const Ragged& tgt,
                                  const Tensor& enc_state,
                                  const std::vector<int>& src_offsets, int m,
                                  ForwardCounters* counters, Rng* dropout_rng) {
  const int n_layers = params.config.dec_layers;
  if (m < 1 || m > n_layers) tensor_error("decode_states: depth exceeds dec_layers");
  if (counters) counters->dec_layer_uses.resize(static_cast<size_t>(n_layers), 0);
  Tensor memory = layer_norm_rows(enc_state, params.enc_out_norm.gain,
                                  params.enc_out_norm.bias);
  std::vector<Tensor> states;
  states.reserve(static_cast<size_t>(m));
  Tensor x = embed_tokens(params, tgt, dropout_rng);
  for (int j = 1; j <= m; ++j) {
    x = decoder_layer(params, params.dec[static_cast<size_t>(j - 1)], x, memory,
                      tgt.offsets, src_offsets, dropout_rng);
    states.push_back(x);
    if (counters) ++counters->dec_layer_uses[static_cast<size_t>(j - 1)];
  }
  return states;
}

Tensor output_logits(const Parameters& params, const Tensor& dec_state) {
  Tensor normed = layer_norm_rows(dec_state, params.final_norm.gain,
                                  params.final_norm.bias);
  return matmul_nt(normed, params.embedding);
}

Tensor forward_combination(const Parameters& params, const Ragged& src,
                           const Ragged& tgt, int n, int m,
                           ForwardCounters* counters) {
  if (n < 1 || n > params.config.enc_layers || m < 1 ||
      m > params.config.dec_layers)
    tensor_error("forward_combination: invalid layer combination");
  std::vector<Tensor> enc = encode_all(params, src, n, counters);
  std::vector<Tensor> dec = decode_states(params, tgt, enc.back(), src.offsets,
                                          m, counters);
  return output_logits(params, dec.back());
}

Parameters extract_submodel(const Parameters& params, int n, int m) {
  if (n < 1 || n > params.config.enc_layers || m < 1 ||
      m > params.config.dec_layers)
    tensor_error("extract_submodel: invalid layer combination");
  Parameters sub;
  sub.config = params.config;
  sub.config.enc_layers = n;
  sub.config.dec_layers = m;

  auto clone = [](const Tensor& t) {
    return Tensor::from(t.shape(), t.data(), t.requires_grad());
  };
  auto clone_norm = [&](const LayerNormWeights& w) {
    return LayerNormWeights{clone(w.gain), clone(w.bias)};
  };
  auto clone_attention = [&](const AttentionWeights& w) {
    return AttentionWeights{clone(w.wq), clone(w.bq), clone(w.wk), clone(w.bk),
                            clone(w.wv), clone(w.bv), clone(w.wo), clone(w.bo)};
  };
  auto clone_ffn = [&](const FeedForwardWeights& w) {
    return FeedForwardWeights{clone(w.w1), clone(w.b1), clone(w.w2),
                              clone(w.b2)};
  };

  sub.embedding = clone(params.embedding);
  if (params.config.recurrent_stacking) {
    EncoderLayerWeights e{clone_norm(params.enc[0].ln1),
                          clone_attention(params.enc[0].self),
                          clone_norm(params.enc[0].ln2),
                          clone_ffn(params.enc[0].ffn)};
    DecoderLayerWeights dcp{clone_norm(params.dec[0].ln1),
                            clone_attention(params.dec[0].self),
                            clone_norm(params.dec[0].ln2),
                            clone_attention(params.dec[0].cross),
                            clone_norm(params.dec[0].ln3),
                            clone_ffn(params.dec[0].ffn)};
    for (int i = 0; i < n; ++i) sub.enc.push_back(e);
    for (int j = 0; j < m; ++j) sub.dec.push_back(dcp);
  } else {
    for (int i = 0; i < n; ++i)
      sub.enc.push_back({clone_norm(params.enc[static_cast<size_t>(i)].ln1),
                         clone_attention(params.enc[static_cast<size_t>(i)].self),
                         clone_norm(params.enc[static_cast<size_t>(i)].ln2),
                         clone_ffn(params.enc[static_cast<size_t>(i)].ffn)});
    for (int j = 0; j < m; ++j)
      sub.dec.push_back({clone_norm(params.dec[static_cast<size_t>(j)].ln1),
                         clone_attention(params.dec[static_cast<size_t>(j)].self),
                         clone_norm(params.dec[static_cast<size_t>(j)].ln2),
                         clone_attention(params.dec[static_cast<size_t>(j)].cross),
                         clone_norm(params.dec[static_cast<size_t>(j)].ln3),
                         clone_ffn(params.dec[static_cast<size_t>(j)].ffn)});
  }
  sub.enc_out_norm = clone_norm(params.enc_out_norm);
  sub.final_norm = clone_norm(params.final_norm);
  return sub;
}

}  // namespace tiedmt
