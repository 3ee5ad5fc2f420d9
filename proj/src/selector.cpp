#include "tiedmt/selector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "tiedmt/checkpoint.hpp"
#include "tiedmt/decode.hpp"
#include "tiedmt/ops.hpp"
#include "tiedmt/rng.hpp"
#include "tiedmt/toy.hpp"
#include "tiedmt/vocab.hpp"

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

Tensor project(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_bias(matmul(x, w), b);
}

// Pre-layer-norm residual block pair, mirroring the translation encoder.
Tensor selector_block(const SelectorParameters& params,
                      const EncoderLayerWeights& w, const Tensor& x,
                      const std::vector<int>& offsets) {
  Tensor normed = layer_norm_rows(x, w.ln1.gain, w.ln1.bias);
  Tensor q = project(normed, w.self.wq, w.self.bq);
  Tensor k = project(normed, w.self.wk, w.self.bk);
  Tensor v = project(normed, w.self.wv, w.self.bv);
  Tensor mixed = multihead_attention(q, k, v, params.config.heads, false,
                                     offsets, offsets);
  Tensor after_attn = add(x, project(mixed, w.self.wo, w.self.bo));
  Tensor normed2 = layer_norm_rows(after_attn, w.ln2.gain, w.ln2.bias);
  Tensor hidden = relu(project(normed2, w.ffn.w1, w.ffn.b1));
  return add(after_attn, project(hidden, w.ffn.w2, w.ffn.b2));
}

std::vector<Real> flatten_labels(const SelectorDataset& dataset,
                                 const std::vector<size_t>& rows) {
  std::vector<Real> flat;
  flat.reserve(rows.size() * static_cast<size_t>(dataset.enc_layers *
                                                 dataset.dec_layers));
  for (size_t r : rows)
    for (Real v : dataset.examples[r].y) flat.push_back(v);
  return flat;
}

void validate_dataset(const SelectorDataset& dataset) {
  if (dataset.enc_layers < 1 || dataset.dec_layers < 1)
    throw std::invalid_argument("selector dataset: missing grid shape");
  const size_t k = static_cast<size_t>(dataset.enc_layers) *
                   static_cast<size_t>(dataset.dec_layers);
  if (dataset.examples.empty())
    throw std::invalid_argument("selector dataset: no examples");
  for (const MultiLabelExample& ex : dataset.examples) {
    if (ex.tokens.empty())
      throw std::invalid_argument("selector dataset: empty sentence");
    if (ex.y.size() != k)
      throw std::invalid_argument("selector dataset: label width mismatch");
    bool any = false;
    for (Real v : ex.y) {
      if (v != Real{0} && v != Real{1})
        throw std::invalid_argument("selector dataset: labels must be 0/1");
      any = any || v == Real{1};
    }
    if (!any)
      throw std::invalid_argument(
          "selector dataset: every example needs a positive label");
  }
}

}  // namespace

void SelectorConfig::validate() const {
  if (layers < 1 || heads < 1 || d_ff < 1)
    throw std::invalid_argument("selector config: layers, heads, d_ff must be positive");
  if (lambda < Real{0} || lambda > Real{1})
    throw std::invalid_argument("selector config: lambda must lie in [0,1]");
  if (beta <= Real{0})
    throw std::invalid_argument("selector config: beta must be positive");
  if (threshold <= Real{0} || threshold >= Real{1})
    throw std::invalid_argument("selector config: threshold must lie in (0,1)");
  if (alpha < Real{0})
    throw std::invalid_argument("selector config: alpha must be non-negative");
  if (learning_rate < Real{0})
    throw std::invalid_argument("selector config: learning rate must be non-negative");
  if (momentum < Real{0} || momentum >= Real{1})
    throw std::invalid_argument("selector config: momentum must lie in [0,1)");
  if (epochs < 1 || batch_size < 1)
    throw std::invalid_argument("selector config: epochs and batch_size must be positive");
}

std::vector<std::pair<std::string, Tensor>> SelectorParameters::named_tensors()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding", embedding);
  for (size_t i = 0; i < blocks.size(); ++i) {
    std::string prefix = "block." + std::to_string(i);
    name_norm(out, prefix + ".ln1", blocks[i].ln1);
    name_attention(out, prefix + ".self", blocks[i].self);
    name_norm(out, prefix + ".ln2", blocks[i].ln2);
    name_ffn(out, prefix + ".ffn", blocks[i].ffn);
  }
  name_norm(out, "out_norm", out_norm);
  out.emplace_back("out.w", out_w);
  out.emplace_back("out.b", out_b);
  return out;
}

void SelectorParameters::set_requires_grad(bool b) {
  for (auto& [name, t] : named_tensors()) t.set_requires_grad(b);
}

void SelectorParameters::zero_grads() {
  for (auto& [name, t] : named_tensors()) t.zero_grad();
}

std::vector<Real> class_weights(const std::vector<int64_t>& label_counts,
                                Real alpha) {
  if (label_counts.empty())
    throw std::invalid_argument("class_weights: no classes");
  int64_t total = 0;
  for (int64_t c : label_counts) {
    if (c < 0) throw std::invalid_argument("class_weights: negative count");
    total += c;
  }
  if (total == 0)
    throw std::invalid_argument("class_weights: all counts are zero");
  std::vector<Real> delta;
  delta.reserve(label_counts.size());
  for (int64_t c : label_counts) {
    Real p = static_cast<Real>(c) / static_cast<Real>(total);
    delta.push_back(std::pow(Real{1} - p, alpha));
  }
  return delta;
}

Tensor selector_probs_batch(const SelectorParameters& params,
                            const std::vector<IdSeq>& sentences) {
  if (sentences.empty())
    throw std::invalid_argument("selector: empty batch");
  std::vector<IdSeq> with_cls;
  with_cls.reserve(sentences.size());
  for (const IdSeq& s : sentences) {
    if (s.empty()) throw std::invalid_argument("selector: empty sentence");
    IdSeq row = s;
    row.push_back(kClsId);
    if (static_cast<int>(row.size()) > params.max_len)
      throw std::invalid_argument(
          "selector: sentence length " + std::to_string(s.size()) +
          " exceeds max_len " + std::to_string(params.max_len - 1));
    with_cls.push_back(std::move(row));
  }
  Ragged batch = pack(with_cls);

  Tensor embedded =
      embedding_rows(params.embedding, batch.ids,
                     std::sqrt(static_cast<Real>(params.d_model)));
  static thread_local Tensor pe_table;
  static thread_local int pe_len = 0, pe_dim = 0;
  if (pe_len != params.max_len || pe_dim != params.d_model) {
    pe_table = positional_encoding(params.max_len, params.d_model);
    pe_len = params.max_len;
    pe_dim = params.d_model;
  }
  std::vector<int> positions(batch.ids.size());
  for (int b = 0; b < batch.batch(); ++b)
    for (int t = 0; t < batch.length(b); ++t)
      positions[static_cast<size_t>(batch.offsets[b] + t)] = t;
  Tensor x = add(embedded, embedding_rows(pe_table, positions));

  for (const EncoderLayerWeights& block : params.blocks)
    x = selector_block(params, block, x, batch.offsets);
  Tensor normed =
      layer_norm_rows(x, params.out_norm.gain, params.out_norm.bias);

  // Fixed read-out: the classification token is always the last row of each
  // sentence.
  std::vector<int> cls_rows(static_cast<size_t>(batch.batch()));
  for (int b = 0; b < batch.batch(); ++b)
    cls_rows[static_cast<size_t>(b)] = batch.offsets[b + 1] - 1;
  Tensor cls = gather_rows(normed, cls_rows);
  return sigmoid(project(cls, params.out_w, params.out_b));
}

std::vector<Real> selector_forward(const SelectorParameters& params,
                                   const IdSeq& tokens) {
  Tensor probs = selector_probs_batch(params, {tokens});
  return probs.data();
}

Tensor selector_loss(const Tensor& probs, const std::vector<Real>& targets,
                     const std::vector<Real>& class_delta,
                     const SelectorConfig& config) {
  config.validate();
  std::vector<Real> sample_weights(
      static_cast<size_t>(probs.rows()), Real{1});
  Tensor bce = weighted_bce(probs, targets, class_delta, sample_weights);
  Tensor fb = f_beta_loss(probs, targets, config.beta);
  return add(scale(bce, config.lambda), scale(fb, Real{1} - config.lambda));
}

LayerCombination select_combination(const std::vector<Real>& probs,
                                    Real threshold, int enc_layers,
                                    int dec_layers) {
  if (static_cast<int>(probs.size()) != enc_layers * dec_layers)
    throw std::invalid_argument("select_combination: wrong probability count");
  Real best = probs[0];
  for (Real p : probs) best = std::max(best, p);
  if (best < threshold) return {enc_layers, dec_layers};  // back-off
  LayerCombination chosen{0, 0};
  bool have = false;
  for (int n = 1; n <= enc_layers; ++n)
    for (int m = 1; m <= dec_layers; ++m) {
      if (probs[static_cast<size_t>((n - 1) * dec_layers + (m - 1))] != best)
        continue;
      LayerCombination c{n, m};
      if (!have || is_faster(c, chosen)) {
        chosen = c;
        have = true;
      }
    }
  return chosen;
}

SelectorDataset build_selector_dataset(const Parameters& model,
                                       const ParallelData& corpus,
                                       const std::string& mode,
                                       const BeamConfig& beam_cfg) {
  if (mode != "greedy" && mode != "beam")
    throw std::invalid_argument("selector dataset: mode must be 'greedy' or 'beam'");
  if (corpus.size() == 0 || corpus.src.size() != corpus.tgt.size())
    throw std::invalid_argument("selector dataset: corpus must be non-empty and aligned");
  SelectorDataset dataset;
  dataset.enc_layers = model.config.enc_layers;
  dataset.dec_layers = model.config.dec_layers;

  for (size_t s = 0; s < corpus.size(); ++s) {
    CombinationGrid grid;
    grid.enc_layers = dataset.enc_layers;
    grid.dec_layers = dataset.dec_layers;
    std::string reference = detokenize(corpus.tgt[s]);
    bool ok = true;
    for (int n = 1; n <= dataset.enc_layers && ok; ++n)
      for (int m = 1; m <= dataset.dec_layers && ok; ++m) {
        try {
          IdSeq out = mode == "greedy"
                          ? greedy_decode(model, n, m, corpus.src[s],
                                          beam_cfg.max_len)
                          : beam_decode(model, n, m, corpus.src[s], beam_cfg);
          grid.values.push_back(
              sentence_chrf(detokenize(out), reference));
        } catch (const std::exception&) {
          ok = false;
        }
      }
    if (!ok) {
      ++dataset.failures;
      continue;
    }
    OracleLabel label = oracle_label_set(grid);
    MultiLabelExample ex;
    ex.tokens = corpus.src[s];
    ex.y.assign(grid.values.size(), 0);
    for (const LayerCombination& c : label.best)
      ex.y[static_cast<size_t>((c.n - 1) * dataset.dec_layers + (c.m - 1))] =
          1;
    dataset.examples.push_back(std::move(ex));
  }
  validate_dataset(dataset);
  return dataset;
}

void write_selector_dataset(const std::string& path,
                            const SelectorDataset& dataset) {
  validate_dataset(dataset);
  std::ofstream file(path, std::ios::trunc);
  if (!file)
    throw std::runtime_error("selector dataset " + path + ": cannot open");
  file << "# selector dataset N=" << dataset.enc_layers
       << " M=" << dataset.dec_layers
       << " (labels decoder-index fastest)\n";
  for (const MultiLabelExample& ex : dataset.examples) {
    file << detokenize(ex.tokens) << '\t';
    for (size_t k = 0; k < ex.y.size(); ++k) {
      if (k) file << ' ';
      file << (ex.y[k] == Real{1} ? '1' : '0');
    }
    file << '\n';
  }
  if (!file)
    throw std::runtime_error("selector dataset " + path + ": write failed");
}

SelectorDataset read_selector_dataset(const std::string& path) {
  std::ifstream file(path);
  if (!file)
    throw std::runtime_error("selector dataset " + path + ": cannot open");
  std::string header;
  SelectorDataset dataset;
  if (!std::getline(file, header) ||
      std::sscanf(header.c_str(), "# selector dataset N=%d M=%d",
                  &dataset.enc_layers, &dataset.dec_layers) != 2)
    throw std::runtime_error("selector dataset " + path + ": missing header");
  std::string line;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("selector dataset " + path +
                               ": malformed line");
    MultiLabelExample ex;
    ex.tokens = tokenize(line.substr(0, tab));
    std::istringstream labels(line.substr(tab + 1));
    int bit;
    while (labels >> bit) ex.y.push_back(static_cast<Real>(bit));
    dataset.examples.push_back(std::move(ex));
  }
  validate_dataset(dataset);
  return dataset;
}

NesterovSgd::NesterovSgd(std::vector<Tensor> params, Real momentum)
    : params_(std::move(params)), momentum_(momentum) {
  if (momentum_ < Real{0} || momentum_ >= Real{1})
    throw std::invalid_argument("nesterov: momentum must lie in [0,1)");
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_)
    velocity_.emplace_back(p.data().size(), Real{0});
}

void NesterovSgd::step(Real lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const std::vector<Real>& g = p.grad();
    std::vector<Real>& v = velocity_[i];
    std::vector<Real>& value = p.data();
    for (size_t k = 0; k < value.size(); ++k) {
      v[k] = momentum_ * v[k] + g[k];
      value[k] -= lr * (g[k] + momentum_ * v[k]);
    }
  }
}

SelectorEpochStats evaluate_selector(const SelectorParameters& params,
                                     const SelectorDataset& dataset) {
  validate_dataset(dataset);
  const int k_classes = dataset.enc_layers * dataset.dec_layers;
  std::vector<int64_t> tp(static_cast<size_t>(k_classes), 0);
  std::vector<int64_t> fp(static_cast<size_t>(k_classes), 0);
  std::vector<int64_t> fn(static_cast<size_t>(k_classes), 0);

  std::vector<IdSeq> sentences;
  sentences.reserve(dataset.size());
  for (const MultiLabelExample& ex : dataset.examples)
    sentences.push_back(ex.tokens);
  Tensor probs = selector_probs_batch(params, sentences);

  for (size_t i = 0; i < dataset.size(); ++i)
    for (int k = 0; k < k_classes; ++k) {
      bool predicted =
          probs.data()[i * static_cast<size_t>(k_classes) +
                       static_cast<size_t>(k)] >= params.config.threshold;
      bool actual = dataset.examples[i].y[static_cast<size_t>(k)] == Real{1};
      if (predicted && actual) ++tp[static_cast<size_t>(k)];
      if (predicted && !actual) ++fp[static_cast<size_t>(k)];
      if (!predicted && actual) ++fn[static_cast<size_t>(k)];
    }

  // Macro average over classes that actually occur in the data.
  SelectorEpochStats stats;
  const Real b2 = params.config.beta * params.config.beta;
  int supported = 0;
  for (int k = 0; k < k_classes; ++k) {
    size_t idx = static_cast<size_t>(k);
    if (tp[idx] + fn[idx] == 0) continue;
    ++supported;
    Real p = tp[idx] + fp[idx] == 0
                 ? Real{0}
                 : static_cast<Real>(tp[idx]) /
                       static_cast<Real>(tp[idx] + fp[idx]);
    Real r = static_cast<Real>(tp[idx]) /
             static_cast<Real>(tp[idx] + fn[idx]);
    stats.macro_precision += p;
    stats.macro_recall += r;
    Real denom = b2 * p + r;
    stats.macro_f += denom == Real{0}
                         ? Real{0}
                         : (Real{1} + b2) * p * r / denom;
  }
  if (supported > 0) {
    stats.macro_precision /= static_cast<Real>(supported);
    stats.macro_recall /= static_cast<Real>(supported);
    stats.macro_f /= static_cast<Real>(supported);
  }
  return stats;
}

namespace {

// The shared epoch loop. `rng` arrives mid-stream from the fresh-init path so
// weight draws and batch shuffles consume one deterministic sequence.
SelectorTrainResult run_selector_training(SelectorParameters sp,
                                          const SelectorDataset& dataset,
                                          const SelectorConfig& config,
                                          Rng& rng);

}  // namespace

SelectorTrainResult train_selector(const SelectorDataset& dataset,
                                   const Parameters& translation_model,
                                   const SelectorConfig& config) {
  config.validate();
  validate_dataset(dataset);
  const ModelConfig& mc = translation_model.config;
  if (dataset.enc_layers != mc.enc_layers ||
      dataset.dec_layers != mc.dec_layers)
    throw std::invalid_argument(
        "train_selector: dataset grid does not match the translation model");
  if (mc.d_model % config.heads != 0)
    throw std::invalid_argument(
        "train_selector: selector heads must divide the embedding width");

  SelectorParameters sp;
  sp.config = config;
  sp.enc_layers = mc.enc_layers;
  sp.dec_layers = mc.dec_layers;
  sp.d_model = mc.d_model;
  sp.vocab = mc.vocab;
  sp.max_len = mc.max_len;
  const int k_classes = sp.combinations();

  Rng rng(config.seed);
  // Word representations start from the translation model's table.
  sp.embedding = Tensor::from({mc.vocab, mc.d_model},
                              translation_model.embedding.data());
  for (int i = 0; i < config.layers; ++i) {
    EncoderLayerWeights block;
    block.ln1 = init_norm(mc.d_model);
    block.self = {xavier(rng, mc.d_model, mc.d_model),
                  Tensor::zeros({mc.d_model}),
                  xavier(rng, mc.d_model, mc.d_model),
                  Tensor::zeros({mc.d_model}),
                  xavier(rng, mc.d_model, mc.d_model),
                  Tensor::zeros({mc.d_model}),
                  xavier(rng, mc.d_model, mc.d_model),
                  Tensor::zeros({mc.d_model})};
    block.ln2 = init_norm(mc.d_model);
    block.ffn = {xavier(rng, mc.d_model, config.d_ff),
                 Tensor::zeros({config.d_ff}),
                 xavier(rng, config.d_ff, mc.d_model),
                 Tensor::zeros({mc.d_model})};
    sp.blocks.push_back(std::move(block));
  }
  sp.out_norm = init_norm(mc.d_model);
  sp.out_w = xavier(rng, mc.d_model, k_classes);
  sp.out_b = Tensor::zeros({k_classes});
  return run_selector_training(std::move(sp), dataset, config, rng);
}

SelectorTrainResult train_selector(const SelectorDataset& dataset,
                                   SelectorParameters initial,
                                   const SelectorConfig& config) {
  config.validate();
  validate_dataset(dataset);
  if (dataset.enc_layers != initial.enc_layers ||
      dataset.dec_layers != initial.dec_layers)
    throw std::invalid_argument(
        "train_selector: dataset grid does not match the selector");

  // The architecture is already materialized in the tensors; adopt only the
  // loss and optimizer settings from the new configuration.
  SelectorConfig merged = config;
  merged.layers = initial.config.layers;
  merged.heads = initial.config.heads;
  merged.d_ff = initial.config.d_ff;
  initial.config = merged;

  Rng rng(merged.seed);
  return run_selector_training(std::move(initial), dataset, merged, rng);
}

std::vector<SelectorConfig> selector_grid(const SelectorConfig& base) {
  std::vector<SelectorConfig> grid;
  for (Real alpha : {Real(0.5), Real(1), Real(2)})
    for (Real beta : {Real(1), Real(2)})
      for (Real lambda : {Real(0.25), Real(0.5), Real(0.75)}) {
        SelectorConfig candidate = base;
        candidate.alpha = alpha;
        candidate.beta = beta;
        candidate.lambda = lambda;
        grid.push_back(candidate);
      }
  return grid;
}

namespace {

SelectorTrainResult run_selector_training(SelectorParameters sp,
                                          const SelectorDataset& dataset,
                                          const SelectorConfig& config,
                                          Rng& rng) {
  const int k_classes = sp.combinations();
  sp.set_requires_grad(true);
  sp.zero_grads();

  SelectorTrainResult result;

  std::vector<int64_t> counts(static_cast<size_t>(k_classes), 0);
  for (const MultiLabelExample& ex : dataset.examples)
    for (int k = 0; k < k_classes; ++k)
      if (ex.y[static_cast<size_t>(k)] == Real{1})
        ++counts[static_cast<size_t>(k)];
  std::vector<Real> delta = class_weights(counts, config.alpha);

  std::vector<Tensor> weights;
  for (auto& [name, t] : sp.named_tensors()) weights.push_back(t);
  NesterovSgd sgd(weights, config.momentum);

  std::vector<size_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    Real loss_sum = 0;
    int batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(order.size(),
                            start + static_cast<size_t>(config.batch_size));
      std::vector<size_t> rows(order.begin() + static_cast<long>(start),
                               order.begin() + static_cast<long>(end));
      std::vector<IdSeq> sentences;
      sentences.reserve(rows.size());
      for (size_t r : rows) sentences.push_back(dataset.examples[r].tokens);
      std::vector<Real> targets = flatten_labels(dataset, rows);

      Real batch_loss;
      try {
        Tape tape;
        TapeScope scope(tape);
        Tensor probs = selector_probs_batch(sp, sentences);
        Tensor loss = selector_loss(probs, targets, delta, config);
        batch_loss = loss.item();
        if (std::isfinite(batch_loss)) tape.backward(loss);
      } catch (const std::exception& e) {
        throw std::runtime_error("selector training failed at epoch " +
                                 std::to_string(epoch) + ": " + e.what());
      }
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("selector training diverged at epoch " +
                                 std::to_string(epoch));
      sgd.step(config.learning_rate);
      sp.zero_grads();
      loss_sum += batch_loss;
      ++batches;
    }
    SelectorEpochStats stats = evaluate_selector(sp, dataset);
    stats.loss = loss_sum / static_cast<Real>(batches);
    result.epochs.push_back(stats);
  }
  result.params = std::move(sp);
  return result;
}

}  // namespace

void save_selector(const std::string& path, const SelectorParameters& params) {
  CheckpointPayload payload;
  payload.kind = kKindSelector;
  payload.fields = {static_cast<uint32_t>(params.config.layers),
                    static_cast<uint32_t>(params.config.heads),
                    static_cast<uint32_t>(params.d_model),
                    static_cast<uint32_t>(params.config.d_ff),
                    static_cast<uint32_t>(params.vocab),
                    static_cast<uint32_t>(params.max_len),
                    static_cast<uint32_t>(params.enc_layers),
                    static_cast<uint32_t>(params.dec_layers)};
  payload.extra = static_cast<float>(params.config.threshold);
  payload.tensors = params.named_tensors();
  save_payload(path, payload);
}

SelectorParameters load_selector(const std::string& path) {
  CheckpointPayload payload = load_payload(path);
  if (payload.kind != kKindSelector)
    throw std::invalid_argument("checkpoint " + path +
                                ": not a selector checkpoint");
  SelectorParameters sp;
  sp.config.layers = static_cast<int>(payload.fields[0]);
  sp.config.heads = static_cast<int>(payload.fields[1]);
  sp.d_model = static_cast<int>(payload.fields[2]);
  sp.config.d_ff = static_cast<int>(payload.fields[3]);
  sp.vocab = static_cast<int>(payload.fields[4]);
  sp.max_len = static_cast<int>(payload.fields[5]);
  sp.enc_layers = static_cast<int>(payload.fields[6]);
  sp.dec_layers = static_cast<int>(payload.fields[7]);
  sp.config.threshold = static_cast<Real>(payload.extra);

  // Zero-shaped skeleton; every record is filled from the payload below.
  sp.embedding = Tensor::zeros({sp.vocab, sp.d_model});
  for (int i = 0; i < sp.config.layers; ++i) {
    EncoderLayerWeights block;
    block.ln1 = init_norm(sp.d_model);
    block.self = {Tensor::zeros({sp.d_model, sp.d_model}),
                  Tensor::zeros({sp.d_model}),
                  Tensor::zeros({sp.d_model, sp.d_model}),
                  Tensor::zeros({sp.d_model}),
                  Tensor::zeros({sp.d_model, sp.d_model}),
                  Tensor::zeros({sp.d_model}),
                  Tensor::zeros({sp.d_model, sp.d_model}),
                  Tensor::zeros({sp.d_model})};
    block.ln2 = init_norm(sp.d_model);
    block.ffn = {Tensor::zeros({sp.d_model, sp.config.d_ff}),
                 Tensor::zeros({sp.config.d_ff}),
                 Tensor::zeros({sp.config.d_ff, sp.d_model}),
                 Tensor::zeros({sp.d_model})};
    sp.blocks.push_back(std::move(block));
  }
  sp.out_norm = init_norm(sp.d_model);
  sp.out_w = Tensor::zeros({sp.d_model, sp.combinations()});
  sp.out_b = Tensor::zeros({sp.combinations()});

  std::map<std::string, Tensor> loaded;
  for (auto& [name, tensor] : payload.tensors) {
    if (!loaded.emplace(name, tensor).second)
      throw std::invalid_argument("checkpoint " + path + ": duplicate record " +
                                  name);
  }
  auto expected = sp.named_tensors();
  if (loaded.size() != expected.size())
    throw std::invalid_argument("checkpoint " + path +
                                ": unexpected record count");
  for (auto& [name, target] : expected) {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw std::invalid_argument("checkpoint " + path + ": missing record " +
                                  name);
    if (it->second.shape() != target.shape())
      throw std::invalid_argument("checkpoint " + path +
                                  ": shape mismatch for " + name);
    target.data() = it->second.data();
  }
  return sp;
}

}  // namespace tiedmt
