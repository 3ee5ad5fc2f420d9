#include "tiedmt/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "tiedmt/checkpoint.hpp"
#include "tiedmt/decode.hpp"
#include "tiedmt/vocab.hpp"

namespace tiedmt {

void TrainingConfig::validate() const {
  if (steps < 1) tensor_error("training config: steps must be positive");
  if (batch_size < 1) tensor_error("training config: batch_size must be positive");
  if (warmup_steps < 0)
    tensor_error("training config: warmup must be non-negative");
  if (label_smoothing < Real{0} || label_smoothing >= Real{1})
    tensor_error("training config: label_smoothing must lie in [0,1)");
  if (aggregation != "mean")
    tensor_error("training config: only 'mean' aggregation is supported");
  if (checkpoint_every < 1 || keep_last < 1)
    tensor_error("training config: checkpoint_every and keep_last must be positive");
}

Batch make_batch(const std::vector<IdSeq>& src, const std::vector<IdSeq>& tgt) {
  if (src.empty() || src.size() != tgt.size())
    tensor_error("batch: need equally many non-empty source and target rows");
  std::vector<IdSeq> src_rows, tgt_in_rows;
  Batch batch;
  for (size_t s = 0; s < src.size(); ++s) {
    IdSeq src_row = src[s];
    src_row.push_back(kEosId);
    src_rows.push_back(std::move(src_row));
    IdSeq tgt_in_row;
    tgt_in_row.push_back(kBosId);
    tgt_in_row.insert(tgt_in_row.end(), tgt[s].begin(), tgt[s].end());
    tgt_in_rows.push_back(std::move(tgt_in_row));
    batch.tgt_out.insert(batch.tgt_out.end(), tgt[s].begin(), tgt[s].end());
    batch.tgt_out.push_back(kEosId);
  }
  batch.src = pack(src_rows);
  batch.tgt_in = pack(tgt_in_rows);
  return batch;
}

LossGrid tied_multi_loss(const Parameters& params, const Batch& batch,
                         Real label_smoothing, Tensor* overall_out,
                         ForwardCounters* counters, Rng* dropout_rng) {
  const int n_enc = params.config.enc_layers;
  const int n_dec = params.config.dec_layers;
  std::vector<Tensor> enc = encode_all(params, batch.src, -1, counters,
                                       dropout_rng);
  LossGrid grid;
  grid.enc_layers = n_enc;
  grid.dec_layers = n_dec;
  std::vector<Tensor> terms;
  terms.reserve(static_cast<size_t>(n_enc) * n_dec);
  for (int i = 1; i <= n_enc; ++i) {
    std::vector<Tensor> dec =
        decode_states(params, batch.tgt_in, enc[static_cast<size_t>(i)],
                      batch.src.offsets, n_dec, counters, dropout_rng);
    for (int j = 1; j <= n_dec; ++j) {
      Tensor logits = output_logits(params, dec[static_cast<size_t>(j - 1)]);
      Tensor loss = cross_entropy(logits, batch.tgt_out, label_smoothing);
      grid.losses.push_back(loss.item());
      terms.push_back(std::move(loss));
    }
  }
  Tensor overall = average(terms);
  grid.overall = overall.item();
  if (overall_out) *overall_out = overall;
  return grid;
}

Tensor vanilla_loss(const Parameters& params, const Batch& batch,
                    Real label_smoothing, Rng* dropout_rng) {
  Tensor logits = [&] {
    std::vector<Tensor> enc =
        encode_all(params, batch.src, -1, nullptr, dropout_rng);
    std::vector<Tensor> dec = decode_states(
        params, batch.tgt_in, enc.back(), batch.src.offsets,
        params.config.dec_layers, nullptr, dropout_rng);
    return output_logits(params, dec.back());
  }();
  return cross_entropy(logits, batch.tgt_out, label_smoothing);
}

Real noam_lr(int64_t step, int d_model, int warmup_steps, Real scale) {
  if (step < 1) tensor_error("noam_lr: step is 1-based");
  Real s = static_cast<Real>(step);
  Real warm = static_cast<Real>(std::max(warmup_steps, 1));
  Real factor = std::min(Real{1} / std::sqrt(s), s / (warm * std::sqrt(warm)));
  return scale / std::sqrt(static_cast<Real>(d_model)) * factor;
}

Adam::Adam(std::vector<Tensor> params, Real beta1, Real beta2, Real eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.size()), Real{0});
    v_.emplace_back(static_cast<size_t>(p.size()), Real{0});
  }
}

void Adam::step(Real lr) {
  ++t_;
  const Real bias1 = Real{1} - std::pow(beta1_, static_cast<Real>(t_));
  const Real bias2 = Real{1} - std::pow(beta2_, static_cast<Real>(t_));
  for (size_t p = 0; p < params_.size(); ++p) {
    std::vector<Real>& value = params_[p].data();
    const std::vector<Real>& grad = params_[p].grad();
    for (size_t i = 0; i < value.size(); ++i) {
      m_[p][i] = beta1_ * m_[p][i] + (Real{1} - beta1_) * grad[i];
      v_[p][i] = beta2_ * v_[p][i] + (Real{1} - beta2_) * grad[i] * grad[i];
      Real m_hat = m_[p][i] / bias1;
      Real v_hat = v_[p][i] / bias2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

TrainResult train(const std::string& kind, const ParallelData& corpus,
                  const TrainingConfig& tcfg, const ModelConfig& mcfg,
                  const std::string& out_dir, const std::string& tag) {
  tcfg.validate();
  mcfg.validate();
  if (kind != "vanilla" && kind != "tied-multi")
    tensor_error("train: kind must be 'vanilla' or 'tied-multi'");
  if (corpus.size() == 0 || corpus.src.size() != corpus.tgt.size())
    tensor_error("train: corpus must be non-empty and aligned");
  std::filesystem::create_directories(out_dir);

  Rng rng(tcfg.seed);
  Parameters params = Parameters::init(mcfg, rng);
  params.set_requires_grad(true);
  std::vector<Tensor> weights;
  for (auto& [name, tensor] : params.named_tensors()) weights.push_back(tensor);
  Adam adam(weights);
  // Separate stream so dropout never perturbs the batch order.
  Rng dropout_rng(tcfg.seed ^ 0x5bd1e995u);
  Rng* drop = mcfg.dropout > Real{0} ? &dropout_rng : nullptr;

  TrainResult result;
  result.log_path = out_dir + "/" + tag + ".trainlog";
  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("training log " + result.log_path +
                                     ": cannot open");

  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();  // forces a shuffle before the first batch

  char number[64];
  auto append_loss = [&](std::string& line, Real v) {
    std::snprintf(number, sizeof number, "%.12g", static_cast<double>(v));
    line += '\t';
    line += number;
  };

  for (int step = 1; step <= tcfg.steps; ++step) {
    std::vector<IdSeq> batch_src, batch_tgt;
    batch_src.reserve(static_cast<size_t>(tcfg.batch_size));
    for (int b = 0; b < tcfg.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch_src.push_back(corpus.src[order[cursor]]);
      batch_tgt.push_back(corpus.tgt[order[cursor]]);
      ++cursor;
    }
    Batch batch = make_batch(batch_src, batch_tgt);

    Real overall;
    std::string line = std::to_string(step);
    try {
      Tape tape;
      TapeScope scope(tape);
      if (kind == "tied-multi") {
        Tensor loss;
        LossGrid grid =
            tied_multi_loss(params, batch, tcfg.label_smoothing, &loss,
                            nullptr, drop);
        overall = grid.overall;
        append_loss(line, grid.overall);
        for (Real v : grid.losses) append_loss(line, v);
        if (std::isfinite(overall)) tape.backward(loss);
      } else {
        Tensor loss = vanilla_loss(params, batch, tcfg.label_smoothing, drop);
        overall = loss.item();
        append_loss(line, overall);
        if (std::isfinite(overall)) tape.backward(loss);
      }
    } catch (const std::exception& e) {
      log.flush();
      throw std::runtime_error("training failed at step " +
                               std::to_string(step) + ": " + e.what());
    }
    log << line << '\n';
    log.flush();
    if (!std::isfinite(overall))
      throw std::runtime_error("training diverged at step " +
                               std::to_string(step));

    adam.step(noam_lr(step, mcfg.d_model, tcfg.warmup_steps, tcfg.lr_scale));
    params.zero_grads();
    result.step_overall_losses.push_back(overall);

    if (step % tcfg.checkpoint_every == 0) {
      std::string path =
          out_dir + "/" + tag + ".step" + std::to_string(step) + ".ckpt";
      save_checkpoint(path, params);
      result.checkpoints.push_back(path);
      while (result.checkpoints.size() > static_cast<size_t>(tcfg.keep_last)) {
        std::filesystem::remove(result.checkpoints.front());
        result.checkpoints.erase(result.checkpoints.begin());
      }
    }
  }

  result.final_checkpoint = out_dir + "/" + tag + ".final.ckpt";
  save_checkpoint(result.final_checkpoint, params);
  return result;
}

Parameters average_checkpoints(const std::vector<Parameters>& checkpoints) {
  if (checkpoints.empty()) tensor_error("average_checkpoints: empty input");
  for (const Parameters& p : checkpoints)
    if (!(p.config == checkpoints[0].config))
      tensor_error("average_checkpoints: mixed model configs");

  // Deep copy of the first, then overwrite with the elementwise mean.
  Parameters avg = extract_submodel(checkpoints[0],
                                    checkpoints[0].config.enc_layers,
                                    checkpoints[0].config.dec_layers);
  std::vector<std::pair<std::string, Tensor>> out = avg.named_tensors();
  std::vector<std::vector<std::pair<std::string, Tensor>>> inputs;
  inputs.reserve(checkpoints.size());
  for (const Parameters& p : checkpoints) inputs.push_back(p.named_tensors());
  for (size_t t = 0; t < out.size(); ++t) {
    std::vector<Real>& data = out[t].second.data();
    for (size_t i = 0; i < data.size(); ++i) {
      Real sum = 0;
      for (const auto& input : inputs) sum += input[t].second.data()[i];
      data[i] = sum / static_cast<Real>(checkpoints.size());
    }
  }
  return avg;
}

ParallelData generate_distillation_corpus(const Parameters& parent,
                                          const std::vector<IdSeq>& sources,
                                          const BeamConfig& beam_cfg,
                                          int* failures) {
  ParallelData out;
  int failed = 0;
  for (const IdSeq& src : sources) {
    try {
      IdSeq decoded = beam_decode(parent, parent.config.enc_layers,
                                  parent.config.dec_layers, src, beam_cfg);
      if (!decoded.empty() && decoded.back() == kEosId) decoded.pop_back();
      out.src.push_back(src);
      out.tgt.push_back(std::move(decoded));
    } catch (const std::exception&) {
      ++failed;
    }
  }
  if (failures) *failures = failed;
  return out;
}

}  // namespace tiedmt
