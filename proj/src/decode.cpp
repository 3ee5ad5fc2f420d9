#include "tiedmt/decode.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "tiedmt/vocab.hpp"

namespace tiedmt {

namespace {

using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ERow = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
using EVec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

Eigen::Map<const EMat> wmap(const Tensor& t) {
  return {t.data().data(), t.rows(), t.cols()};
}

Eigen::Map<const ERow> bmap(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.size())};
}

ERow row_layer_norm(const ERow& x, const LayerNormWeights& w) {
  const Eigen::Index d = x.cols();
  Real mean = x.mean();
  Real var = (x.array() - mean).square().sum() / static_cast<Real>(d);
  Real inv = Real{1} / std::sqrt(var + static_cast<Real>(1e-6));
  return ((x.array() - mean) * inv * bmap(w.gain).array() +
          bmap(w.bias).array())
      .matrix();
}

// Step-by-step decoder forward. Holds the encoder memory, per-layer
// precomputed cross-attention keys/values, and appends one row per step to
// the per-hypothesis self-attention caches.
class IncrementalDecoder {
 public:
  // Per-hypothesis mutable state; cheap to copy when a beam branches.
  struct HypState {
    std::vector<EMat> self_k, self_v;  // per layer, rows 0..len-1 are valid
    int len = 0;
  };

  IncrementalDecoder(const Parameters& params, int n, int m,
                     const IdSeq& src_symbols, ForwardCounters* counters)
      : params_(params),
        m_(m),
        d_(params.config.d_model),
        heads_(params.config.heads),
        dh_(d_ / params.config.heads),
        cap_(params.config.max_len),
        counters_(counters) {
    if (n < 1 || n > params.config.enc_layers || m < 1 ||
        m > params.config.dec_layers)
      tensor_error("decode: invalid layer combination");
    IdSeq src = src_symbols;
    src.push_back(kEosId);
    Ragged packed;
    packed.ids = std::move(src);
    packed.offsets = {0, static_cast<int>(packed.ids.size())};
    std::vector<Tensor> enc = encode_all(params, packed, n, counters);
    Tensor memory = layer_norm_rows(enc.back(), params.enc_out_norm.gain,
                                    params.enc_out_norm.bias);
    memory_ = wmap(memory);
    cross_k_.reserve(static_cast<size_t>(m));
    cross_v_.reserve(static_cast<size_t>(m));
    for (int j = 0; j < m; ++j) {
      const AttentionWeights& w = params.dec[static_cast<size_t>(j)].cross;
      cross_k_.push_back((memory_ * wmap(w.wk)).rowwise() + bmap(w.bk));
      cross_v_.push_back((memory_ * wmap(w.wv)).rowwise() + bmap(w.bv));
    }
    Tensor pe = positional_encoding(cap_, d_);
    pe_ = wmap(pe);
    if (counters_)
      counters_->dec_layer_uses.resize(
          static_cast<size_t>(params.config.dec_layers), 0);
  }

  HypState fresh() const {
    HypState st;
    st.self_k.assign(static_cast<size_t>(m_), EMat(cap_, d_));
    st.self_v.assign(static_cast<size_t>(m_), EMat(cap_, d_));
    return st;
  }

  int position_cap() const { return cap_; }

  // Feeds one input token, returns the log-probability row for the next
  // position, and advances the hypothesis state.
  std::vector<Real> step(HypState& st, int token) const {
    if (st.len >= cap_) tensor_error("decode: position cap exceeded");
    const auto& emb = params_.embedding;
    if (token < 0 || token >= emb.rows())
      tensor_error("decode: token index out of range");
    ERow x = wmap(emb).row(token) * std::sqrt(static_cast<Real>(d_)) +
             pe_.row(st.len);
    for (int j = 0; j < m_; ++j) {
      const DecoderLayerWeights& w = params_.dec[static_cast<size_t>(j)];
      ERow h = row_layer_norm(x, w.ln1);
      st.self_k[static_cast<size_t>(j)].row(st.len) =
          h * wmap(w.self.wk) + bmap(w.self.bk);
      st.self_v[static_cast<size_t>(j)].row(st.len) =
          h * wmap(w.self.wv) + bmap(w.self.bv);
      ERow q = h * wmap(w.self.wq) + bmap(w.self.bq);
      ERow mixed = attend(q, st.self_k[static_cast<size_t>(j)],
                          st.self_v[static_cast<size_t>(j)], st.len + 1);
      x += mixed * wmap(w.self.wo) + bmap(w.self.bo);

      ERow h2 = row_layer_norm(x, w.ln2);
      ERow q2 = h2 * wmap(w.cross.wq) + bmap(w.cross.bq);
      ERow mixed2 =
          attend(q2, cross_k_[static_cast<size_t>(j)],
                 cross_v_[static_cast<size_t>(j)],
                 static_cast<int>(cross_k_[static_cast<size_t>(j)].rows()));
      x += mixed2 * wmap(w.cross.wo) + bmap(w.cross.bo);

      ERow h3 = row_layer_norm(x, w.ln3);
      ERow hidden =
          ((h3 * wmap(w.ffn.w1) + bmap(w.ffn.b1)).array().max(Real{0}))
              .matrix();
      x += hidden * wmap(w.ffn.w2) + bmap(w.ffn.b2);
      if (counters_) ++counters_->dec_layer_uses[static_cast<size_t>(j)];
    }
    ++st.len;
    ERow normed = row_layer_norm(x, params_.final_norm);
    ERow logits = normed * wmap(emb).transpose();

    // Log-softmax; monotone, so greedy argmax is unaffected.
    Real mx = logits.maxCoeff();
    Real z = (logits.array() - mx).exp().sum();
    Real log_z = mx + std::log(z);
    std::vector<Real> out(static_cast<size_t>(logits.cols()));
    for (Eigen::Index v = 0; v < logits.cols(); ++v)
      out[static_cast<size_t>(v)] = logits[v] - log_z;
    return out;
  }

 private:
  ERow attend(const ERow& q, const EMat& keys, const EMat& values,
              int rows) const {
    ERow mixed = ERow::Zero(d_);
    const Real inv = Real{1} / std::sqrt(static_cast<Real>(dh_));
    for (int h = 0; h < heads_; ++h) {
      const int c0 = h * dh_;
      EVec scores = keys.block(0, c0, rows, dh_) *
                    q.segment(c0, dh_).transpose() * inv;
      Real mx = scores.maxCoeff();
      EVec weights = (scores.array() - mx).exp();
      weights /= weights.sum();
      mixed.segment(c0, dh_) =
          weights.transpose() * values.block(0, c0, rows, dh_);
    }
    return mixed;
  }

  const Parameters& params_;
  int m_, d_, heads_, dh_, cap_;
  ForwardCounters* counters_;
  EMat memory_;
  std::vector<EMat> cross_k_, cross_v_;
  EMat pe_;
};

int argmax_token(const std::vector<Real>& logp) {
  int best = 0;
  for (size_t v = 1; v < logp.size(); ++v)
    if (logp[v] > logp[static_cast<size_t>(best)]) best = static_cast<int>(v);
  return best;
}

}  // namespace

void BeamConfig::validate() const {
  if (beam < 1) tensor_error("beam config: beam must be >= 1");
  if (max_len < 1) tensor_error("beam config: max_len must be >= 1");
}

Real length_penalty(int len, Real alpha) {
  return std::pow((Real{5} + static_cast<Real>(len)) / Real{6}, alpha);
}

IdSeq greedy_decode(const Parameters& params, int n, int m, const IdSeq& src,
                    int max_len, ForwardCounters* counters) {
  if (max_len < 1) tensor_error("greedy_decode: max_len must be >= 1");
  IncrementalDecoder dec(params, n, m, src, counters);
  const int cap = std::min(max_len, dec.position_cap());
  IncrementalDecoder::HypState st = dec.fresh();
  IdSeq out;
  int token = kBosId;
  for (int t = 0; t < cap; ++t) {
    int next = argmax_token(dec.step(st, token));
    out.push_back(next);
    if (next == kEosId) break;
    token = next;
  }
  return out;
}

std::vector<std::vector<Real>> incremental_stepwise_logprobs(
    const Parameters& params, int n, int m, const IdSeq& src,
    const IdSeq& targets) {
  IncrementalDecoder dec(params, n, m, src, nullptr);
  IncrementalDecoder::HypState st = dec.fresh();
  std::vector<std::vector<Real>> rows;
  rows.reserve(targets.size());
  int token = kBosId;
  for (int target : targets) {
    rows.push_back(dec.step(st, token));
    token = target;
  }
  return rows;
}

IdSeq beam_decode(const Parameters& params, int n, int m, const IdSeq& src,
                  const BeamConfig& cfg, ForwardCounters* counters) {
  cfg.validate();
  IncrementalDecoder dec(params, n, m, src, counters);
  const int cap = std::min(cfg.max_len, dec.position_cap());

  struct Hyp {
    IncrementalDecoder::HypState st;
    IdSeq tokens;
    Real logprob = 0;
    int last = kBosId;
  };
  std::vector<Hyp> live;
  live.push_back({dec.fresh(), {}, 0, kBosId});

  bool have_best = false;
  Real best_score = -std::numeric_limits<Real>::infinity();
  IdSeq best_tokens;
  auto offer = [&](Real score, const IdSeq& tokens) {
    // Exact ties keep the earlier-finished hypothesis: only strict improvement
    // replaces (offers arrive in finish order).
    if (!have_best || score > best_score) {
      have_best = true;
      best_score = score;
      best_tokens = tokens;
    }
  };

  for (int t = 1; t <= cap && !live.empty(); ++t) {
    struct Cand {
      size_t hyp;
      int token;
      Real logprob;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * static_cast<size_t>(params.config.vocab));
    for (size_t h = 0; h < live.size(); ++h) {
      std::vector<Real> logp = dec.step(live[h].st, live[h].last);
      for (size_t v = 0; v < logp.size(); ++v)
        cands.push_back(
            {h, static_cast<int>(v), live[h].logprob + logp[v]});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.token != b.token) return a.token < b.token;
      return a.hyp < b.hyp;
    });

    std::vector<Hyp> next;
    size_t slots = std::min(cands.size(), static_cast<size_t>(cfg.beam));
    for (size_t c = 0; c < slots; ++c) {
      const Cand& cand = cands[c];
      if (cand.token == kEosId) {
        IdSeq finished = live[cand.hyp].tokens;
        finished.push_back(kEosId);
        offer(cand.logprob / length_penalty(t, cfg.alpha), finished);
      } else {
        Hyp h;
        h.st = live[cand.hyp].st;  // copy: several candidates may share a parent
        h.tokens = live[cand.hyp].tokens;
        h.tokens.push_back(cand.token);
        h.logprob = cand.logprob;
        h.last = cand.token;
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);

    if (have_best && !live.empty() && t < cap) {
      // Best reachable score of any live hypothesis: future tokens only lower
      // the log-probability, so bound over all remaining finish lengths.
      Real bound = -std::numeric_limits<Real>::infinity();
      for (const Hyp& h : live)
        for (int len = t + 1; len <= cap; ++len)
          bound = std::max(bound, h.logprob / length_penalty(len, cfg.alpha));
      if (best_score >= bound) {
        live.clear();
        break;
      }
    }
  }

  // Length cap reached: finalize survivors as-is, without an end marker.
  for (const Hyp& h : live)
    offer(h.logprob / length_penalty(cap, cfg.alpha), h.tokens);
  return best_tokens;
}

std::vector<DecodeRecord> decode_corpus_timed(const Parameters& params, int n,
                                              int m,
                                              const std::vector<IdSeq>& corpus,
                                              const std::string& mode,
                                              const BeamConfig& cfg) {
  if (mode != "greedy" && mode != "beam")
    tensor_error("decode mode must be 'greedy' or 'beam'");
  std::vector<DecodeRecord> records;
  records.reserve(corpus.size());
  for (size_t s = 0; s < corpus.size(); ++s) {
    DecodeRecord rec;
    rec.sentence_id = static_cast<int>(s);
    rec.n = n;
    rec.m = m;
    rec.mode = mode;
    auto start = std::chrono::steady_clock::now();
    try {
      rec.tokens = mode == "greedy"
                       ? greedy_decode(params, n, m, corpus[s], cfg.max_len)
                       : beam_decode(params, n, m, corpus[s], cfg);
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    rec.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    records.push_back(std::move(rec));
  }
  return records;
}

void write_decode_log(const std::string& path,
                      const std::vector<DecodeRecord>& records) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw std::runtime_error("decode log " + path + ": cannot open");
  char seconds[32];
  for (const DecodeRecord& rec : records) {
    std::snprintf(seconds, sizeof seconds, "%.6f", rec.seconds);
    file << rec.sentence_id << '\t' << rec.n << '\t' << rec.m << '\t'
         << rec.mode << '\t' << seconds << '\t'
         << (rec.failed ? "[failed] " + rec.error : detokenize(rec.tokens))
         << '\n';
  }
  if (!file) throw std::runtime_error("decode log " + path + ": write failed");
}

std::vector<DecodeRecord> read_decode_log(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("decode log " + path + ": cannot open");
  std::vector<DecodeRecord> records;
  std::string line;
  while (std::getline(file, line)) {
    std::vector<std::string> cols;
    size_t start = 0;
    for (int i = 0; i < 5; ++i) {
      size_t tab = line.find('\t', start);
      if (tab == std::string::npos)
        throw std::runtime_error("decode log " + path + ": malformed line");
      cols.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    cols.push_back(line.substr(start));
    DecodeRecord rec;
    rec.sentence_id = std::stoi(cols[0]);
    rec.n = std::stoi(cols[1]);
    rec.m = std::stoi(cols[2]);
    rec.mode = cols[3];
    rec.seconds = std::stod(cols[4]);
    if (cols[5].rfind("[failed] ", 0) == 0) {
      rec.failed = true;
      rec.error = cols[5].substr(9);
    } else {
      rec.tokens = tokenize(cols[5]);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace tiedmt
