#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "tiedmt/model.hpp"

using namespace tiedmt;

namespace {

// ---------------------------------------------------------------------------
// Straight-line reference forward, written in plain nested loops over raw
// weight buffers. Shares no code with the engine's op layer; batch of one.
// ---------------------------------------------------------------------------

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major [rows][cols]

Mat ref_linear(const Mat& x, const Tensor& w, const Tensor& b) {
  const int in = w.rows(), out = w.cols();
  Mat y(x.size(), Vec(static_cast<size_t>(out)));
  for (size_t t = 0; t < x.size(); ++t)
    for (int o = 0; o < out; ++o) {
      double acc = b.data()[static_cast<size_t>(o)];
      for (int i = 0; i < in; ++i)
        acc += x[t][static_cast<size_t>(i)] *
               w.data()[static_cast<size_t>(i) * out + o];
      y[t][static_cast<size_t>(o)] = acc;
    }
  return y;
}

Mat ref_layer_norm(const Mat& x, const LayerNormWeights& w) {
  Mat y(x.size(), Vec(x[0].size()));
  const size_t d = x[0].size();
  for (size_t t = 0; t < x.size(); ++t) {
    double mean = 0;
    for (double v : x[t]) mean += v;
    mean /= static_cast<double>(d);
    double var = 0;
    for (double v : x[t]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + 1e-6);
    for (size_t c = 0; c < d; ++c)
      y[t][c] = (x[t][c] - mean) * inv * w.gain.data()[c] + w.bias.data()[c];
  }
  return y;
}

Mat ref_attention(const Mat& q_in, const Mat& kv_in, const AttentionWeights& w,
                  int heads, bool causal) {
  Mat q = ref_linear(q_in, w.wq, w.bq);
  Mat k = ref_linear(kv_in, w.wk, w.bk);
  Mat v = ref_linear(kv_in, w.wv, w.bv);
  const size_t tq = q.size(), tk = k.size(), d = q[0].size();
  const size_t dh = d / static_cast<size_t>(heads);
  Mat mixed(tq, Vec(d, 0.0));
  for (int h = 0; h < heads; ++h) {
    size_t c0 = static_cast<size_t>(h) * dh;
    for (size_t i = 0; i < tq; ++i) {
      Vec scores(tk, -1e300);
      size_t limit = causal ? i + 1 : tk;
      double mx = -1e300;
      for (size_t j = 0; j < limit; ++j) {
        double s = 0;
        for (size_t c = 0; c < dh; ++c) s += q[i][c0 + c] * k[j][c0 + c];
        scores[j] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, scores[j]);
      }
      double z = 0;
      for (size_t j = 0; j < limit; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      for (size_t j = 0; j < limit; ++j)
        for (size_t c = 0; c < dh; ++c)
          mixed[i][c0 + c] += scores[j] / z * v[j][c0 + c];
    }
  }
  return ref_linear(mixed, w.wo, w.bo);
}

Mat ref_add(const Mat& a, const Mat& b) {
  Mat y = a;
  for (size_t t = 0; t < a.size(); ++t)
    for (size_t c = 0; c < a[0].size(); ++c) y[t][c] += b[t][c];
  return y;
}

Mat ref_ffn(const Mat& x, const FeedForwardWeights& w) {
  Mat h = ref_linear(x, w.w1, w.b1);
  for (auto& row : h)
    for (double& v : row) v = v > 0 ? v : 0;
  return ref_linear(h, w.w2, w.b2);
}

Mat ref_embed(const Parameters& p, const std::vector<int>& ids) {
  const int d = p.config.d_model;
  Mat y(ids.size(), Vec(static_cast<size_t>(d)));
  for (size_t t = 0; t < ids.size(); ++t)
    for (int c = 0; c < d; ++c) {
      double pe;
      int i = c / 2;
      double angle =
          static_cast<double>(t) * std::pow(10000.0, -2.0 * i / d);
      pe = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
      y[t][static_cast<size_t>(c)] =
          p.embedding.data()[static_cast<size_t>(ids[t]) * d + c] *
              std::sqrt(static_cast<double>(d)) +
          pe;
    }
  return y;
}

Mat ref_encode(const Parameters& p, const std::vector<int>& src, int n) {
  Mat x = ref_embed(p, src);
  for (int i = 0; i < n; ++i) {
    const EncoderLayerWeights& w = p.enc[static_cast<size_t>(i)];
    x = ref_add(x, ref_attention(ref_layer_norm(x, w.ln1),
                                 ref_layer_norm(x, w.ln1), w.self,
                                 p.config.heads, false));
    x = ref_add(x, ref_ffn(ref_layer_norm(x, w.ln2), w.ffn));
  }
  return x;
}

Mat ref_logits(const Parameters& p, const std::vector<int>& src,
               const std::vector<int>& tgt, int n, int m) {
  Mat memory = ref_layer_norm(ref_encode(p, src, n), p.enc_out_norm);
  Mat x = ref_embed(p, tgt);
  for (int j = 0; j < m; ++j) {
    const DecoderLayerWeights& w = p.dec[static_cast<size_t>(j)];
    Mat normed = ref_layer_norm(x, w.ln1);
    x = ref_add(x, ref_attention(normed, normed, w.self, p.config.heads, true));
    x = ref_add(x, ref_attention(ref_layer_norm(x, w.ln2), memory, w.cross,
                                 p.config.heads, false));
    x = ref_add(x, ref_ffn(ref_layer_norm(x, w.ln3), w.ffn));
  }
  Mat out = ref_layer_norm(x, p.final_norm);
  const int v = p.config.vocab, d = p.config.d_model;
  Mat logits(tgt.size(), Vec(static_cast<size_t>(v)));
  for (size_t t = 0; t < tgt.size(); ++t)
    for (int o = 0; o < v; ++o) {
      double acc = 0;
      for (int c = 0; c < d; ++c)
        acc += out[t][static_cast<size_t>(c)] *
               p.embedding.data()[static_cast<size_t>(o) * d + c];
      logits[t][static_cast<size_t>(o)] = acc;
    }
  return logits;
}

double max_abs_diff(const Tensor& got, const Mat& want) {
  double worst = 0;
  const int cols = got.cols();
  for (size_t t = 0; t < want.size(); ++t)
    for (int c = 0; c < cols; ++c)
      worst = std::max(worst,
                       std::abs(got.data()[t * static_cast<size_t>(cols) + c] -
                                want[t][static_cast<size_t>(c)]));
  return worst;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.d_ff = 16;
  cfg.vocab = 11;
  cfg.max_len = 12;
  return cfg;
}

}  // namespace

TEST_CASE("encoder returns all intermediate states with expected shapes") {
  ModelConfig cfg = tiny_config();
  cfg.enc_layers = 1;
  Rng rng(5);
  Parameters p = Parameters::init(cfg, rng);
  Ragged src = pack({{4, 5, 6, 2}});
  std::vector<Tensor> states = encode_all(p, src);
  REQUIRE(states.size() == 2);  // enc_0 and enc_1
  for (const Tensor& s : states) {
    CHECK(s.rows() == 4);
    CHECK(s.cols() == cfg.d_model);
  }
  CHECK_THROWS_AS(encode_all(p, pack({std::vector<int>(13, 4)})),
                  std::invalid_argument);
}

TEST_CASE("recurrent stacking aliases one physical weight set per stack") {
  ModelConfig cfg = tiny_config();
  cfg.enc_layers = 3;
  cfg.dec_layers = 3;
  cfg.recurrent_stacking = true;
  Rng rng(9);
  Parameters p = Parameters::init(cfg, rng);
  for (int i = 1; i < 3; ++i) {
    CHECK(p.enc[static_cast<size_t>(i)].self.wq.same_storage(p.enc[0].self.wq));
    CHECK(p.enc[static_cast<size_t>(i)].ffn.w1.same_storage(p.enc[0].ffn.w1));
    CHECK(p.dec[static_cast<size_t>(i)].cross.wv.same_storage(p.dec[0].cross.wv));
  }

  // Mutating the shared weights must change every level of the stack.
  Ragged src = pack({{4, 5, 2}});
  std::vector<Tensor> before = encode_all(p, src);
  p.enc[2].self.wo.data()[0] += 0.25;  // touch "layer 3" storage
  std::vector<Tensor> after = encode_all(p, src);
  for (size_t i = 1; i < before.size(); ++i) {
    bool changed = false;
    for (int64_t k = 0; k < before[i].size(); ++k)
      if (before[i].data()[static_cast<size_t>(k)] !=
          after[i].data()[static_cast<size_t>(k)])
        changed = true;
    CHECK(changed);
  }

  // A non-RS model keeps distinct storage per layer.
  cfg.recurrent_stacking = false;
  Parameters q = Parameters::init(cfg, rng);
  CHECK_FALSE(q.enc[1].self.wq.same_storage(q.enc[0].self.wq));
}

TEST_CASE("forward matches an independently coded straight-line oracle") {
  ModelConfig cfg = tiny_config();
  Rng rng(1234);
  Parameters p = Parameters::init(cfg, rng);
  std::vector<int> src = {4, 7, 9, 10, 2};
  std::vector<int> tgt = {1, 5, 6, 8};
  Ragged rs = pack({src});
  Ragged rt = pack({tgt});

  std::vector<Tensor> enc = encode_all(p, rs);
  CHECK(max_abs_diff(enc.back(), ref_encode(p, src, cfg.enc_layers)) < 1e-10);

  for (int n = 1; n <= cfg.enc_layers; ++n)
    for (int m = 1; m <= cfg.dec_layers; ++m) {
      Tensor logits = forward_combination(p, rs, rt, n, m);
      CHECK(max_abs_diff(logits, ref_logits(p, src, tgt, n, m)) < 1e-10);
    }
}

TEST_CASE("decoder states have the right count and causal structure") {
  ModelConfig cfg = tiny_config();
  Rng rng(77);
  Parameters p = Parameters::init(cfg, rng);
  Ragged src = pack({{4, 5, 2}});
  std::vector<Tensor> enc = encode_all(p, src);

  Ragged tgt = pack({{1, 5, 6}});
  std::vector<Tensor> one = decode_states(p, tgt, enc.back(), src.offsets, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].rows() == 3);
  CHECK(one[0].cols() == cfg.d_model);
  CHECK_THROWS_AS(decode_states(p, tgt, enc.back(), src.offsets, 3),
                  std::invalid_argument);

  // Changing a future target token must not affect earlier logits.
  Tensor base = forward_combination(p, src, tgt, 2, 2);
  Ragged altered = pack({{1, 5, 9}});
  Tensor changed = forward_combination(p, src, altered, 2, 2);
  for (int t = 0; t < 2; ++t)
    for (int v = 0; v < cfg.vocab; ++v)
      CHECK(base.data()[static_cast<size_t>(t) * cfg.vocab + v] ==
            changed.data()[static_cast<size_t>(t) * cfg.vocab + v]);
}

TEST_CASE("every sub-model forward is bit-identical to its extracted model") {
  ModelConfig cfg;  // toy defaults: N=M=3, d=32, heads=4, ff=64, vocab=32
  Rng rng(2024);
  Parameters p = Parameters::init(cfg, rng);
  Ragged src = pack({{4, 9, 13, 2}, {5, 2}});
  Ragged tgt = pack({{1, 6, 7}, {1, 8}});

  for (int n = 1; n <= cfg.enc_layers; ++n)
    for (int m = 1; m <= cfg.dec_layers; ++m) {
      Tensor full = forward_combination(p, src, tgt, n, m);
      Parameters sub = extract_submodel(p, n, m);
      CHECK(sub.config.enc_layers == n);
      CHECK(sub.config.dec_layers == m);
      Tensor small = forward_combination(sub, src, tgt, n, m);
      REQUIRE(full.size() == small.size());
      CHECK(std::memcmp(full.data().data(), small.data().data(),
                        full.data().size() * sizeof(Real)) == 0);
    }

  // Extraction deep-copies: mutating the parent leaves the child unchanged.
  Parameters sub = extract_submodel(p, 2, 2);
  Tensor before = forward_combination(sub, src, tgt, 2, 2);
  p.embedding.data()[3] += 1.0;
  p.enc[0].self.wq.data()[0] += 1.0;
  Tensor after = forward_combination(sub, src, tgt, 2, 2);
  CHECK(std::memcmp(before.data().data(), after.data().data(),
                    before.data().size() * sizeof(Real)) == 0);

  CHECK_THROWS_AS(extract_submodel(p, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(extract_submodel(p, 1, 4), std::invalid_argument);
  CHECK_THROWS_AS(forward_combination(p, src, tgt, 4, 1),
                  std::invalid_argument);
}

TEST_CASE("zeroed output projections make all combinations emit equal logits") {
  // With the attention output and second feed-forward matrices zeroed, every
  // layer reduces to the identity on the residual stream, so depth no longer
  // matters and all combinations give one and the same logits matrix.
  ModelConfig cfg = tiny_config();
  cfg.enc_layers = 3;
  cfg.dec_layers = 3;
  Rng rng(31);
  Parameters p = Parameters::init(cfg, rng);
  for (auto& layer : p.enc) {
    layer.self.wo = Tensor::zeros(layer.self.wo.shape());
    layer.ffn.w2 = Tensor::zeros(layer.ffn.w2.shape());
    layer.self.bo = Tensor::zeros(layer.self.bo.shape());
    layer.ffn.b2 = Tensor::zeros(layer.ffn.b2.shape());
  }
  for (auto& layer : p.dec) {
    layer.self.wo = Tensor::zeros(layer.self.wo.shape());
    layer.cross.wo = Tensor::zeros(layer.cross.wo.shape());
    layer.ffn.w2 = Tensor::zeros(layer.ffn.w2.shape());
    layer.self.bo = Tensor::zeros(layer.self.bo.shape());
    layer.cross.bo = Tensor::zeros(layer.cross.bo.shape());
    layer.ffn.b2 = Tensor::zeros(layer.ffn.b2.shape());
  }
  Ragged src = pack({{4, 5, 6, 2}});
  Ragged tgt = pack({{1, 7, 8}});
  Tensor first = forward_combination(p, src, tgt, 1, 1);
  for (int n = 1; n <= 3; ++n)
    for (int m = 1; m <= 3; ++m) {
      Tensor logits = forward_combination(p, src, tgt, n, m);
      CHECK(std::memcmp(first.data().data(), logits.data().data(),
                        first.data().size() * sizeof(Real)) == 0);
    }
}

TEST_CASE("parameter counting: formula equals enumeration, sharing collapses") {
  for (bool rs : {false, true}) {
    ModelConfig cfg = tiny_config();
    cfg.recurrent_stacking = rs;
    Rng rng(3);
    Parameters p = Parameters::init(cfg, rng);
    CHECK(p.param_count() == param_count(cfg));
  }

  // Under recurrent stacking the stack contribution is depth-independent.
  ModelConfig deep = tiny_config();
  deep.recurrent_stacking = true;
  deep.enc_layers = 6;
  deep.dec_layers = 6;
  ModelConfig shallow = deep;
  shallow.enc_layers = 1;
  shallow.dec_layers = 1;
  CHECK(param_count(deep) == param_count(shallow));

  // Exact counts for the big shared-vocabulary configuration and its variants
  // (anchors for the size-report ratios).
  ModelConfig big;
  big.enc_layers = 6;
  big.dec_layers = 6;
  big.d_model = 512;
  big.heads = 8;
  big.d_ff = 2048;
  big.vocab = 32000;
  big.max_len = 256;
  CHECK(param_count(big) == 60524544);
  ModelConfig big_rs = big;
  big_rs.recurrent_stacking = true;
  CHECK(param_count(big_rs) == 23742464);

  CHECK_THROWS_AS([] {
    ModelConfig bad;
    bad.d_model = 10;
    bad.heads = 4;  // not a divisor
    bad.validate();
  }(), std::invalid_argument);
}

TEST_CASE("layer-use counters record one-pass encoding and depth honesty") {
  ModelConfig cfg = tiny_config();
  Rng rng(8);
  Parameters p = Parameters::init(cfg, rng);
  Ragged src = pack({{4, 5, 2}});
  Ragged tgt = pack({{1, 6}});

  ForwardCounters counters;
  forward_combination(p, src, tgt, 1, 1, &counters);
  REQUIRE(counters.enc_layer_uses.size() == 2);
  CHECK(counters.enc_layer_uses[0] == 1);
  CHECK(counters.enc_layer_uses[1] == 0);  // deeper encoder never touched
  CHECK(counters.dec_layer_uses[0] == 1);
  CHECK(counters.dec_layer_uses[1] == 0);

  // One encoder pass feeding decodes at every depth: encoder layers used
  // once, decoder layers once per encoder tap.
  ForwardCounters tied;
  std::vector<Tensor> enc = encode_all(p, src, -1, &tied);
  for (int i = 1; i <= cfg.enc_layers; ++i)
    decode_states(p, tgt, enc[static_cast<size_t>(i)], src.offsets,
                  cfg.dec_layers, &tied);
  CHECK(tied.enc_layer_uses == std::vector<int>{1, 1});
  CHECK(tied.dec_layer_uses == std::vector<int>{2, 2});
}

TEST_CASE("packing validates its input") {
  CHECK_THROWS_AS(pack({}), std::invalid_argument);
  CHECK_THROWS_AS(pack({{1, 2}, {}}), std::invalid_argument);
  Ragged r = pack({{1, 2, 3}, {4}});
  CHECK(r.batch() == 2);
  CHECK(r.length(0) == 3);
  CHECK(r.length(1) == 1);
  CHECK(r.offsets == std::vector<int>{0, 3, 4});
}
